use serde::{Deserialize, Serialize};
use std::fmt;

/// Ising configuration of up to 64 sites. Bit `i` holds site `i`: 0 is spin up, 1 is spin down.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpinConfig(pub u64);

impl SpinConfig {
    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_down(self, site: usize) -> bool {
        (self.0 >> site) & 1 == 1
    }

    #[inline]
    pub fn flip(self, site: usize) -> Self {
        SpinConfig(self.0 ^ (1u64 << site))
    }

    #[inline]
    pub fn flip_pair(self, i: usize, j: usize) -> Self {
        SpinConfig(self.0 ^ (1u64 << i) ^ (1u64 << j))
    }

    pub fn n_down(self) -> u32 {
        self.0.count_ones()
    }

    /// Twice the total S^z, i.e. `#up - #down`, on an `n`-site system.
    pub fn two_sz(self, n: usize) -> i32 {
        n as i32 - 2 * self.n_down() as i32
    }

    /// The `width`-bit local word formed by `sites`, bit `k` taken from `sites[k]`.
    pub fn gather(self, sites: &[usize]) -> usize {
        sites
            .iter()
            .enumerate()
            .fold(0usize, |acc, (k, &s)| acc | ((((self.0 >> s) & 1) as usize) << k))
    }

    /// Writes the local word `local` onto `sites`, leaving other sites untouched.
    pub fn scatter(self, sites: &[usize], local: usize) -> Self {
        let mut w = self.0;
        for (k, &s) in sites.iter().enumerate() {
            w &= !(1u64 << s);
            w |= (((local >> k) & 1) as u64) << s;
        }
        SpinConfig(w)
    }

    /// Binary string with site 0 rightmost.
    pub fn to_bitstring(self, n: usize) -> String {
        (0..n).rev().map(|i| if self.is_down(i) { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

impl From<u64> for SpinConfig {
    fn from(v: u64) -> Self {
        SpinConfig(v)
    }
}

pub(crate) fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Iterates all `n`-bit words with exactly `k` set bits in increasing order (Gosper's hack).
pub fn fixed_weight_words(n: usize, k: usize) -> impl Iterator<Item = u64> {
    let limit_ok = k <= n && n <= 64;
    let mut next = if !limit_ok {
        None
    } else if k == 0 {
        Some(0u64)
    } else {
        Some(full_mask(k))
    };
    let top = full_mask(n);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 || cur.count_ones() as usize == n {
            None
        } else {
            let c = cur & cur.wrapping_neg();
            let r = cur.wrapping_add(c);
            if r == 0 {
                None
            } else {
                let nxt = (((r ^ cur) >> 2) / c) | r;
                if nxt & !top != 0 {
                    None
                } else {
                    Some(nxt)
                }
            }
        };
        Some(cur)
    })
}
