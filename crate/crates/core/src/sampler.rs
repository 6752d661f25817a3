//! Exact, independent sampling of real-space configurations from `|phi|^2`.
//!
//! Because every isometry has orthonormal rows, summing `|phi|^2` over the
//! configurations of the blocks right of bond `i` contracts to a right
//! environment `R_i` built from the tensors alone. Blocks are then drawn left to
//! right, one spin at a time, from exact conditionals. Samples outside the target
//! magnetization or with vanishing sector norm are rejected.

use crate::ansatz::HybridState;
use crate::error::{Error, Result};
use crate::spin::SpinConfig;
use crate::symmetry::SymmetryGroup;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::io::Write;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Samples drawn per independent random stream.
pub const CHUNK_SIZE: usize = 256;

/// Largest system for which [`chi_square_audit`] enumerates all configurations.
pub const AUDIT_MAX_SITES: usize = 20;

/// Right environments of the `|phi|^2` transfer contraction.
#[derive(Clone, Debug)]
pub struct Environment {
    // right[i] is the dr x dr matrix right of block i, row-major, trace-normalized
    right: Vec<Vec<Complex64>>,
    dims: Vec<usize>,
    ln_scale: Vec<f64>,
    ln_norm_sqr: f64,
}

impl Environment {
    pub fn new(state: &HybridState) -> Self {
        let tensors = state.tensors();
        let nb = tensors.len();
        let mut right = vec![Vec::new(); nb];
        let mut dims = vec![1; nb];
        let mut ln_scale = vec![0.0; nb];
        right[nb - 1] = vec![Complex64::new(1.0, 0.0)];
        for i in (1..nb).rev() {
            let t = &tensors[i];
            let (dl, dr) = (t.left, t.right);
            let r = &right[i];
            let mut m = vec![ZERO; dl * dl];
            let mut br = vec![ZERO; dl * dr];
            for g in 0..t.chi {
                let b = &t.data[g * dl * dr..(g + 1) * dl * dr];
                // br = B_g R
                br.fill(ZERO);
                for l in 0..dl {
                    for k in 0..dr {
                        let x = b[l * dr + k];
                        if x == ZERO {
                            continue;
                        }
                        for r2 in 0..dr {
                            br[l * dr + r2] += x * r[k * dr + r2];
                        }
                    }
                }
                // m += br B_g^dagger
                for l in 0..dl {
                    for l2 in 0..dl {
                        let mut s = ZERO;
                        for k in 0..dr {
                            s += br[l * dr + k] * b[l2 * dr + k].conj();
                        }
                        m[l * dl + l2] += s;
                    }
                }
            }
            let tr: f64 = (0..dl).map(|l| m[l * dl + l].re).sum();
            let (scale, ok) = if tr > 0.0 && tr.is_finite() { (tr, true) } else { (1.0, false) };
            m.iter_mut().for_each(|x| *x /= scale);
            right[i - 1] = m;
            dims[i - 1] = dl;
            ln_scale[i - 1] = ln_scale[i] + if ok { scale.ln() } else { f64::NEG_INFINITY };
        }
        // close with block 0
        let t = &tensors[0];
        let dr = t.right;
        let r = &right[0];
        let mut z = 0.0;
        for g in 0..t.chi {
            let b = &t.data[g * dr..(g + 1) * dr];
            for k in 0..dr {
                for k2 in 0..dr {
                    z += (b[k] * r[k * dr + k2] * b[k2].conj()).re;
                }
            }
        }
        let ln_norm_sqr = if z > 0.0 { z.ln() + ln_scale[0] } else { f64::NEG_INFINITY };
        Environment {
            right,
            dims,
            ln_scale,
            ln_norm_sqr,
        }
    }

    /// `sum_a |phi(a)|^2` over all real-space configurations.
    pub fn norm_sqr(&self) -> f64 {
        self.ln_norm_sqr.exp()
    }

    pub fn ln_norm_sqr(&self) -> f64 {
        self.ln_norm_sqr
    }

    /// The environment right of block `i`, rescaled to its true magnitude.
    pub fn right(&self, i: usize) -> Vec<Complex64> {
        let s = self.ln_scale[i].exp();
        self.right[i].iter().map(|x| x * s).collect()
    }

    pub fn right_dim(&self, i: usize) -> usize {
        self.dims[i]
    }
}

/// Builds the right environments of `state`.
pub fn precompute_environments(state: &HybridState) -> Environment {
    Environment::new(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectionReason {
    WrongMagnetization,
    ZeroNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub a_real: SpinConfig,
    /// Representative of `a_real`; equal to `a_real` for magnetization rejections.
    pub a_repr: SpinConfig,
    /// Index of a group element with `g a_real = a_repr`.
    pub group_element: usize,
    pub rejection: Option<RejectionReason>,
}

impl SampleRecord {
    pub fn accepted(&self) -> bool {
        self.rejection.is_none()
    }
}

/// `(a_repr, a_real)` of an accepted sample.
pub fn to_symmetric(record: &SampleRecord) -> Result<(SpinConfig, SpinConfig)> {
    match record.rejection {
        None => Ok((record.a_repr, record.a_real)),
        Some(RejectionReason::ZeroNorm) => Err(Error::ZeroNorm {
            config: record.a_real.0,
        }),
        Some(RejectionReason::WrongMagnetization) => Err(Error::NotInBasis {
            config: record.a_real.0,
        }),
    }
}

/// Classifies a real-space configuration against the sector of `group`.
pub fn classify(group: &SymmetryGroup, a_real: SpinConfig) -> SampleRecord {
    if !group.matches_magnetization(a_real) {
        return SampleRecord {
            a_real,
            a_repr: a_real,
            group_element: 0,
            rejection: Some(RejectionReason::WrongMagnetization),
        };
    }
    let (a_repr, g, norm) = group.representative_with_norm(a_real);
    SampleRecord {
        a_real,
        a_repr,
        group_element: g,
        rejection: (norm == 0.0).then_some(RejectionReason::ZeroNorm),
    }
}

fn draw_inner<R: Rng + ?Sized>(
    state: &HybridState,
    env: &Environment,
    rng: &mut R,
    mut trace: Option<&mut Vec<[f64; 2]>>,
) -> Result<SpinConfig> {
    let d = state.dims();
    let b = d.block_size;
    let dim = 1usize << b;
    let mut ell: Vec<Complex64> = vec![Complex64::new(1.0, 0.0)];
    let mut config = SpinConfig(0);
    let mut q = vec![0.0f64; dim];
    let mut u = Vec::new();
    for i in 0..d.n_blocks {
        let t = &state.tensors()[i];
        let (dl, dr) = (t.left, t.right);
        let r = &env.right[i];
        u.clear();
        u.resize(dim * dr, ZERO);
        for idx in 0..dim {
            let m = state.block_matrix(i, idx);
            let ui = &mut u[idx * dr..(idx + 1) * dr];
            for l in 0..dl {
                let x = ell[l];
                if x == ZERO {
                    continue;
                }
                for (o, &y) in ui.iter_mut().zip(&m[l * dr..(l + 1) * dr]) {
                    *o += x * y;
                }
            }
            let mut s = 0.0;
            for k in 0..dr {
                let mut rk = ZERO;
                for k2 in 0..dr {
                    rk += r[k * dr + k2] * ui[k2].conj();
                }
                s += (ui[k] * rk).re;
            }
            q[idx] = s.max(0.0);
        }
        // spins of the block one at a time, bit k of the word is site blocks[i][k]
        let mut prefix = 0usize;
        for k in 0..b {
            let mask = (1usize << k) - 1;
            let mut w = [0.0f64; 2];
            for (idx, &qi) in q.iter().enumerate() {
                if idx & mask == prefix {
                    w[(idx >> k) & 1] += qi;
                }
            }
            let total = w[0] + w[1];
            if total <= 0.0 || !total.is_finite() {
                return Err(Error::DegenerateState);
            }
            let p_up = w[0] / total;
            let p = [p_up, 1.0 - p_up];
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(p);
            }
            let s = if rng.random::<f64>() < p_up { 0 } else { 1 };
            prefix |= s << k;
        }
        config = config.scatter(&state.lattice().blocks[i], prefix);
        ell.clear();
        ell.extend_from_slice(&u[prefix * dr..(prefix + 1) * dr]);
        let m = ell.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        if m == 0.0 {
            return Err(Error::DegenerateState);
        }
        ell.iter_mut().for_each(|x| *x /= m);
    }
    Ok(config)
}

/// One real-space configuration drawn exactly from `|phi|^2 / sum |phi|^2`.
pub fn draw_real<R: Rng + ?Sized>(state: &HybridState, env: &Environment, rng: &mut R) -> Result<SpinConfig> {
    draw_inner(state, env, rng, None)
}

/// As [`draw_real`], also returning the `(p_up, p_down)` conditional used for every spin
/// in sampling order.
pub fn draw_real_with_conditionals<R: Rng + ?Sized>(
    state: &HybridState,
    env: &Environment,
    rng: &mut R,
) -> Result<(SpinConfig, Vec<[f64; 2]>)> {
    let mut trace = Vec::with_capacity(state.dims().n_sites);
    let a = draw_inner(state, env, rng, Some(&mut trace))?;
    Ok((a, trace))
}

/// Draws one configuration and classifies it against the sector.
pub fn draw_sample<R: Rng + ?Sized>(
    state: &HybridState,
    env: &Environment,
    group: &SymmetryGroup,
    rng: &mut R,
) -> Result<SampleRecord> {
    let a = draw_real(state, env, rng)?;
    Ok(classify(group, a))
}

/// Random stream for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub records: Vec<SampleRecord>,
}

impl SampleBatch {
    pub fn n_drawn(&self) -> usize {
        self.records.len()
    }

    pub fn n_accepted(&self) -> usize {
        self.records.iter().filter(|r| r.accepted()).count()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.n_accepted() as f64 / self.records.len() as f64
        }
    }

    pub fn accepted(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(|r| r.accepted())
    }
}

/// Draws `n` configurations. Chunk `c` of [`CHUNK_SIZE`] samples uses stream `c` of
/// the seeded generator, so the result does not depend on `parallel` or the thread count.
pub fn draw_samples(
    state: &HybridState,
    env: &Environment,
    group: &SymmetryGroup,
    n: usize,
    seed: u64,
    parallel: bool,
) -> Result<SampleBatch> {
    let n_chunks = n.div_ceil(CHUNK_SIZE);
    let run = |c: usize| -> Result<Vec<SampleRecord>> {
        let mut rng = chunk_rng(seed, c);
        let len = CHUNK_SIZE.min(n - c * CHUNK_SIZE);
        (0..len).map(|_| draw_sample(state, env, group, &mut rng)).collect()
    };
    let chunks: Vec<Result<Vec<SampleRecord>>> = if parallel {
        (0..n_chunks).into_par_iter().map(run).collect()
    } else {
        (0..n_chunks).map(run).collect()
    };
    let mut records = Vec::with_capacity(n);
    for c in chunks {
        records.extend(c?);
    }
    Ok(SampleBatch { records })
}

/// Writes one line per sample: `a_real a_repr accepted` with configurations as
/// bitstrings (site 0 rightmost) and `accepted` as 0 or 1.
pub fn write_sample_dump<W: Write>(records: &[SampleRecord], n_sites: usize, mut w: W) -> Result<()> {
    for r in records {
        writeln!(
            w,
            "{} {} {}",
            r.a_real.to_bitstring(n_sites),
            r.a_repr.to_bitstring(n_sites),
            u8::from(r.accepted())
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub n_samples: usize,
    pub n_bins: usize,
}

/// Pearson test of observed counts against expected counts. Bins with expected
/// count below 5 are pooled; a pooled bin still below 5 joins the smallest regular bin.
pub fn chi_square_test(observed: &[u64], expected: &[f64]) -> Result<ChiSquareReport> {
    assert_eq!(observed.len(), expected.len());
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e >= 5.0 {
            bins.push((o as f64, e));
        } else {
            pooled.0 += o as f64;
            pooled.1 += e;
        }
    }
    if pooled.1 >= 5.0 {
        bins.push(pooled);
    } else if pooled.1 > 0.0 || pooled.0 > 0.0 {
        match bins
            .iter_mut()
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            Some(b) => {
                b.0 += pooled.0;
                b.1 += pooled.1;
            }
            None => bins.push(pooled),
        }
    }
    if bins.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: bins.len(),
        });
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    let p_value = dist.sf(statistic);
    Ok(ChiSquareReport {
        statistic,
        dof,
        p_value,
        n_samples: observed.iter().sum::<u64>() as usize,
        n_bins: bins.len(),
    })
}

/// Compares `n_samples` real-space draws with `|phi|^2` over all `2^N` configurations.
pub fn chi_square_audit(state: &HybridState, n_samples: usize, seed: u64) -> Result<ChiSquareReport> {
    let n = state.dims().n_sites;
    if n > AUDIT_MAX_SITES {
        return Err(Error::TooLarge {
            sites: n,
            limit: AUDIT_MAX_SITES,
        });
    }
    let env = Environment::new(state);
    let dim = 1usize << n;
    let ln_z = env.ln_norm_sqr();
    let expected: Vec<f64> = (0..dim as u64)
        .into_par_iter()
        .map(|a| {
            let l = state.amplitude_real(SpinConfig(a)).ln_modulus();
            n_samples as f64 * (2.0 * l - ln_z).exp()
        })
        .collect();
    let n_chunks = n_samples.div_ceil(CHUNK_SIZE);
    let draws: Vec<Result<Vec<SpinConfig>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK_SIZE.min(n_samples - c * CHUNK_SIZE);
            (0..len).map(|_| draw_real(state, &env, &mut rng)).collect()
        })
        .collect();
    let mut observed = vec![0u64; dim];
    for c in draws {
        for a in c? {
            observed[a.0 as usize] += 1;
        }
    }
    chi_square_test(&observed, &expected)
}
