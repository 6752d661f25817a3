//! Lattice symmetry groups, sector characters and symmetric-basis bookkeeping.
//!
//! A group element acts on a configuration by moving the spin at site `i` to site
//! `perm[i]` and then, if `flip` is set, complementing every spin. The symmetric basis
//! vector labelled by a representative `r` is
//!
//! ```text
//! |r_symm> = N_r^{-1/2} * sum_g conj(chi(g)) g|r>
//! ```
//!
//! so that `g|psi> = chi(g)|psi>` for every state of the sector. For the real
//! (`±1`) sectors accepted by [`SectorSpec::validate_real`] the conjugation is moot.

use crate::error::{Error, Result};
use crate::model::{Lattice, LatticeKind};
use crate::spin::{fixed_weight_words, full_mask, SpinConfig};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

/// Character sums below this magnitude are treated as exact cancellation.
const CANCELLATION_TOL: f64 = 1e-8;
const CHARACTER_TOL: f64 = 1e-9;

pub const DEFAULT_ENUMERATION_LIMIT: usize = 36;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    /// `x -> x + 1` (the chain translation `T`).
    TranslationX,
    /// `y -> y + 1`.
    TranslationY,
    /// Bond-centred mirror `x -> 1 - x` (the chain mirror `P`).
    MirrorX,
    /// Bond-centred mirror `y -> 1 - y`.
    MirrorY,
    /// Site-centred mirror `x -> -x`.
    SiteMirrorX,
    /// Diagonal mirror `(x, y) -> (y, x)`.
    Diagonal1,
    /// Anti-diagonal mirror `(x, y) -> (-y, -x)`.
    Diagonal2,
    /// Global spin inversion `Z`.
    SpinFlip,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Generator::TranslationX => "Tx",
            Generator::TranslationY => "Ty",
            Generator::MirrorX => "Px",
            Generator::MirrorY => "Py",
            Generator::SiteMirrorX => "Sx",
            Generator::Diagonal1 => "σ1",
            Generator::Diagonal2 => "σ2",
            Generator::SpinFlip => "Z",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantumNumber {
    /// Lattice momentum `k` in radians; the translation character is `exp(i k)`.
    Momentum(f64),
    /// Eigenvalue `±1` of an involution.
    Parity(i8),
}

impl QuantumNumber {
    pub fn character(&self) -> Complex64 {
        match *self {
            QuantumNumber::Momentum(k) => {
                if k == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else if k == PI {
                    Complex64::new(-1.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, k)
                }
            }
            QuantumNumber::Parity(p) => Complex64::new(p as f64, 0.0),
        }
    }
}

/// Quantum numbers of a symmetry sector. Generators without a quantum number are not
/// part of the group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    pub quantum_numbers: Vec<(Generator, QuantumNumber)>,
    /// Twice the total S^z (`#up - #down`); `None` disables magnetization filtering.
    pub two_sz: Option<i32>,
}

fn momentum(k_is_pi: bool) -> QuantumNumber {
    QuantumNumber::Momentum(if k_is_pi { PI } else { 0.0 })
}

impl SectorSpec {
    /// Chain sector `(k, p, z)` with `k` in `{0, π}` given as `k_is_pi`.
    pub fn chain(k_is_pi: bool, p: i8, z: i8, two_sz: i32) -> Self {
        SectorSpec {
            quantum_numbers: vec![
                (Generator::TranslationX, momentum(k_is_pi)),
                (Generator::MirrorX, QuantumNumber::Parity(p)),
                (Generator::SpinFlip, QuantumNumber::Parity(z)),
            ],
            two_sz: Some(two_sz),
        }
    }

    /// Torus sector `(kx, ky, px, py, σ1, σ2, z)`.
    #[allow(clippy::too_many_arguments)]
    pub fn torus(
        kx_is_pi: bool,
        ky_is_pi: bool,
        px: i8,
        py: i8,
        s1: i8,
        s2: i8,
        z: i8,
        two_sz: i32,
    ) -> Self {
        SectorSpec {
            quantum_numbers: vec![
                (Generator::TranslationX, momentum(kx_is_pi)),
                (Generator::TranslationY, momentum(ky_is_pi)),
                (Generator::MirrorX, QuantumNumber::Parity(px)),
                (Generator::MirrorY, QuantumNumber::Parity(py)),
                (Generator::Diagonal1, QuantumNumber::Parity(s1)),
                (Generator::Diagonal2, QuantumNumber::Parity(s2)),
                (Generator::SpinFlip, QuantumNumber::Parity(z)),
            ],
            two_sz: Some(two_sz),
        }
    }

    pub fn translations_only(k: f64, two_sz: Option<i32>) -> Self {
        SectorSpec {
            quantum_numbers: vec![(Generator::TranslationX, QuantumNumber::Momentum(k))],
            two_sz,
        }
    }

    pub fn trivial(two_sz: Option<i32>) -> Self {
        SectorSpec {
            quantum_numbers: Vec::new(),
            two_sz,
        }
    }

    /// Same magnetization, no spatial or spin-flip symmetry.
    pub fn without_symmetry(&self) -> Self {
        SectorSpec::trivial(self.two_sz)
    }

    /// Accepts only sectors whose characters are all `±1`.
    pub fn validate_real(&self) -> Result<()> {
        for (g, q) in &self.quantum_numbers {
            match *q {
                QuantumNumber::Momentum(k) if k != 0.0 && k != PI => {
                    return Err(Error::InvalidSector(format!(
                        "momentum {k} for {g} is not 0 or π"
                    )));
                }
                QuantumNumber::Parity(p) if p != 1 && p != -1 => {
                    return Err(Error::InvalidSector(format!("parity {p} for {g} is not ±1")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let mut parts: Vec<String> = self
            .quantum_numbers
            .iter()
            .map(|(g, q)| match *q {
                QuantumNumber::Momentum(0.0) => format!("{g}:k=0"),
                QuantumNumber::Momentum(k) if k == PI => format!("{g}:k=pi"),
                QuantumNumber::Momentum(k) => format!("{g}:k={k}"),
                QuantumNumber::Parity(p) => format!("{g}:{p:+}"),
            })
            .collect();
        if let Some(m) = self.two_sz {
            parts.push(format!("2Sz={m}"));
        }
        parts.join(",")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement {
    pub perm: Vec<u8>,
    pub spin_flip: bool,
}

impl GroupElement {
    pub fn identity(n: usize) -> Self {
        GroupElement {
            perm: (0..n as u8).collect(),
            spin_flip: false,
        }
    }

    /// Reference implementation of the action, one site at a time.
    pub fn apply(&self, a: SpinConfig) -> SpinConfig {
        let mut out = 0u64;
        for (i, &t) in self.perm.iter().enumerate() {
            out |= ((a.0 >> i) & 1) << t;
        }
        if self.spin_flip {
            out ^= full_mask(self.perm.len());
        }
        SpinConfig(out)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            perm: other.perm.iter().map(|&i| self.perm[i as usize]).collect(),
            spin_flip: self.spin_flip ^ other.spin_flip,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.spin_flip && self.perm.iter().enumerate().all(|(i, &p)| i == p as usize)
    }
}

fn generator_element(lattice: &Lattice, g: Generator) -> Result<GroupElement> {
    let (lx, ly) = (lattice.lx as i64, lattice.ly as i64);
    let n = lattice.n_sites();
    let two_d = lattice.kind == LatticeKind::Torus;
    let needs_2d = matches!(
        g,
        Generator::TranslationY | Generator::MirrorY | Generator::Diagonal1 | Generator::Diagonal2
    );
    if needs_2d && !two_d {
        return Err(Error::InvalidSector(format!("generator {g} needs a torus")));
    }
    if matches!(g, Generator::Diagonal1 | Generator::Diagonal2) && lx != ly {
        return Err(Error::InvalidSector(format!(
            "diagonal mirror {g} needs a square torus"
        )));
    }
    let map = |x: i64, y: i64| -> (i64, i64) {
        match g {
            Generator::TranslationX => (x + 1, y),
            Generator::TranslationY => (x, y + 1),
            Generator::MirrorX => (1 - x, y),
            Generator::MirrorY => (x, 1 - y),
            Generator::SiteMirrorX => (-x, y),
            Generator::Diagonal1 => (y, x),
            Generator::Diagonal2 => (-y, -x),
            Generator::SpinFlip => (x, y),
        }
    };
    let perm = (0..n)
        .map(|s| {
            let (x, y) = ((s as i64) % lx, (s as i64) / lx);
            let (u, v) = map(x, y);
            (u.rem_euclid(lx) + lx * v.rem_euclid(ly)) as u8
        })
        .collect();
    Ok(GroupElement {
        perm,
        spin_flip: g == Generator::SpinFlip,
    })
}

/// A representative configuration together with its sector normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeState {
    pub config: SpinConfig,
    pub norm_sq: f64,
    pub orbit_size: usize,
}

/// The closure of a sector's generators, with characters and fast action tables.
#[derive(Clone, Debug)]
pub struct SymmetryGroup {
    n_sites: usize,
    spec: SectorSpec,
    elements: Vec<GroupElement>,
    characters: Vec<Complex64>,
    // For element g and byte c: tables[g][c * 256 + byte] is the image of that byte's spins.
    tables: Vec<Vec<u64>>,
    n_chunks: usize,
    mask: u64,
}

impl SymmetryGroup {
    /// Closes the sector's generators under composition (breadth first from the
    /// identity) and checks that the characters form a one-dimensional representation.
    pub fn new(lattice: &Lattice, spec: &SectorSpec) -> Result<Self> {
        let n = lattice.n_sites();
        if spec.two_sz.is_some_and(|m| m.unsigned_abs() as usize > n || (m + n as i32) % 2 != 0)
        {
            return Err(Error::InvalidSector(format!(
                "2Sz = {:?} impossible on {n} sites",
                spec.two_sz
            )));
        }
        let mut gens = Vec::with_capacity(spec.quantum_numbers.len());
        for (i, (g, q)) in spec.quantum_numbers.iter().enumerate() {
            if spec.quantum_numbers[..i].iter().any(|(h, _)| h == g) {
                return Err(Error::InvalidSector(format!("generator {g} listed twice")));
            }
            if *g == Generator::SpinFlip && spec.two_sz.is_some_and(|m| m != 0) {
                return Err(Error::InvalidSector(
                    "spin inversion requires the 2Sz = 0 sector".into(),
                ));
            }
            match (g, q) {
                (Generator::TranslationX | Generator::TranslationY, QuantumNumber::Momentum(_)) => {}
                (Generator::TranslationX | Generator::TranslationY, _) => {
                    return Err(Error::InvalidSector(format!("{g} needs a momentum")));
                }
                (_, QuantumNumber::Parity(p)) if *p == 1 || *p == -1 => {}
                _ => {
                    return Err(Error::InvalidSector(format!("{g} needs a parity ±1")));
                }
            }
            gens.push((generator_element(lattice, *g)?, q.character()));
        }

        let cap = 16 * n;
        let mut elements = vec![GroupElement::identity(n)];
        let mut characters = vec![Complex64::new(1.0, 0.0)];
        let mut index: HashMap<GroupElement, usize> = HashMap::new();
        index.insert(elements[0].clone(), 0);
        let mut head = 0;
        while head < elements.len() {
            for (gen, chi) in &gens {
                let cand = gen.compose(&elements[head]);
                if !index.contains_key(&cand) {
                    if elements.len() >= cap {
                        return Err(Error::GroupTooLarge {
                            order: elements.len() + 1,
                            cap,
                        });
                    }
                    index.insert(cand.clone(), elements.len());
                    characters.push(chi * characters[head]);
                    elements.push(cand);
                }
            }
            head += 1;
        }

        for (a, ga) in elements.iter().enumerate() {
            for (b, gb) in elements.iter().enumerate() {
                let c = index[&ga.compose(gb)];
                if (characters[c] - characters[a] * characters[b]).norm() > CHARACTER_TOL {
                    return Err(Error::InvalidSector(format!(
                        "quantum numbers {} are not a one-dimensional representation",
                        spec.label()
                    )));
                }
            }
        }

        let n_chunks = n.div_ceil(8);
        let tables = elements
            .iter()
            .map(|g| {
                let mut t = vec![0u64; n_chunks * 256];
                for c in 0..n_chunks {
                    for byte in 0..256usize {
                        let mut out = 0u64;
                        for k in 0..8 {
                            let site = 8 * c + k;
                            if site < n && (byte >> k) & 1 == 1 {
                                out |= 1u64 << g.perm[site];
                            }
                        }
                        t[c * 256 + byte] = out;
                    }
                }
                t
            })
            .collect();

        Ok(SymmetryGroup {
            n_sites: n,
            spec: spec.clone(),
            elements,
            characters,
            tables,
            n_chunks,
            mask: full_mask(n),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn spec(&self) -> &SectorSpec {
        &self.spec
    }

    pub fn two_sz(&self) -> Option<i32> {
        self.spec.two_sz
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn character(&self, g: usize) -> Complex64 {
        self.characters[g]
    }

    pub fn is_trivial(&self) -> bool {
        self.elements.len() == 1
    }

    /// Action of the `g`-th element via the byte lookup tables.
    #[inline]
    pub fn apply(&self, g: usize, a: SpinConfig) -> SpinConfig {
        let t = &self.tables[g];
        let mut out = 0u64;
        for c in 0..self.n_chunks {
            out |= t[c * 256 + ((a.0 >> (8 * c)) & 0xff) as usize];
        }
        if self.elements[g].spin_flip {
            out ^= self.mask;
        }
        SpinConfig(out)
    }

    /// Smallest orbit member and the first element (in closure order) that reaches it.
    pub fn representative(&self, a: SpinConfig) -> (SpinConfig, usize) {
        let mut best = a;
        let mut best_g = 0;
        for g in 1..self.order() {
            let b = self.apply(g, a);
            if b < best {
                best = b;
                best_g = g;
            }
        }
        (best, best_g)
    }

    /// Representative, reaching element, and the representative's squared norm in
    /// a single pass. The stabilizers of `a` and its representative are conjugate, so
    /// their character sums agree.
    pub fn representative_with_norm(&self, a: SpinConfig) -> (SpinConfig, usize, f64) {
        let mut best = a;
        let mut best_g = 0;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut stab = 0usize;
        for g in 0..self.order() {
            let b = self.apply(g, a);
            if b < best {
                best = b;
                best_g = g;
            }
            if b == a {
                sum += self.characters[g];
                stab += 1;
            }
        }
        let norm_sq = if sum.norm() < CANCELLATION_TOL {
            0.0
        } else {
            (self.order() / stab) as f64 * sum.norm_sqr()
        };
        (best, best_g, norm_sq)
    }

    pub fn is_representative(&self, a: SpinConfig) -> bool {
        (1..self.order()).all(|g| self.apply(g, a) >= a)
    }

    /// Sum of characters over the stabilizer of `a`.
    fn stabilizer_sum(&self, a: SpinConfig) -> (Complex64, usize) {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut count = 0;
        for g in 0..self.order() {
            if self.apply(g, a) == a {
                sum += self.characters[g];
                count += 1;
            }
        }
        (sum, count)
    }

    /// Squared norm of `sum_g conj(chi(g)) g|a>`; zero when the configuration is
    /// incompatible with the sector.
    pub fn norm_squared(&self, a: SpinConfig) -> f64 {
        let (sum, stab) = self.stabilizer_sum(a);
        if sum.norm() < CANCELLATION_TOL {
            0.0
        } else {
            (self.order() / stab) as f64 * sum.norm_sqr()
        }
    }

    pub fn orbit_size(&self, a: SpinConfig) -> usize {
        self.order() / self.stabilizer_sum(a).1
    }

    pub fn representative_state(&self, a_repr: SpinConfig) -> RepresentativeState {
        let (sum, stab) = self.stabilizer_sum(a_repr);
        let orbit_size = self.order() / stab;
        let norm_sq = if sum.norm() < CANCELLATION_TOL {
            0.0
        } else {
            orbit_size as f64 * sum.norm_sqr()
        };
        RepresentativeState {
            config: a_repr,
            norm_sq,
            orbit_size,
        }
    }

    /// Distinct orbit members, sorted, each with the first element reaching it.
    pub fn orbit(&self, a: SpinConfig) -> Vec<(SpinConfig, usize)> {
        let mut members: Vec<(SpinConfig, usize)> =
            (0..self.order()).map(|g| (self.apply(g, a), g)).collect();
        members.sort();
        members.dedup_by_key(|m| m.0);
        members
    }

    pub fn matches_magnetization(&self, a: SpinConfig) -> bool {
        self.spec.two_sz.is_none_or(|m| a.two_sz(self.n_sites) == m)
    }
}

/// The ordered representatives spanning a sector.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    pub states: Vec<RepresentativeState>,
}

impl SectorBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, a: SpinConfig) -> Option<usize> {
        self.states.binary_search_by(|s| s.config.cmp(&a)).ok()
    }

    pub fn configs(&self) -> impl Iterator<Item = SpinConfig> + '_ {
        self.states.iter().map(|s| s.config)
    }
}

/// All representatives with the sector magnetization and non-vanishing norm, ascending.
pub fn enumerate_sector_basis(group: &SymmetryGroup, limit: usize) -> Result<SectorBasis> {
    let n = group.n_sites();
    if n > limit {
        return Err(Error::EnumerationLimit { sites: n, limit });
    }
    let candidates: Box<dyn Iterator<Item = u64>> = match group.two_sz() {
        Some(m) => {
            let n_down = (n as i32 - m) / 2;
            Box::new(fixed_weight_words(n, n_down as usize))
        }
        None => {
            if n > 30 {
                return Err(Error::EnumerationLimit { sites: n, limit: 30 });
            }
            Box::new(0..(1u64 << n))
        }
    };
    let states = candidates
        .map(SpinConfig)
        .filter(|&a| group.is_representative(a))
        .map(|a| group.representative_state(a))
        .filter(|s| s.norm_sq > 0.0)
        .collect();
    Ok(SectorBasis { states })
}
