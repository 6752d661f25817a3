//! Independent oracles shared by the integration tests. Nothing here calls the crate's
//! symmetry tables, sector enumeration or contraction code.
#![allow(dead_code)]

use hybrid_vmc::ansatz::{BlockTensor, HybridState, IsometryMode};
use hybrid_vmc::SpinConfig;
use hybrid_vmc::exact::Isometry;
use hybrid_vmc::model::{build_lattice, hamiltonian_terms, BlockShape, HamiltonianTerm, Lattice, LatticeKind};
use hybrid_vmc::symmetry::{Generator, QuantumNumber, SectorSpec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, VecDeque};
use std::io::Write;

pub type C64 = Complex64;
pub const ZERO: C64 = C64::new(0.0, 0.0);

pub fn chain(n: usize, b: usize) -> Lattice {
    build_lattice(LatticeKind::Chain, &[n], BlockShape::linear(b)).unwrap()
}

pub fn torus(l: usize, b: usize) -> Lattice {
    build_lattice(LatticeKind::Torus, &[l, l], BlockShape { bx: b, by: b }).unwrap()
}

pub fn random_state(lat: &Lattice, sector: &SectorSpec, chi: usize, d: usize, seed: u64) -> HybridState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let iso = Isometry::random(chi, lat.block_size(), &mut rng);
    HybridState::random(lat.clone(), sector.clone(), IsometryMode::Shared(iso), d, &mut rng).unwrap()
}

/// Writes straight to the process stderr so the line shows even when the test passes.
pub fn report(criterion: usize, pass: bool, detail: &str) {
    let line = format!(
        "ACCEPTANCE criterion {criterion:>2}: {} | {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// Spin at `site` (true = down) in the u64 encoding.
pub fn bit(a: u64, site: usize) -> u64 {
    (a >> site) & 1
}

/// A group element written out as a site map (`site i -> perm[i]`) plus optional flip.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Op {
    pub perm: Vec<usize>,
    pub flip: bool,
}

impl Op {
    pub fn apply(&self, a: u64) -> u64 {
        let n = self.perm.len();
        let mut out = 0;
        for i in 0..n {
            out |= bit(a, i) << self.perm[i];
        }
        if self.flip {
            out ^= (1u64 << n) - 1;
        }
        out
    }

    /// `self` after `other`.
    fn after(&self, other: &Op) -> Op {
        Op {
            perm: other.perm.iter().map(|&i| self.perm[i]).collect(),
            flip: self.flip ^ other.flip,
        }
    }
}

fn geometric(lat: &Lattice, f: impl Fn(i64, i64) -> (i64, i64)) -> Op {
    let (lx, ly) = (lat.lx as i64, lat.ly as i64);
    let perm = (0..lat.n_sites())
        .map(|s| {
            let x = (s % lat.lx) as i64;
            let y = (s / lat.lx) as i64;
            let (u, v) = f(x, y);
            (u.rem_euclid(lx) + lx * v.rem_euclid(ly)) as usize
        })
        .collect();
    Op { perm, flip: false }
}

/// Generator as a coordinate map, written from the geometric definitions.
pub fn generator_op(lat: &Lattice, g: Generator) -> Op {
    match g {
        Generator::TranslationX => geometric(lat, |x, y| (x + 1, y)),
        Generator::TranslationY => geometric(lat, |x, y| (x, y + 1)),
        Generator::MirrorX => geometric(lat, |x, y| (1 - x, y)),
        Generator::MirrorY => geometric(lat, |x, y| (x, 1 - y)),
        Generator::SiteMirrorX => geometric(lat, |x, y| (-x, y)),
        Generator::Diagonal1 => geometric(lat, |x, y| (y, x)),
        Generator::Diagonal2 => geometric(lat, |x, y| (-y, -x)),
        Generator::SpinFlip => Op {
            perm: (0..lat.n_sites()).collect(),
            flip: true,
        },
    }
}

fn qn_character(q: &QuantumNumber) -> C64 {
    match *q {
        QuantumNumber::Momentum(k) => C64::from_polar(1.0, k),
        QuantumNumber::Parity(p) => C64::new(p as f64, 0.0),
    }
}

/// Breadth-first closure of a sector's generators with their characters.
pub struct OracleGroup {
    pub ops: Vec<(Op, C64)>,
}

impl OracleGroup {
    /// `None` when the requested characters are not a representation of the group.
    pub fn new(lat: &Lattice, spec: &SectorSpec) -> Option<Self> {
        let gens: Vec<(Op, C64)> = spec
            .quantum_numbers
            .iter()
            .map(|(g, q)| (generator_op(lat, *g), qn_character(q)))
            .collect();
        let id = Op {
            perm: (0..lat.n_sites()).collect(),
            flip: false,
        };
        let mut seen: HashMap<Op, C64> = HashMap::new();
        let mut order = vec![id.clone()];
        seen.insert(id.clone(), C64::new(1.0, 0.0));
        let mut queue = VecDeque::from([id]);
        while let Some(h) = queue.pop_front() {
            let ch = seen[&h];
            for (g, cg) in &gens {
                let gh = g.after(&h);
                let c = cg * ch;
                match seen.get(&gh) {
                    Some(prev) if (prev - c).norm() > 1e-9 => return None,
                    Some(_) => {}
                    None => {
                        seen.insert(gh.clone(), c);
                        order.push(gh.clone());
                        queue.push_back(gh);
                    }
                }
            }
        }
        Some(OracleGroup {
            ops: order.into_iter().map(|o| {
                let c = seen[&o];
                (o, c)
            }).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.ops.len()
    }

    /// `sum_g conj(chi(g)) g|a>` as a sparse vector.
    pub fn projected(&self, a: u64) -> HashMap<u64, C64> {
        let mut v: HashMap<u64, C64> = HashMap::new();
        for (op, c) in &self.ops {
            *v.entry(op.apply(a)).or_insert(ZERO) += c.conj();
        }
        v.retain(|_, x| x.norm() > 1e-12);
        v
    }

    pub fn orbit(&self, a: u64) -> Vec<u64> {
        let mut o: Vec<u64> = self.ops.iter().map(|(op, _)| op.apply(a)).collect();
        o.sort_unstable();
        o.dedup();
        o
    }
}

pub fn norm_sqr(v: &HashMap<u64, C64>) -> f64 {
    v.values().map(|x| x.norm_sqr()).sum()
}

/// `H v` for a sparse vector, straight from the Heisenberg terms.
pub fn apply_h(terms: &[HamiltonianTerm], v: &HashMap<u64, C64>) -> HashMap<u64, C64> {
    let mut out: HashMap<u64, C64> = HashMap::new();
    for (&a, &x) in v {
        for t in terms {
            if bit(a, t.i) == bit(a, t.j) {
                *out.entry(a).or_insert(ZERO) += 0.25 * t.coupling * x;
            } else {
                *out.entry(a).or_insert(ZERO) -= 0.25 * t.coupling * x;
                let b = a ^ (1 << t.i) ^ (1 << t.j);
                *out.entry(b).or_insert(ZERO) += 0.5 * t.coupling * x;
            }
        }
    }
    out
}

/// All configurations with the given `2 S^z` (or all of them), ascending.
pub fn configs(n: usize, two_sz: Option<i32>) -> Vec<u64> {
    (0..1u64 << n)
        .filter(|a| two_sz.is_none_or(|m| n as i32 - 2 * a.count_ones() as i32 == m))
        .collect()
}

/// Dense Hamiltonian on a list of configurations.
pub fn dense_h(terms: &[HamiltonianTerm], basis: &[u64]) -> DMatrix<C64> {
    let index: HashMap<u64, usize> = basis.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let mut h = DMatrix::from_element(basis.len(), basis.len(), ZERO);
    for (j, &a) in basis.iter().enumerate() {
        let col = apply_h(terms, &HashMap::from([(a, C64::new(1.0, 0.0))]));
        for (b, x) in col {
            h[(index[&b], j)] += x;
        }
    }
    h
}

/// Lowest eigenvalue of `H` restricted to the range of the sector projector,
/// from dense diagonalization of `P H P + shift (1 - P)`.
pub fn projected_ground_energy(lat: &Lattice, terms: &[HamiltonianTerm], spec: &SectorSpec) -> Option<f64> {
    let group = OracleGroup::new(lat, spec)?;
    let basis = configs(lat.n_sites(), spec.two_sz);
    let index: HashMap<u64, usize> = basis.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let d = basis.len();
    let mut p = DMatrix::from_element(d, d, ZERO);
    let inv = 1.0 / group.order() as f64;
    for (j, &a) in basis.iter().enumerate() {
        for (op, c) in &group.ops {
            p[(index[&op.apply(a)], j)] += c.conj() * inv;
        }
    }
    let rank = p.trace().re.round() as usize;
    if rank == 0 {
        return None;
    }
    let h = dense_h(terms, &basis);
    let shift = 1e3;
    let id = DMatrix::<C64>::identity(d, d);
    let m = &p * &h * &p + (&id - &p) * C64::new(shift, 0.0);
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = m.symmetric_eigen();
    Some(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// `phi(a)` by explicit matrix products `prod_i sum_gamma C[gamma, idx_i] B_i[gamma]`.
pub fn dense_amplitude(st: &HybridState, a: u64) -> C64 {
    let lat = st.lattice();
    let mut acc = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for (i, (sites, t)) in lat.blocks.iter().zip(st.tensors()).enumerate() {
        let idx: usize = sites.iter().enumerate().map(|(k, &s)| (bit(a, s) as usize) << k).sum();
        let c = &st.isometry(i).matrix;
        let m = DMatrix::from_fn(t.left, t.right, |l, r| {
            (0..t.chi).map(|g| c[(g, idx)] * t.get(g, l, r)).sum::<C64>()
        });
        acc *= m;
    }
    acc[(0, 0)]
}

/// Chain sectors exercised by the oracle tests: every real `(k, p, z)`, the same without
/// spin inversion at nonzero magnetization, site-centred mirrors, and every complex momentum.
pub fn chain_sectors(n: usize) -> Vec<SectorSpec> {
    let mut out = Vec::new();
    for k_pi in [false, true] {
        for p in [1, -1] {
            for z in [1, -1] {
                out.push(SectorSpec::chain(k_pi, p, z, 0));
            }
            let mut s = SectorSpec::chain(k_pi, p, 1, 2);
            s.quantum_numbers.retain(|(g, _)| *g != Generator::SpinFlip);
            out.push(s);
            out.push(SectorSpec {
                quantum_numbers: vec![
                    (Generator::TranslationX, QuantumNumber::Momentum(if k_pi { std::f64::consts::PI } else { 0.0 })),
                    (Generator::SiteMirrorX, QuantumNumber::Parity(p)),
                ],
                two_sz: Some(0),
            });
        }
    }
    for j in 0..n {
        let k = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        out.push(SectorSpec::translations_only(k, Some(0)));
    }
    out.push(SectorSpec::translations_only(0.0, None));
    out.push(SectorSpec::trivial(Some(0)));
    out
}

/// All `(kx, ky, px, py, s1, s2, z)` sectors with `kx, ky` in `{0, π}` at `2Sz = 0`.
pub fn torus_sectors() -> Vec<SectorSpec> {
    let mut out = Vec::new();
    for bits in 0..128u32 {
        let pm = |k: u32| if bits >> k & 1 == 0 { 1 } else { -1 };
        out.push(SectorSpec::torus(
            bits & 1 != 0,
            bits >> 1 & 1 != 0,
            pm(2),
            pm(3),
            pm(4),
            pm(5),
            pm(6),
            0,
        ));
    }
    out
}

pub fn heisenberg(lat: &Lattice, g: f64) -> Vec<HamiltonianTerm> {
    hamiltonian_terms(lat, 1.0, g)
}

/// Two-block state with `chi = D = 2^b` holding `amps` exactly.
pub fn embed(lat: &Lattice, spec: &SectorSpec, amps: &[C64]) -> HybridState {
    let d = 1usize << lat.block_size();
    let (s0, s1) = (&lat.blocks[0], &lat.blocks[1]);
    let mut b0 = BlockTensor::zeros(d, 1, d);
    let mut b1 = BlockTensor::zeros(d, d, 1);
    for i in 0..d {
        let k = b0.index(i, 0, i);
        b0.data[k] = C64::new(1.0, 0.0);
        for j in 0..d {
            let a = SpinConfig(0).scatter(s0, i).scatter(s1, j);
            let k = b1.index(j, i, 0);
            b1.data[k] = amps[a.0 as usize];
        }
    }
    let iso = IsometryMode::Shared(Isometry::identity(lat.block_size()));
    HybridState::new(lat.clone(), spec.clone(), iso, d, vec![b0, b1]).unwrap()
}
