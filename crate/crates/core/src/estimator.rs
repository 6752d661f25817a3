//! Local energy, energy expectation and energy gradient in the symmetric basis.
//!
//! Both estimation modes feed weighted `(a_real, a_repr)` pairs through one
//! accumulation kernel: sampled mode uses unit weights on draws from `|phi|^2`,
//! exact summation enumerates every orbit member `c` of every representative with
//! weight `|phi(c)|^2`.
//!
//! With `O = d ln phi / d theta` evaluated at `a_real` (`O_r`) and at `a_repr`
//! (`O_p`), the gradient reported is
//!
//! ```text
//! dE/dtheta* = <conj(O_r) (Re E_loc - <Re E_loc>)> + i <conj(O_p) (Im E_loc - <Im E_loc>)>
//! ```
//!
//! which equals `(dE/dx + i dE/dy) / 2` for `theta = x + i y` because the real part
//! of `ln phi~` follows `a_real` and its imaginary part follows `a_repr`.

use crate::ansatz::{HybridState, LogAmplitude};
use crate::error::{Error, Result};
use crate::exact::{hamiltonian_connections, SectorMatrix};
use crate::model::{HamiltonianTerm, Lattice};
use crate::sampler::{draw_samples, Environment};
use crate::spin::SpinConfig;
use crate::symmetry::{enumerate_sector_basis, SectorSpec, SymmetryGroup, DEFAULT_ENUMERATION_LIMIT};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::{BTreeSet, HashMap};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Samples per reduction chunk; partial sums are merged in chunk order.
const KERNEL_CHUNK: usize = 64;
const MAX_BATCHES: usize = 32;

fn par_map<T: Sync, U: Send>(parallel: bool, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Static data of an exact-summation run: the sector Hamiltonian and the orbit of
/// every representative.
#[derive(Clone, Debug)]
pub struct ExactSum {
    pub matrix: SectorMatrix,
    pub orbits: Vec<Vec<SpinConfig>>,
}

/// Hamiltonian and sector of one optimization problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub lattice: Lattice,
    pub terms: Vec<HamiltonianTerm>,
    pub group: SymmetryGroup,
    exact: Option<ExactSum>,
}

impl Problem {
    pub fn new(lattice: Lattice, terms: Vec<HamiltonianTerm>, sector: &SectorSpec) -> Result<Self> {
        let group = SymmetryGroup::new(&lattice, sector)?;
        Ok(Problem {
            lattice,
            terms,
            group,
            exact: None,
        })
    }

    /// Enumerates the sector basis so that [`EstimationMode::ExactSum`] is available.
    pub fn with_exact_sum(mut self, enumeration_limit: usize) -> Result<Self> {
        let basis = enumerate_sector_basis(&self.group, enumeration_limit)?;
        let orbits = basis
            .states
            .par_iter()
            .map(|s| self.group.orbit(s.config).into_iter().map(|(c, _)| c).collect())
            .collect();
        let matrix = SectorMatrix::build(&self.group, &self.terms, basis);
        self.exact = Some(ExactSum { matrix, orbits });
        Ok(self)
    }

    pub fn exact_sum(&self) -> Option<&ExactSum> {
        self.exact.as_ref()
    }

    pub fn sector(&self) -> &SectorSpec {
        self.group.spec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EstimationMode {
    ExactSum,
    Sampled { n_samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyEstimate {
    /// Real part of the mean local energy.
    pub mean: f64,
    /// Mean of `Im E_loc`; vanishes within error for a Hermitian Hamiltonian.
    pub imag_mean: f64,
    pub std_error: f64,
    /// Accepted samples, or the number of representatives in exact summation.
    pub n_samples: usize,
    pub acceptance_rate: f64,
    /// Samples dropped because an amplitude they depend on vanished.
    pub n_dropped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    /// `dE / d theta*` for every tensor entry.
    pub gradient: Vec<Complex64>,
    /// `<conj(O_r)>`.
    pub mean_log_derivative: Vec<Complex64>,
    /// `<conj(O_r) Re E_loc>`.
    pub mean_log_derivative_energy: Vec<Complex64>,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.gradient.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub energy: EnergyEstimate,
    pub gradient: Option<GradientEstimate>,
}

/// One input to the accumulation kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedSample {
    pub a_real: SpinConfig,
    pub a_repr: SpinConfig,
    pub weight: f64,
}

#[derive(Clone, Debug)]
struct Accumulator {
    w: f64,
    we: Complex64,
    s_r: Vec<Complex64>,
    s_p: Vec<Complex64>,
    t_r: Vec<Complex64>,
    t_p: Vec<Complex64>,
    dropped: usize,
}

impl Accumulator {
    fn new(n_params: usize) -> Self {
        Accumulator {
            w: 0.0,
            we: ZERO,
            s_r: vec![ZERO; n_params],
            s_p: vec![ZERO; n_params],
            t_r: vec![ZERO; n_params],
            t_p: vec![ZERO; n_params],
            dropped: 0,
        }
    }

    fn merge(&mut self, o: &Accumulator) {
        self.w += o.w;
        self.we += o.we;
        for (a, b) in [
            (&mut self.s_r, &o.s_r),
            (&mut self.s_p, &o.s_p),
            (&mut self.t_r, &o.t_r),
            (&mut self.t_p, &o.t_p),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.dropped += o.dropped;
    }
}

/// `E_loc(a) = sum_b <a|H|b> psi(b) / psi(a)` over the row `connections` of `a`.
/// Representatives whose amplitude vanishes contribute nothing.
pub fn local_energy(
    psi_a: LogAmplitude,
    connections: &[(SpinConfig, Complex64)],
    mut psi: impl FnMut(SpinConfig) -> LogAmplitude,
) -> Result<Complex64> {
    let la = psi_a.ln().ok_or(Error::ZeroAmplitude { config: 0 })?;
    let mut e = ZERO;
    for &(b, h) in connections {
        if let Some(lb) = psi(b).ln() {
            e += h * (lb - la).exp();
        }
    }
    Ok(e)
}

/// `E_loc(a_repr)` with amplitudes evaluated directly from `state`.
pub fn local_energy_of(
    state: &HybridState,
    group: &SymmetryGroup,
    terms: &[HamiltonianTerm],
    a_repr: SpinConfig,
) -> Result<Complex64> {
    let psi_a = state.amplitude_symm(group, a_repr)?;
    if psi_a.is_zero() {
        return Err(Error::ZeroAmplitude { config: a_repr.0 });
    }
    let conn = hamiltonian_connections(group, terms, a_repr);
    local_energy(psi_a, &conn, |b| state.amplitude_symm_unchecked(group, b))
}

/// Standard error of the mean by non-overlapping batch means.
pub fn batch_means_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let nb = MAX_BATCHES.min(n);
    let size = n / nb;
    let means: Vec<f64> = (0..nb)
        .map(|k| {
            let end = if k + 1 == nb { n } else { (k + 1) * size };
            let s = &values[k * size..end];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    let m = means.iter().sum::<f64>() / nb as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (nb - 1) as f64;
    (var / nb as f64).sqrt()
}

fn kernel(
    state: &HybridState,
    samples: &[WeightedSample],
    e_loc: &HashMap<SpinConfig, Complex64>,
    want_gradient: bool,
    parallel: bool,
) -> Result<Accumulator> {
    let np = if want_gradient { state.parameter_count() } else { 0 };
    let chunks: Vec<&[WeightedSample]> = samples.chunks(KERNEL_CHUNK).collect();
    let partial = par_map(parallel, &chunks, |chunk| -> Result<Accumulator> {
        let mut acc = Accumulator::new(np);
        let mut repr_cache: Option<(SpinConfig, Vec<Complex64>)> = None;
        for s in chunk.iter() {
            if s.weight == 0.0 {
                continue;
            }
            let Some(&e) = e_loc.get(&s.a_repr) else {
                acc.dropped += 1;
                continue;
            };
            if want_gradient {
                let o_r = match state.holomorphic_log_derivative(s.a_real) {
                    Ok(v) => v,
                    Err(Error::ZeroAmplitude { .. }) => {
                        acc.dropped += 1;
                        continue;
                    }
                    Err(err) => return Err(err),
                };
                let o_p = if s.a_real == s.a_repr {
                    o_r.clone()
                } else {
                    match &repr_cache {
                        Some((a, v)) if *a == s.a_repr => v.clone(),
                        _ => match state.holomorphic_log_derivative(s.a_repr) {
                            Ok(v) => {
                                repr_cache = Some((s.a_repr, v.clone()));
                                v
                            }
                            // The phase is pinned to 0 where phi(a_repr) vanishes, so it has no derivative.
                            Err(Error::ZeroAmplitude { .. }) => {
                                let v = vec![Complex64::new(0.0, 0.0); np];
                                repr_cache = Some((s.a_repr, v.clone()));
                                v
                            }
                            Err(err) => return Err(err),
                        },
                    }
                };
                let (wre, wim) = (s.weight * e.re, s.weight * e.im);
                for j in 0..np {
                    let (cr, cp) = (o_r[j].conj(), o_p[j].conj());
                    acc.s_r[j] += cr * wre;
                    acc.s_p[j] += cp * wim;
                    acc.t_r[j] += cr * s.weight;
                    acc.t_p[j] += cp * s.weight;
                }
            }
            acc.w += s.weight;
            acc.we += e * s.weight;
        }
        Ok(acc)
    });
    let mut total = Accumulator::new(np);
    for p in partial {
        total.merge(&p?);
    }
    Ok(total)
}

fn finish(acc: &Accumulator, want_gradient: bool) -> Result<(Complex64, Option<GradientEstimate>)> {
    if acc.w.is_nan() || acc.w <= 0.0 {
        return Err(Error::NoSamples);
    }
    let mean = acc.we / acc.w;
    let grad = want_gradient.then(|| {
        let inv = 1.0 / acc.w;
        let gradient = (0..acc.s_r.len())
            .map(|j| {
                let re = acc.s_r[j] * inv - acc.t_r[j] * inv * mean.re;
                let im = acc.s_p[j] * inv - acc.t_p[j] * inv * mean.im;
                re + Complex64::i() * im
            })
            .collect();
        GradientEstimate {
            gradient,
            mean_log_derivative: acc.t_r.iter().map(|x| x * inv).collect(),
            mean_log_derivative_energy: acc.s_r.iter().map(|x| x * inv).collect(),
        }
    });
    Ok((mean, grad))
}

/// Runs the accumulation kernel on explicit weighted samples. Local energies are
/// computed for every distinct representative.
pub fn estimate_from_samples(
    state: &HybridState,
    problem: &Problem,
    samples: &[WeightedSample],
    want_gradient: bool,
    parallel: bool,
) -> Result<Estimate> {
    Ok(estimate_with_local_energies(state, problem, samples, want_gradient, parallel)?.0)
}

fn estimate_with_local_energies(
    state: &HybridState,
    problem: &Problem,
    samples: &[WeightedSample],
    want_gradient: bool,
    parallel: bool,
) -> Result<(Estimate, HashMap<SpinConfig, Complex64>)> {
    let reps: Vec<SpinConfig> = samples
        .iter()
        .map(|s| s.a_repr)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let e_loc = local_energies(state, problem, &reps, parallel)?;
    let acc = kernel(state, samples, &e_loc, want_gradient, parallel)?;
    let (mean, gradient) = finish(&acc, want_gradient)?;
    let est = Estimate {
        energy: EnergyEstimate {
            mean: mean.re,
            imag_mean: mean.im,
            std_error: 0.0,
            n_samples: samples.len() - acc.dropped,
            acceptance_rate: 1.0,
            n_dropped: acc.dropped,
        },
        gradient,
    };
    Ok((est, e_loc))
}

/// Local energies of `reps`, sharing one amplitude table for all connected representatives.
fn local_energies(
    state: &HybridState,
    problem: &Problem,
    reps: &[SpinConfig],
    parallel: bool,
) -> Result<HashMap<SpinConfig, Complex64>> {
    let group = &problem.group;
    let rows: Vec<Vec<(SpinConfig, Complex64)>> =
        par_map(parallel, reps, |&a| hamiltonian_connections(group, &problem.terms, a));
    let needed: Vec<SpinConfig> = rows
        .iter()
        .flat_map(|r| r.iter().map(|e| e.0))
        .chain(reps.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let amps: HashMap<SpinConfig, LogAmplitude> = needed
        .iter()
        .copied()
        .zip(par_map(parallel, &needed, |&b| state.amplitude_symm_unchecked(group, b)))
        .collect();
    let mut out = HashMap::with_capacity(reps.len());
    for (a, row) in reps.iter().zip(&rows) {
        let psi_a = amps[a];
        if psi_a.is_zero() {
            continue;
        }
        out.insert(*a, local_energy(psi_a, row, |b| amps[&b])?);
    }
    Ok(out)
}

fn exact_estimate(
    state: &HybridState,
    problem: &Problem,
    want_gradient: bool,
    parallel: bool,
) -> Result<Estimate> {
    let owned;
    let ex = match problem.exact_sum() {
        Some(e) => e,
        None => {
            owned = problem.clone().with_exact_sum(DEFAULT_ENUMERATION_LIMIT)?;
            return exact_estimate(state, &owned, want_gradient, parallel);
        }
    };
    let basis = &ex.matrix.basis;
    let idx: Vec<usize> = (0..basis.len()).collect();
    // 2 Re ln phi for every orbit member
    let orbit_logs: Vec<Vec<Option<Complex64>>> = par_map(parallel, &idx, |&i| {
        ex.orbits[i].iter().map(|&c| state.amplitude_real(c).ln()).collect()
    });
    let psi: Vec<LogAmplitude> = idx
        .iter()
        .map(|&i| {
            let logs = &orbit_logs[i];
            let a = basis.states[i].config;
            let vals: Vec<f64> = logs.iter().flatten().map(|l| 2.0 * l.re).collect();
            if vals.is_empty() {
                return LogAmplitude(None);
            }
            let m = vals.iter().fold(f64::NEG_INFINITY, |x, &y| x.max(y));
            let lse = m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let phase = ex.orbits[i]
                .iter()
                .zip(logs)
                .find(|(c, _)| **c == a)
                .and_then(|(_, l)| *l)
                .map_or(0.0, |l| l.im);
            LogAmplitude(Some(Complex64::new(0.5 * lse, phase)))
        })
        .collect();
    let mut e_loc = HashMap::with_capacity(basis.len());
    for (i, row) in ex.matrix.rows.iter().enumerate() {
        let Some(la) = psi[i].ln() else { continue };
        let e: Complex64 = row
            .iter()
            .filter_map(|&(j, h)| psi[j].ln().map(|lb| h * (lb - la).exp()))
            .sum();
        e_loc.insert(basis.states[i].config, e);
    }
    let scale = orbit_logs
        .iter()
        .flatten()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, l| m.max(2.0 * l.re));
    let mut samples = Vec::new();
    for i in idx {
        let a = basis.states[i].config;
        for (&c, l) in ex.orbits[i].iter().zip(&orbit_logs[i]) {
            if let Some(l) = l {
                samples.push(WeightedSample {
                    a_real: c,
                    a_repr: a,
                    weight: (2.0 * l.re - scale).exp(),
                });
            }
        }
    }
    let acc = kernel(state, &samples, &e_loc, want_gradient, parallel)?;
    let (mean, gradient) = finish(&acc, want_gradient)?;
    Ok(Estimate {
        energy: EnergyEstimate {
            mean: mean.re,
            imag_mean: mean.im,
            std_error: 0.0,
            n_samples: basis.len(),
            acceptance_rate: 1.0,
            n_dropped: acc.dropped,
        },
        gradient,
    })
}

fn sampled_estimate(
    state: &HybridState,
    problem: &Problem,
    n_samples: usize,
    seed: u64,
    want_gradient: bool,
    parallel: bool,
) -> Result<Estimate> {
    let env = Environment::new(state);
    let batch = draw_samples(state, &env, &problem.group, n_samples, seed, parallel)?;
    let samples: Vec<WeightedSample> = batch
        .accepted()
        .map(|r| WeightedSample {
            a_real: r.a_real,
            a_repr: r.a_repr,
            weight: 1.0,
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let (mut est, e_loc) = estimate_with_local_energies(state, problem, &samples, want_gradient, parallel)?;
    let values: Vec<f64> = samples.iter().filter_map(|s| e_loc.get(&s.a_repr).map(|e| e.re)).collect();
    est.energy.std_error = batch_means_error(&values);
    est.energy.acceptance_rate = batch.acceptance_rate();
    Ok(est)
}

/// Energy and, if requested, its gradient.
pub fn estimate(
    state: &HybridState,
    problem: &Problem,
    mode: EstimationMode,
    want_gradient: bool,
    parallel: bool,
) -> Result<Estimate> {
    match mode {
        EstimationMode::ExactSum => exact_estimate(state, problem, want_gradient, parallel),
        EstimationMode::Sampled { n_samples, seed } => {
            sampled_estimate(state, problem, n_samples, seed, want_gradient, parallel)
        }
    }
}

pub fn energy(state: &HybridState, problem: &Problem, mode: EstimationMode, parallel: bool) -> Result<EnergyEstimate> {
    Ok(estimate(state, problem, mode, false, parallel)?.energy)
}

pub fn gradient(
    state: &HybridState,
    problem: &Problem,
    mode: EstimationMode,
    parallel: bool,
) -> Result<GradientEstimate> {
    Ok(estimate(state, problem, mode, true, parallel)?
        .gradient
        .expect("gradient requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::IsometryMode;
    use crate::exact::Isometry;
    use crate::model::{build_lattice, hamiltonian_terms, BlockShape, LatticeKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (HybridState, Problem) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = build_lattice(LatticeKind::Chain, &[8], BlockShape::linear(4)).unwrap();
        let sector = SectorSpec::chain(false, 1, 1, 0);
        let problem = Problem::new(lat.clone(), hamiltonian_terms(&lat, 1.0, 0.2), &sector)
            .unwrap()
            .with_exact_sum(DEFAULT_ENUMERATION_LIMIT)
            .unwrap();
        let iso = Isometry::random(3, 4, &mut rng);
        let st = HybridState::random(lat, sector, IsometryMode::Shared(iso), 2, &mut rng).unwrap();
        (st, problem)
    }

    #[test]
    fn rescaling_leaves_energy_unchanged() {
        let (st, pb) = setup(1);
        let e0 = energy(&st, &pb, EstimationMode::ExactSum, false).unwrap();
        let c = Complex64::new(-2.5, 0.7);
        let scaled: Vec<_> = st.parameters().iter().map(|x| x * c).collect();
        let st2 = st.with_parameters(&scaled).unwrap();
        let e1 = energy(&st2, &pb, EstimationMode::ExactSum, false).unwrap();
        assert!((e0.mean - e1.mean).abs() < 1e-12);
        assert_eq!(e0.std_error, 0.0);
        assert_eq!(e0.n_samples, pb.exact_sum().unwrap().matrix.basis.len());
    }

    #[test]
    fn parallel_and_sequential_are_identical() {
        let (st, pb) = setup(2);
        let a = estimate(&st, &pb, EstimationMode::ExactSum, true, true).unwrap();
        let b = estimate(&st, &pb, EstimationMode::ExactSum, true, false).unwrap();
        assert_eq!(a, b);
        let m = EstimationMode::Sampled { n_samples: 3000, seed: 4 };
        let a = estimate(&st, &pb, m, true, true).unwrap();
        let b = estimate(&st, &pb, m, true, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_means_of_constant_is_zero() {
        assert_eq!(batch_means_error(&[1.5; 100]), 0.0);
        assert!(batch_means_error(&[1.0]).is_infinite());
        let v: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
        assert!(batch_means_error(&v) >= 0.0);
    }
}
