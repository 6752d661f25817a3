//! Gradient-based minimization of the sector energy.
//!
//! Parameters are complex; updates act on their real and imaginary parts, whose
//! energy derivatives are `2 Re` and `2 Im` of `dE/dtheta*`.

use crate::ansatz::HybridState;
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimationMode, Problem};
use crate::symmetry::DEFAULT_ENUMERATION_LIMIT;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    /// Constant learning rate.
    None,
    /// `lr0 sqrt(t_p / t)` once the best energy has not improved for `plateau_window`
    /// iterations (first detected at `t_p`).
    Plateau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub decay: Decay,
    pub plateau_window: usize,
    /// Use exhaustive summation over the sector basis instead of sampling.
    pub exact_sum: bool,
    pub n_samples: usize,
    /// Double `n_samples` when the standard error exceeds `noise_fraction` times the
    /// last energy change.
    pub adaptive_samples: bool,
    pub noise_fraction: f64,
    pub max_samples: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Iterations run with the trivial group before symmetrization; 0 disables.
    pub warm_start_iterations: usize,
    /// Maximum Euclidean norm of the real gradient.
    pub gradient_clip: Option<f64>,
    pub convergence_window: usize,
    /// Relative change of the windowed median energy treated as converged.
    pub convergence_tolerance: f64,
    /// Abort when the energy exceeds `E_0 + divergence_factor |E_0|`.
    pub divergence_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Warn when the acceptance rate falls below this fraction.
    pub acceptance_floor: f64,
    pub parallel: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Adam,
            learning_rate: 1e-2,
            decay: Decay::Plateau,
            plateau_window: 50,
            exact_sum: false,
            n_samples: 2048,
            adaptive_samples: true,
            noise_fraction: 1.0,
            max_samples: 65_536,
            max_iterations: 500,
            seed: 0,
            warm_start_iterations: 0,
            gradient_clip: None,
            convergence_window: 50,
            convergence_tolerance: 1e-7,
            divergence_factor: 10.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            acceptance_floor: 0.1,
            parallel: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDimensions(format!("optimizer config: {m}")));
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.n_samples == 0 || self.max_samples < self.n_samples {
            return bad("need 1 <= n_samples <= max_samples");
        }
        if self.convergence_window == 0 || self.plateau_window == 0 {
            return bad("windows must be at least 1");
        }
        if let Some(c) = self.gradient_clip {
            if c.is_nan() || c <= 0.0 {
                return bad("gradient_clip must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("Adam hyperparameters out of range");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warm,
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub energy: f64,
    pub imag_energy: f64,
    pub std_error: f64,
    pub gradient_norm: f64,
    pub acceptance_rate: f64,
    pub n_samples: usize,
    pub learning_rate: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
}

impl OptimizationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn symmetric_energies(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Symmetric)
            .map(|r| r.energy)
            .collect()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Termination {
    Converged { iteration: usize },
    MaxIterations,
    Diverged { iteration: usize, energy: f64 },
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    /// Parameters after the last update (the best state on divergence).
    pub state: HybridState,
    pub best_state: HybridState,
    pub best_energy: f64,
    pub trace: OptimizationTrace,
    pub termination: Termination,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scales `g` down to norm `clip` if it is longer; the direction is unchanged.
pub fn clip_gradient(g: &mut [f64], clip: Option<f64>) {
    if let Some(c) = clip {
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > c {
            let s = c / n;
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, g: &[f64], lr: f64, cfg: &OptimizerConfig) -> Vec<f64> {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(k, &gk)| {
                self.m[k] = b1 * self.m[k] + (1.0 - b1) * gk;
                self.v[k] = b2 * self.v[k] + (1.0 - b2) * gk * gk;
                let mh = self.m[k] / c1;
                let vh = self.v[k] / c2;
                -lr * mh / (vh.sqrt() + cfg.epsilon)
            })
            .collect()
    }
}

fn iteration_seed(seed: u64, t: usize) -> u64 {
    seed ^ (t as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

struct PhaseResult {
    params: Vec<Complex64>,
    best: Option<(f64, Vec<Complex64>)>,
    termination: Termination,
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    state: &mut HybridState,
    problem: &Problem,
    cfg: &OptimizerConfig,
    phase: Phase,
    iterations: usize,
    first_iteration: usize,
    trace: &mut OptimizationTrace,
    start: Instant,
    on_iteration: &mut dyn FnMut(&TraceRecord, &HybridState),
) -> Result<PhaseResult> {
    let mut params = state.parameters();
    let np = params.len();
    let mut adam = Adam::new(2 * np);
    let mut n_samples = cfg.n_samples;
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    let mut initial: Option<f64> = None;
    let mut energies: Vec<f64> = Vec::new();
    let mut since_improvement = 0usize;
    let mut plateau_at: Option<usize> = None;
    let w = cfg.convergence_window;

    for k in 0..iterations {
        let it = first_iteration + k;
        let mode = if cfg.exact_sum {
            EstimationMode::ExactSum
        } else {
            EstimationMode::Sampled {
                n_samples,
                seed: iteration_seed(cfg.seed, it),
            }
        };
        let est = estimate(state, problem, mode, true, cfg.parallel)?;
        let e = est.energy.mean;
        let grad = est.gradient.expect("gradient requested");
        let lr = match (cfg.decay, plateau_at) {
            (Decay::Plateau, Some(tp)) => cfg.learning_rate * ((tp.max(1)) as f64 / (k.max(1)) as f64).sqrt(),
            _ => cfg.learning_rate,
        };
        let rec = TraceRecord {
            iteration: it,
            phase,
            energy: e,
            imag_energy: est.energy.imag_mean,
            std_error: est.energy.std_error,
            gradient_norm: 2.0 * grad.norm(),
            acceptance_rate: est.energy.acceptance_rate,
            n_samples: est.energy.n_samples,
            learning_rate: lr,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        if !cfg.exact_sum && est.energy.acceptance_rate < cfg.acceptance_floor {
            log::warn!(
                "iteration {it}: acceptance rate {:.3} below floor {:.3}",
                est.energy.acceptance_rate,
                cfg.acceptance_floor
            );
        }
        trace.records.push(rec.clone());
        on_iteration(&rec, state);

        let e0 = *initial.get_or_insert(e);
        if !e.is_finite() || e > e0 + cfg.divergence_factor * e0.abs() {
            return Ok(PhaseResult {
                params,
                best,
                termination: Termination::Diverged { iteration: it, energy: e },
            });
        }
        match &best {
            Some((b, _)) if e >= *b - cfg.convergence_tolerance * b.abs() => {
                since_improvement += 1;
            }
            _ => since_improvement = 0,
        }
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, params.clone()));
        }
        if since_improvement >= cfg.plateau_window && plateau_at.is_none() {
            plateau_at = Some(k);
        }
        if cfg.adaptive_samples && !cfg.exact_sum {
            if let Some(&prev) = energies.last() {
                if est.energy.std_error > cfg.noise_fraction * (e - prev).abs() && n_samples < cfg.max_samples {
                    n_samples = (2 * n_samples).min(cfg.max_samples);
                }
            }
        }
        energies.push(e);
        let t = energies.len();
        if t >= 2 * w {
            let recent = median(&energies[t - w..]);
            let before = median(&energies[t - 2 * w..t - w]);
            if (before - recent).abs() <= cfg.convergence_tolerance * recent.abs().max(1.0) {
                return Ok(PhaseResult {
                    params,
                    best,
                    termination: Termination::Converged { iteration: it },
                });
            }
        }
        if k + 1 == iterations {
            break;
        }

        let mut g: Vec<f64> = grad.gradient.iter().flat_map(|z| [2.0 * z.re, 2.0 * z.im]).collect();
        clip_gradient(&mut g, cfg.gradient_clip);
        let step: Vec<f64> = match cfg.method {
            Method::Adam => adam.step(&g, lr, cfg),
            Method::Sgd => g.iter().map(|x| -lr * x).collect(),
        };
        for (p, s) in params.iter_mut().zip(step.chunks_exact(2)) {
            *p += Complex64::new(s[0], s[1]);
        }
        state.set_parameters(&params)?;
    }
    Ok(PhaseResult {
        params,
        best,
        termination: Termination::MaxIterations,
    })
}

/// Minimizes the energy of `state` in the sector of `problem`.
pub fn optimize(state: &HybridState, problem: &Problem, cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    optimize_with(state, problem, cfg, &mut |_, _| {})
}

/// As [`optimize`], calling `on_iteration` after every energy evaluation.
pub fn optimize_with(
    state: &HybridState,
    problem: &Problem,
    cfg: &OptimizerConfig,
    on_iteration: &mut dyn FnMut(&TraceRecord, &HybridState),
) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut trace = OptimizationTrace::default();
    let mut current = state.clone();
    let warm = cfg.warm_start_iterations.min(cfg.max_iterations);
    if warm > 0 {
        let mut warm_problem = Problem::new(
            problem.lattice.clone(),
            problem.terms.clone(),
            &problem.sector().without_symmetry(),
        )?;
        if cfg.exact_sum {
            warm_problem = warm_problem.with_exact_sum(DEFAULT_ENUMERATION_LIMIT)?;
        }
        let r = run_phase(&mut current, &warm_problem, cfg, Phase::Warm, warm, 0, &mut trace, start, on_iteration)?;
        if let Termination::Diverged { iteration, energy } = r.termination {
            log::warn!("warm start diverged at iteration {iteration} (energy {energy}); keeping its best state");
            if let Some((_, p)) = r.best {
                current.set_parameters(&p)?;
            }
        }
    }
    let r = run_phase(
        &mut current,
        problem,
        cfg,
        Phase::Symmetric,
        cfg.max_iterations - warm,
        warm,
        &mut trace,
        start,
        on_iteration,
    )?;
    let (best_energy, best_params) = r.best.unwrap_or((f64::NAN, r.params.clone()));
    let best_state = current.with_parameters(&best_params)?;
    let final_state = match r.termination {
        Termination::Diverged { .. } => best_state.clone(),
        _ => current,
    };
    Ok(OptimizeOutcome {
        state: final_state,
        best_state,
        best_energy,
        trace,
        termination: r.termination,
    })
}

/// Sequential runs over increasing bond dimensions, each started from the previous
/// best state padded with noise of scale `noise`.
pub fn bond_dimension_ladder<R: Rng + ?Sized>(
    initial: &HybridState,
    problem: &Problem,
    cfg: &OptimizerConfig,
    bond_dims: &[usize],
    noise: f64,
    rng: &mut R,
    on_iteration: &mut dyn FnMut(usize, &TraceRecord, &HybridState),
) -> Result<Vec<(usize, OptimizeOutcome)>> {
    let mut out: Vec<(usize, OptimizeOutcome)> = Vec::new();
    let mut seed_state = initial.clone();
    for (k, &d) in bond_dims.iter().enumerate() {
        let start = if d == seed_state.dims().bond_dim {
            seed_state.clone()
        } else {
            seed_state.grow_bond_dimension(d, noise, rng)?
        };
        let mut run_cfg = cfg.clone();
        if k > 0 {
            run_cfg.warm_start_iterations = 0;
        }
        let res = optimize_with(&start, problem, &run_cfg, &mut |r, s| on_iteration(d, r, s))?;
        let diverged = matches!(res.termination, Termination::Diverged { .. });
        seed_state = res.best_state.clone();
        out.push((d, res));
        if diverged {
            break;
        }
    }
    Ok(out)
}
