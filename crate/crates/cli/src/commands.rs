//! One function per subcommand. Each writes its outputs plus a manifest into the output directory.

use crate::artifacts::{
    isometry_artifact, target_ed, write_json, write_manifest, CliError, CliResult, EdRecord, IsometryArtifact,
    RunContext,
};
use crate::config::RunConfig;
use hybrid_vmc::analysis::{extrapolate_inverse_d, inverse_d_series, write_csv, ExtrapolationResult, ResultRow};
use hybrid_vmc::ansatz::{load_checkpoint_expecting, save_checkpoint, HybridState, IsometryMode};
use hybrid_vmc::estimator::{estimate, EstimationMode, Problem};
use hybrid_vmc::exact::MAX_DENSE_SITES;
use hybrid_vmc::optimizer::{bond_dimension_ladder, Termination, TraceRecord};
use hybrid_vmc::sampler::{
    chi_square_audit, draw_samples, write_sample_dump, ChiSquareReport, Environment, RejectionReason,
    AUDIT_MAX_SITES,
};
use hybrid_vmc::symmetry::{SymmetryGroup, DEFAULT_ENUMERATION_LIMIT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Stream separating the bond-dimension ladder noise from the initial tensors.
const LADDER_STREAM: u64 = 1;
/// Seed offset of the final energy evaluation, so it is independent of the optimizer's samples.
const FINAL_EVAL_SALT: u64 = 0x5eed_f1a1;

fn ansatz_out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    cfg.validate_ansatz().map_err(CliError::Config)?;
    out_dir(cfg)
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let d = cfg.io.out_dir.clone();
    std::fs::create_dir_all(&d)?;
    Ok(d)
}

pub fn cmd_ed(cfg: &RunConfig, ctx: &RunContext) -> CliResult<EdRecord> {
    let dir = out_dir(cfg)?;
    let rec = target_ed(cfg)?;
    println!("E0 = {:.12}", rec.energy);
    println!("E0/N = {:.12}", rec.energy / rec.n_sites as f64);
    println!("sector {} : dimension {}, group order {}", rec.sector_label, rec.sector_dim, rec.group_order);
    let out = write_json(&dir.join("ed.json"), &rec)?;
    write_manifest(&dir, "ed", Some(cfg), ctx, &[], &[out])?;
    Ok(rec)
}

pub fn cmd_isometry(cfg: &RunConfig, ctx: &RunContext) -> CliResult<IsometryArtifact> {
    let dir = ansatz_out_dir(cfg)?;
    let art = isometry_artifact(cfg)?;
    println!(
        "reference: N = {}, sector dimension {}, E0 = {:.12}",
        art.reference_sites, art.reference_sector_dim, art.reference_energy
    );
    let weights = art.retained_weights()?;
    for (k, (rec, w)) in art.isometries.iter().zip(&weights).enumerate() {
        let head: Vec<String> = rec.spectrum.iter().take(art.chi + 4).map(|x| format!("{x:.3e}")).collect();
        println!("block {k}: retained weight {w:.12} (chi = {}), spectrum {}", art.chi, head.join(" "));
    }
    let out = write_json(&dir.join("isometry.json"), &art)?;
    write_manifest(&dir, "isometry", Some(cfg), ctx, &[], &[out])?;
    Ok(art)
}

fn isometry_mode(cfg: &RunConfig) -> CliResult<IsometryMode> {
    let mut isos = isometry_artifact(cfg)?.isometries()?;
    Ok(if cfg.ansatz.shared_isometry {
        IsometryMode::Shared(isos.remove(0))
    } else {
        IsometryMode::PerBlock(isos)
    })
}

fn initial_state(cfg: &RunConfig, bond_dim: usize) -> CliResult<(HybridState, Vec<PathBuf>)> {
    let lattice = cfg.lattice().map_err(CliError::Config)?;
    let sector = cfg.sector().map_err(CliError::Config)?;
    if let Some(path) = &cfg.io.checkpoint {
        if !path.exists() {
            return Err(CliError::Missing(format!("checkpoint {} not found", path.display())));
        }
        let st = load_checkpoint_expecting(path, lattice.n_sites(), lattice.block_size(), cfg.ansatz.chi, bond_dim)?;
        if st.lattice() != &lattice {
            return Err(CliError::Config("checkpoint lattice differs from the configured model".into()));
        }
        return Ok((st.with_sector(sector), vec![path.clone()]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.ansatz.seed);
    let st = HybridState::random(lattice, sector, isometry_mode(cfg)?, bond_dim, &mut rng)?;
    Ok((st, Vec::new()))
}

/// Reference energy for relative errors: configured, or from sector ED when small enough.
fn reference_energy(cfg: &RunConfig) -> CliResult<Option<f64>> {
    if let Some(e) = cfg.io.reference_energy {
        return Ok(Some(e));
    }
    let n = cfg.lattice().map_err(CliError::Config)?.n_sites();
    if n <= MAX_DENSE_SITES {
        Ok(Some(target_ed(cfg)?.energy))
    } else {
        log::info!("N = {n}: no reference energy configured, relative errors are not reported");
        Ok(None)
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    bond_dim: usize,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub bond_dim: usize,
    pub termination: Termination,
    pub iterations: usize,
    pub checkpoint: PathBuf,
    pub row: ResultRow,
}

pub fn cmd_optimize(cfg: &RunConfig, ctx: &RunContext) -> CliResult<Vec<RunSummary>> {
    let dir = ansatz_out_dir(cfg)?;
    let mut ocfg = cfg.optimizer.clone();
    ocfg.parallel &= !ctx.deterministic;
    let lattice = cfg.lattice().map_err(CliError::Config)?;
    let sector = cfg.sector().map_err(CliError::Config)?;
    let mut problem = Problem::new(lattice.clone(), cfg.terms(&lattice), &sector)?;
    if ocfg.exact_sum {
        problem = problem.with_exact_sum(DEFAULT_ENUMERATION_LIMIT)?;
    }
    let reference = reference_energy(cfg)?;
    let (initial, inputs) = initial_state(cfg, cfg.ansatz.bond_dims[0])?;

    let trace_path = dir.join("trace.jsonl");
    let mut trace = BufWriter::new(File::create(&trace_path)?);
    let mut io_error: Option<std::io::Error> = None;
    let deterministic = ctx.deterministic;
    let mut on_iteration = |d: usize, r: &TraceRecord, _: &HybridState| {
        let mut rec = r.clone();
        if deterministic {
            rec.wall_time_s = 0.0;
        }
        if r.iteration.is_multiple_of(25) {
            log::info!("D = {d} iter {} E = {:.10} +- {:.2e}", r.iteration, r.energy, r.std_error);
        }
        if io_error.is_none() {
            let line = serde_json::to_string(&TraceLine { bond_dim: d, record: &rec }).map_err(std::io::Error::other);
            if let Err(e) = line.and_then(|l| writeln!(trace, "{l}")) {
                io_error = Some(e);
            }
        }
    };
    let mut ladder_rng = ChaCha8Rng::seed_from_u64(cfg.ansatz.seed);
    ladder_rng.set_stream(LADDER_STREAM);
    let runs = bond_dimension_ladder(
        &initial,
        &problem,
        &ocfg,
        &cfg.ansatz.bond_dims,
        cfg.ansatz.ladder_noise,
        &mut ladder_rng,
        &mut on_iteration,
    )?;
    trace.flush()?;
    drop(trace);
    if let Some(e) = io_error {
        return Err(e.into());
    }

    let mode = if ocfg.exact_sum {
        EstimationMode::ExactSum
    } else {
        EstimationMode::Sampled {
            n_samples: ocfg.max_samples.max(ocfg.n_samples),
            seed: ocfg.seed ^ FINAL_EVAL_SALT,
        }
    };
    let mut outputs = vec![trace_path];
    let mut summaries = Vec::new();
    for (d, outcome) in &runs {
        let ckpt = dir.join(format!("state_D{d}.ckpt"));
        save_checkpoint(&outcome.best_state, &ckpt)?;
        let e = estimate(&outcome.best_state, &problem, mode, false, ocfg.parallel)?.energy;
        let dims = outcome.best_state.dims();
        let row = ResultRow {
            n_sites: dims.n_sites,
            block_size: dims.block_size,
            chi: dims.chi,
            bond_dim: *d,
            parameters: outcome.best_state.parameter_count(),
            energy: e.mean,
            std_error: e.std_error,
            reference,
        };
        let rel = row.relative_error().map_or(String::from("n/a"), |r| format!("{r:.3e}"));
        println!(
            "D = {d}: E = {:.12} +- {:.2e}, E/N = {:.12}, relative error {rel}, {:?}",
            row.energy,
            row.std_error,
            row.energy / row.n_sites as f64,
            outcome.termination
        );
        outputs.push(ckpt.with_extension("ckpt.json"));
        outputs.push(ckpt.clone());
        summaries.push(RunSummary {
            bond_dim: *d,
            termination: outcome.termination,
            iterations: outcome.trace.len(),
            checkpoint: ckpt.file_name().map(PathBuf::from).unwrap_or_default(),
            row,
        });
    }
    let rows: Vec<ResultRow> = summaries.iter().map(|s| s.row.clone()).collect();
    let results = dir.join("results.csv");
    write_csv(&rows, BufWriter::new(File::create(&results)?))?;
    outputs.push(results);
    outputs.push(write_json(&dir.join("summary.json"), &summaries)?);
    write_manifest(&dir, "optimize", Some(cfg), ctx, &inputs, &outputs)?;

    if let Some(s) = summaries.iter().find(|s| matches!(s.termination, Termination::Diverged { .. })) {
        return Err(CliError::Numerical(format!(
            "optimization diverged at D = {} ({:?}); best state saved to {}",
            s.bond_dim,
            s.termination,
            dir.join(&s.checkpoint).display()
        )));
    }
    Ok(summaries)
}

#[derive(Debug, Serialize)]
pub struct AuditSummary {
    pub reports: Vec<(u64, ChiSquareReport)>,
    pub failures: usize,
    pub max_failures: usize,
    pub p_threshold: f64,
    pub symmetric_draws: usize,
    pub accepted: usize,
    pub rejected_magnetization: usize,
    pub rejected_zero_norm: usize,
}

pub fn cmd_sample_audit(cfg: &RunConfig, ctx: &RunContext) -> CliResult<AuditSummary> {
    let dir = ansatz_out_dir(cfg)?;
    let lattice = cfg.lattice().map_err(CliError::Config)?;
    if lattice.n_sites() > AUDIT_MAX_SITES {
        return Err(CliError::Config(format!(
            "sample-audit enumerates 2^N configurations; N = {} exceeds {AUDIT_MAX_SITES}",
            lattice.n_sites()
        )));
    }
    let bond_dim = if cfg.io.checkpoint.is_some() { cfg.ansatz.bond_dims[0] } else { cfg.audit.bond_dim };
    let (state, inputs) = initial_state(cfg, bond_dim)?;
    let mut reports = Vec::new();
    let mut failures = 0;
    for &seed in &cfg.audit.seeds {
        let r = chi_square_audit(&state, cfg.audit.n_samples, seed)?;
        let pass = r.p_value > cfg.audit.p_threshold;
        failures += usize::from(!pass);
        println!(
            "seed {seed}: chi2 = {:.2}, dof = {}, p = {:.4} {}",
            r.statistic,
            r.dof,
            r.p_value,
            if pass { "ok" } else { "FAIL" }
        );
        reports.push((seed, r));
    }

    let group = SymmetryGroup::new(&lattice, state.sector())?;
    let env = Environment::new(&state);
    let n_draw = cfg.audit.n_samples;
    let batch = draw_samples(&state, &env, &group, n_draw, cfg.audit.seeds[0], !ctx.deterministic)?;
    let count = |why: RejectionReason| batch.records.iter().filter(|r| r.rejection == Some(why)).count();
    let summary = AuditSummary {
        failures,
        max_failures: cfg.audit.max_failures,
        p_threshold: cfg.audit.p_threshold,
        symmetric_draws: batch.n_drawn(),
        accepted: batch.n_accepted(),
        rejected_magnetization: count(RejectionReason::WrongMagnetization),
        rejected_zero_norm: count(RejectionReason::ZeroNorm),
        reports,
    };
    println!(
        "symmetric draws: {} accepted of {} ({} wrong magnetization, {} zero norm)",
        summary.accepted, summary.symmetric_draws, summary.rejected_magnetization, summary.rejected_zero_norm
    );
    let mut outputs = vec![write_json(&dir.join("audit.json"), &summary)?];
    if cfg.io.sample_dump {
        let p = dir.join("samples.txt");
        write_sample_dump(&batch.records, lattice.n_sites(), BufWriter::new(File::create(&p)?))?;
        outputs.push(p);
    }
    write_manifest(&dir, "sample-audit", Some(cfg), ctx, &inputs, &outputs)?;
    if failures > cfg.audit.max_failures {
        return Err(CliError::Numerical(format!(
            "{failures} of {} chi-square tests below p = {}",
            cfg.audit.seeds.len(),
            cfg.audit.p_threshold
        )));
    }
    Ok(summary)
}

/// Reads a results table with at least `D` and `energy` columns (`N`, `std_error` optional).
pub fn read_results(path: &Path) -> CliResult<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| CliError::Missing(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| CliError::Missing(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(d_col), Some(e_col)) = (col("D"), col("energy")) else {
        return Err(CliError::Config(format!("{}: needs columns D and energy", path.display())));
    };
    let n_col = col("N");
    let s_col = col("std_error");
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Missing(e.to_string()))?;
        let field = |c: usize| rec.get(c).map(str::trim).unwrap_or("");
        let bad = |what: &str| CliError::Config(format!("{}: row {}: bad {what}", path.display(), line + 1));
        let bond_dim: usize = field(d_col).parse().map_err(|_| bad("D"))?;
        let energy: f64 = field(e_col).parse().map_err(|_| bad("energy"))?;
        let n_sites = match n_col {
            Some(c) => field(c).parse().map_err(|_| bad("N"))?,
            None => 1,
        };
        let std_error = match s_col {
            Some(c) if !field(c).is_empty() => field(c).parse().map_err(|_| bad("std_error"))?,
            _ => 0.0,
        };
        rows.push(ResultRow {
            n_sites,
            block_size: 0,
            chi: 0,
            bond_dim,
            parameters: 0,
            energy,
            std_error,
            reference: None,
        });
    }
    Ok(rows)
}

pub fn cmd_extrapolate(
    cfg: Option<&RunConfig>,
    input: Option<&Path>,
    out: &Path,
    ctx: &RunContext,
) -> CliResult<ExtrapolationResult> {
    let input = match (input, cfg) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(c)) => c.io.results.clone().unwrap_or_else(|| c.io.out_dir.join("results.csv")),
        (None, None) => return Err(CliError::Config("extrapolate needs --input or --config".into())),
    };
    let rows = read_results(&input)?;
    let pts: Vec<(usize, f64)> = rows.iter().map(|r| (r.bond_dim, r.energy)).collect();
    let fit = extrapolate_inverse_d(&pts)?;
    println!("E(1/D -> 0) = {:.12}", fit.intercept);
    println!("slope = {:.6e}, residual = {:.3e}", fit.slope, fit.residual);
    println!("used D = {:?}", fit.points.iter().map(|p| p.0).collect::<Vec<_>>());
    std::fs::create_dir_all(out)?;
    let outputs = vec![
        write_json(&out.join("extrapolation.json"), &fit)?,
        write_json(&out.join("inverse_d_series.json"), &inverse_d_series(&rows, Some(&fit)))?,
    ];
    write_manifest(out, "extrapolate", cfg, ctx, &[input], &outputs)?;
    Ok(fit)
}

#[derive(Serialize)]
struct BenchReport<'a> {
    preset: Option<&'a str>,
    target: Option<&'a str>,
    reference_energy: Option<f64>,
    runs: &'a [RunSummary],
    extrapolation: Option<ExtrapolationResult>,
    extrapolated_relative_error: Option<f64>,
}

/// ED (when feasible), isometry, bond-dimension ladder and extrapolation in one go.
pub fn cmd_bench(cfg: &RunConfig, preset: Option<&str>, target: Option<&str>, ctx: &RunContext) -> CliResult<()> {
    let dir = ansatz_out_dir(cfg)?;
    let reference = reference_energy(cfg)?;
    if let Some(e) = reference {
        println!("reference E0 = {e:.12}");
    }
    cmd_isometry(cfg, ctx)?;
    let runs = cmd_optimize(cfg, ctx)?;
    let pts: Vec<(usize, f64)> = runs.iter().map(|s| (s.bond_dim, s.row.energy)).collect();
    let fit = extrapolate_inverse_d(&pts).ok();
    let fit_err = fit
        .as_ref()
        .zip(reference)
        .and_then(|(f, r)| hybrid_vmc::analysis::relative_error(f.intercept, r).ok());

    println!();
    println!("{:>4} {:>6} {:>20} {:>10} {:>12}", "D", "params", "E/N", "std/N", "rel. error");
    for s in &runs {
        let r = &s.row;
        let n = r.n_sites as f64;
        let rel = r.relative_error().map_or(String::from("-"), |x| format!("{x:.3e}"));
        println!(
            "{:>4} {:>6} {:>20.12} {:>10.2e} {:>12}",
            r.bond_dim,
            r.parameters,
            r.energy / n,
            r.std_error / n,
            rel
        );
    }
    if let Some(f) = &fit {
        let n = runs[0].row.n_sites as f64;
        let rel = fit_err.map_or(String::from("-"), |x| format!("{x:.3e}"));
        println!("{:>4} {:>6} {:>20.12} {:>10} {:>12}", "inf", "", f.intercept / n, "", rel);
    } else {
        println!("(extrapolation needs three distinct bond dimensions)");
    }
    if let Some(t) = target {
        println!("target: {t}");
    }
    let report = BenchReport {
        preset,
        target,
        reference_energy: reference,
        runs: &runs,
        extrapolation: fit,
        extrapolated_relative_error: fit_err,
    };
    let out = write_json(&dir.join("bench_report.json"), &report)?;
    write_manifest(&dir, "bench", Some(cfg), ctx, &[], &[out])?;
    Ok(())
}
