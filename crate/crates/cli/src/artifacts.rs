//! Errors with exit codes, run manifests and the ED/isometry cache.

use crate::config::{sha256_hex, RunConfig};
use hybrid_vmc::exact::{
    block_rdm, isometry_from_rdm, sector_ground_state, Isometry, LanczosOptions, ReferenceSolution,
};
use hybrid_vmc::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Missing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Missing(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Missing(m) => write!(f, "missing artifact: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::InvalidLattice(_)
            | Error::InvalidSector(_)
            | Error::GroupTooLarge { .. }
            | Error::EnumerationLimit { .. }
            | Error::TooLarge { .. }
            | Error::InvalidDimensions(_)
            | Error::DimensionMismatch(_)
            | Error::ZeroReference => CliError::Config(m),
            Error::CorruptCheckpoint(_) | Error::Io(_) | Error::Json(_) => CliError::Missing(m),
            Error::ZeroNorm { .. }
            | Error::NotInBasis { .. }
            | Error::NoConvergence { .. }
            | Error::ZeroAmplitude { .. }
            | Error::DegenerateState
            | Error::NoSamples
            | Error::Divergence { .. }
            | Error::TooFewPoints { .. } => CliError::Numerical(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Missing(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Missing(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Process-wide options from the command line.
#[derive(Clone, Debug, Serialize)]
pub struct RunContext {
    pub threads: Option<usize>,
    pub deterministic: bool,
}

#[derive(Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
}

/// Records everything needed to re-derive the outputs of one command.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: Option<String>,
    config: Option<&'a RunConfig>,
    seeds: serde_json::Value,
    threads: Option<usize>,
    deterministic: bool,
    created_unix_s: u64,
    inputs: Vec<OutputEntry>,
    outputs: Vec<OutputEntry>,
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: Option<&RunConfig>,
    ctx: &RunContext,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> CliResult<PathBuf> {
    let digest = |files: &[PathBuf]| {
        files
            .iter()
            .map(|p| -> CliResult<OutputEntry> {
            Ok(OutputEntry {
                path: p
                    .strip_prefix(dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned(),
                sha256: sha256_hex(&std::fs::read(p)?),
            })
            })
            .collect::<CliResult<Vec<_>>>()
    };
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.map(RunConfig::hash),
        config: cfg,
        seeds: cfg.map_or(serde_json::Value::Null, |c| {
            serde_json::json!({
                "ansatz": c.ansatz.seed,
                "optimizer": c.optimizer.seed,
                "audit": c.audit.seeds,
            })
        }),
        threads: ctx.threads,
        deterministic: ctx.deterministic,
        created_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        inputs: digest(inputs)?,
        outputs: digest(outputs)?,
    };
    let path = dir.join(format!("{command}.manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&m)?)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(path.to_path_buf())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsometryRecord {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    /// RDM spectrum, descending.
    pub spectrum: Vec<f64>,
}

impl IsometryRecord {
    fn from_isometry(c: &Isometry) -> Self {
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..c.chi())
                .map(|i| (0..c.block_dim()).map(|j| f(&c.matrix[(i, j)])).collect())
                .collect()
        };
        IsometryRecord {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
            spectrum: c.weights.clone(),
        }
    }

    fn to_isometry(&self) -> CliResult<Isometry> {
        let chi = self.re.len();
        let dim = self.re.first().map_or(0, |r| r.len());
        if self.im.len() != chi || self.re.iter().chain(&self.im).any(|r| r.len() != dim) {
            return Err(CliError::Missing("isometry artifact has ragged rows".into()));
        }
        let m = DMatrix::from_fn(chi, dim, |i, j| Complex64::new(self.re[i][j], self.im[i][j]));
        let mut iso = Isometry::from_matrix(m).map_err(|e| CliError::Missing(e.to_string()))?;
        iso.weights = self.spectrum.clone();
        Ok(iso)
    }
}

/// Reference ground state and the isometries derived from its block RDMs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsometryArtifact {
    pub reference_energy: f64,
    pub reference_sites: usize,
    pub reference_sector_dim: usize,
    pub chi: usize,
    pub shared: bool,
    pub isometries: Vec<IsometryRecord>,
}

impl IsometryArtifact {
    pub fn isometries(&self) -> CliResult<Vec<Isometry>> {
        self.isometries.iter().map(|r| r.to_isometry()).collect()
    }

    pub fn retained_weights(&self) -> CliResult<Vec<f64>> {
        Ok(self.isometries()?.iter().map(|c| c.retained_weight()).collect())
    }
}

fn cache_key(kind: &str, value: &serde_json::Value) -> String {
    format!("{kind}-{}", &sha256_hex(value.to_string().as_bytes())[..16])
}

fn read_cached<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str(&text) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
            None
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdRecord {
    pub energy: f64,
    pub sector_dim: usize,
    pub group_order: usize,
    pub n_sites: usize,
    pub sector_label: String,
}

/// Sector ground energy of the target system, cached by model and sector.
pub fn target_ed(cfg: &RunConfig) -> CliResult<EdRecord> {
    let lattice = cfg.lattice().map_err(CliError::Config)?;
    let sector = cfg.sector().map_err(CliError::Config)?;
    let key = cache_key(
        "ed",
        &serde_json::json!({
            "kind": cfg.model.kind, "dims": cfg.model.dims, "block": cfg.model.block,
            "j1": cfg.model.j1, "g": cfg.model.g, "sector": sector,
        }),
    );
    let dir = cfg.cache_dir();
    let path = dir.join(format!("{key}.json"));
    if let Some(r) = read_cached::<EdRecord>(&path) {
        log::info!("using cached ED result {}", path.display());
        return Ok(r);
    }
    let group = hybrid_vmc::symmetry::SymmetryGroup::new(&lattice, &sector)?;
    let terms = cfg.terms(&lattice);
    let h = hybrid_vmc::exact::SectorMatrix::for_sector(
        &group,
        &terms,
        hybrid_vmc::symmetry::DEFAULT_ENUMERATION_LIMIT,
    )?;
    if h.dim() == 0 {
        return Err(CliError::Config(format!("sector {} is empty", sector.label())));
    }
    let (energy, _) = h.lowest_eigenpairs(1, &LanczosOptions::default())?.remove(0);
    let rec = EdRecord {
        energy,
        sector_dim: h.dim(),
        group_order: group.order(),
        n_sites: lattice.n_sites(),
        sector_label: sector.label(),
    };
    std::fs::create_dir_all(&dir)?;
    write_json(&path, &rec)?;
    Ok(rec)
}

/// Isometries from the reference system's block RDMs, cached by
/// (model, reference system, sector, b, chi, sharing).
pub fn isometry_artifact(cfg: &RunConfig) -> CliResult<IsometryArtifact> {
    let reference = cfg.reference_lattice().map_err(CliError::Config)?;
    let sector = cfg.reference_sector().map_err(CliError::Config)?;
    let target = cfg.lattice().map_err(CliError::Config)?;
    let chi = cfg.ansatz.chi;
    let shared = cfg.ansatz.shared_isometry;
    let key = cache_key(
        "isometry",
        &serde_json::json!({
            "kind": cfg.model.kind, "reference_dims": reference.lx * 1000 + reference.ly,
            "block": cfg.model.block, "j1": cfg.model.j1, "g": cfg.model.g,
            "sector": sector, "chi": chi, "shared": shared, "target_blocks": target.n_blocks(),
        }),
    );
    let dir = cfg.cache_dir();
    let path = dir.join(format!("{key}.json"));
    if let Some(a) = read_cached::<IsometryArtifact>(&path) {
        log::info!("using cached isometry {}", path.display());
        return Ok(a);
    }
    let terms = cfg.terms(&reference);
    let sol: ReferenceSolution = sector_ground_state(&reference, &terms, &sector, &LanczosOptions::default())?;
    let blocks: Vec<usize> = if shared {
        vec![0]
    } else {
        (0..target.n_blocks()).map(|i| i % reference.n_blocks()).collect()
    };
    let isometries = blocks
        .iter()
        .map(|&i| -> CliResult<IsometryRecord> {
            let rdm = block_rdm(&sol.state, &reference.blocks[i])?;
            let iso = isometry_from_rdm(&rdm, chi)?;
            Ok(IsometryRecord::from_isometry(&iso))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let art = IsometryArtifact {
        reference_energy: sol.energy,
        reference_sites: reference.n_sites(),
        reference_sector_dim: sol.sector_dim,
        chi,
        shared,
        isometries,
    };
    std::fs::create_dir_all(&dir)?;
    write_json(&path, &art)?;
    Ok(art)
}
