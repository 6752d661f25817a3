//! Run configuration, read from a TOML file. Unknown keys are rejected.

use hybrid_vmc::model::{build_lattice, hamiltonian_terms, BlockShape, HamiltonianTerm, Lattice, LatticeKind};
use hybrid_vmc::optimizer::OptimizerConfig;
use hybrid_vmc::symmetry::{Generator, QuantumNumber, SectorSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub sector: SectorConfig,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub isometry: IsometryConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub io: IoConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: LatticeKind,
    /// `[L]` for a chain, `[Lx, Ly]` for a torus.
    pub dims: Vec<usize>,
    /// `[b]` for a chain, `[bx, by]` for a torus.
    pub block: Vec<usize>,
    #[serde(default = "one")]
    pub j1: f64,
    #[serde(default)]
    pub g: f64,
}

fn one() -> f64 {
    1.0
}

/// A momentum given in radians or as the string `"pi"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Momentum {
    Radians(f64),
    Named(String),
}

impl Momentum {
    fn radians(&self) -> Result<f64, String> {
        match self {
            Momentum::Radians(k) => Ok(*k),
            Momentum::Named(s) => match s.trim().to_ascii_lowercase().as_str() {
                "0" => Ok(0.0),
                "pi" | "π" => Ok(PI),
                other => Err(format!("unrecognized momentum {other:?} (use 0 or \"pi\")")),
            },
        }
    }
}

/// Quantum numbers; generators left out are not part of the symmetry group.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorConfig {
    /// Twice the total `S^z`; omit to disable magnetization filtering.
    pub two_sz: Option<i32>,
    /// Chain momentum (alias of `kx`).
    pub k: Option<Momentum>,
    pub kx: Option<Momentum>,
    pub ky: Option<Momentum>,
    /// Chain bond mirror parity (alias of `px`).
    pub p: Option<i8>,
    pub px: Option<i8>,
    pub py: Option<i8>,
    /// Site-centred mirror parity.
    pub sx: Option<i8>,
    /// Diagonal mirror parities on a square torus.
    pub d1: Option<i8>,
    pub d2: Option<i8>,
    /// Spin-inversion parity.
    pub z: Option<i8>,
}

impl SectorConfig {
    pub fn to_spec(&self) -> Result<SectorSpec, String> {
        if self.k.is_some() && self.kx.is_some() {
            return Err("give either k or kx, not both".into());
        }
        if self.p.is_some() && self.px.is_some() {
            return Err("give either p or px, not both".into());
        }
        let mut qns = Vec::new();
        if let Some(k) = self.k.as_ref().or(self.kx.as_ref()) {
            qns.push((Generator::TranslationX, QuantumNumber::Momentum(k.radians()?)));
        }
        if let Some(k) = &self.ky {
            qns.push((Generator::TranslationY, QuantumNumber::Momentum(k.radians()?)));
        }
        let parities = [
            (Generator::MirrorX, self.p.or(self.px)),
            (Generator::MirrorY, self.py),
            (Generator::SiteMirrorX, self.sx),
            (Generator::Diagonal1, self.d1),
            (Generator::Diagonal2, self.d2),
            (Generator::SpinFlip, self.z),
        ];
        for (g, p) in parities {
            if let Some(p) = p {
                qns.push((g, QuantumNumber::Parity(p)));
            }
        }
        let spec = SectorSpec {
            quantum_numbers: qns,
            two_sz: self.two_sz,
        };
        spec.validate_real().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnsatzConfig {
    pub chi: usize,
    /// Bond dimensions run in order; more than one runs a ladder.
    pub bond_dims: Vec<usize>,
    pub shared_isometry: bool,
    pub seed: u64,
    /// Scale of the noise filling new entries when the bond dimension grows.
    pub ladder_noise: f64,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        AnsatzConfig {
            chi: 11,
            bond_dims: vec![4],
            shared_isometry: true,
            seed: 1,
            ladder_noise: 1e-3,
        }
    }
}

/// The exactly solvable reference system whose block RDM defines the isometry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsometryConfig {
    /// Reference lattice dimensions; the target lattice when omitted.
    pub reference_dims: Option<Vec<usize>>,
    /// Reference sector; the target sector when omitted.
    pub reference_sector: Option<SectorConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub n_samples: usize,
    pub seeds: Vec<u64>,
    pub p_threshold: f64,
    pub max_failures: usize,
    /// Bond dimension of the random audited state when no checkpoint is given.
    pub bond_dim: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            n_samples: 100_000,
            seeds: (0..10).collect(),
            p_threshold: 0.01,
            max_failures: 1,
            bond_dim: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Initial state for `optimize`, or the audited state for `sample-audit`.
    pub checkpoint: Option<PathBuf>,
    /// Results file read by `extrapolate`; defaults to `<out_dir>/results.csv`.
    pub results: Option<PathBuf>,
    /// Write the accepted/rejected samples of `sample-audit`.
    pub sample_dump: bool,
    /// Reference energy for relative errors; computed by ED when omitted and feasible.
    pub reference_energy: Option<f64>,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            checkpoint: None,
            results: None,
            sample_dump: false,
            reference_energy: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    /// Checks everything that can be checked without heavy computation.
    pub fn validate(&self) -> Result<(), String> {
        self.lattice()?;
        self.sector()?;
        self.reference_lattice()?;
        self.reference_sector()?;
        if self.ansatz.bond_dims.is_empty() || self.ansatz.bond_dims.contains(&0) {
            return Err("bond_dims must be a non-empty list of positive integers".into());
        }
        if self.ansatz.bond_dims.windows(2).any(|w| w[1] < w[0]) {
            return Err("bond_dims must be non-decreasing".into());
        }
        self.optimizer.validate().map_err(|e| e.to_string())?;
        if self.audit.n_samples == 0 || self.audit.seeds.is_empty() {
            return Err("audit needs n_samples >= 1 and at least one seed".into());
        }
        Ok(())
    }

    /// Checks the ansatz against the block size; not needed by `ed`.
    pub fn validate_ansatz(&self) -> Result<(), String> {
        let b = self.lattice()?.block_size();
        if self.ansatz.chi == 0 || self.ansatz.chi > 1usize << b.min(20) {
            return Err(format!("chi = {} out of range for block size {b}", self.ansatz.chi));
        }
        Ok(())
    }

    pub fn block_shape(&self) -> Result<BlockShape, String> {
        match (self.model.kind, self.model.block.as_slice()) {
            (LatticeKind::Chain, [b]) => Ok(BlockShape::linear(*b)),
            (LatticeKind::Torus, [bx, by]) => Ok(BlockShape { bx: *bx, by: *by }),
            (k, b) => Err(format!("block {b:?} does not fit lattice kind {k:?}")),
        }
    }

    pub fn lattice(&self) -> Result<Lattice, String> {
        build_lattice(self.model.kind, &self.model.dims, self.block_shape()?).map_err(|e| e.to_string())
    }

    pub fn reference_lattice(&self) -> Result<Lattice, String> {
        let dims = self.isometry.reference_dims.as_ref().unwrap_or(&self.model.dims);
        build_lattice(self.model.kind, dims, self.block_shape()?).map_err(|e| e.to_string())
    }

    pub fn sector(&self) -> Result<SectorSpec, String> {
        self.sector.to_spec()
    }

    pub fn reference_sector(&self) -> Result<SectorSpec, String> {
        self.isometry.reference_sector.as_ref().unwrap_or(&self.sector).to_spec()
    }

    pub fn terms(&self, lattice: &Lattice) -> Vec<HamiltonianTerm> {
        hamiltonian_terms(lattice, self.model.j1, self.model.g)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.io.cache_dir.clone().unwrap_or_else(|| self.io.out_dir.join("cache"))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Sets every seed in the configuration.
    pub fn override_seed(&mut self, seed: u64) {
        self.ansatz.seed = seed;
        self.optimizer.seed = seed;
        self.audit.seeds = (0..self.audit.seeds.len() as u64).map(|k| seed.wrapping_add(k)).collect();
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}
