use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid sector: {0}")]
    InvalidSector(String),

    #[error("symmetry group order {order} exceeds cap {cap}")]
    GroupTooLarge { order: usize, cap: usize },

    #[error("enumeration limit exceeded: {sites} sites > limit {limit}")]
    EnumerationLimit { sites: usize, limit: usize },

    #[error("configuration {config:#b} has vanishing norm in the target sector")]
    ZeroNorm { config: u64 },

    #[error("configuration {config:#b} is not in the sector basis")]
    NotInBasis { config: u64 },

    #[error("eigensolver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("state too large for dense reconstruction: {sites} sites > {limit}")]
    TooLarge { sites: usize, limit: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("zero amplitude encountered for configuration {config:#b}")]
    ZeroAmplitude { config: u64 },

    #[error("degenerate state: total conditional weight vanished while sampling")]
    DegenerateState,

    #[error("no accepted samples")]
    NoSamples,

    #[error("optimization diverged at iteration {iteration}: energy {energy}")]
    Divergence { iteration: usize, energy: f64 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reference value must be non-zero")]
    ZeroReference,

    #[error("need at least {needed} distinct points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
