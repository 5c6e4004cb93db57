//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid dimension {0}: must be at least 2")]
    InvalidDimension(usize),

    #[error("matrix is not Hermitian (residual {residual:.3e} exceeds tolerance {tol:.3e})")]
    NotHermitian { residual: f64, tol: f64 },

    #[error("matrix is not positive semidefinite (minimum eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("state vector has zero norm")]
    ZeroNorm,

    #[error("POVM element is zero; no retrodicted state exists")]
    ZeroElement,

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("fixture index {0} is out of range 1..=4")]
    FixtureOutOfRange(usize),

    #[error("perturbation strength {0} is outside [0, 1]")]
    InvalidDepolarization(f64),

    #[error("post-selection never succeeds for this setting")]
    PostSelectionVanishes,

    #[error("outcome probabilities sum to {0:.6}; POVM appears incomplete")]
    IncompleteOutcomes(f64),

    #[error("trials must be at least 1")]
    NoTrials,

    #[error("no successes recorded for outcome {outcome} in basis {basis}")]
    NoSuccesses { outcome: usize, basis: String },

    #[error("meter statistics are singular: p0 = {0:.3e}")]
    MeterSingular(f64),

    #[error("coupling strength g = {0} rad is invalid for estimation: tan(g) must be finite and nonzero")]
    InvalidCoupling(f64),

    #[error("post-selection is orthogonal to the pre-selected state")]
    OrthogonalPostSelection,

    #[error("multi-g fit needs at least {needed} usable settings, got {got}")]
    NotEnoughSettings { needed: usize, got: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("weak-value grid is missing the entry for (s={s}, i={i})")]
    IncompleteGrid { s: usize, i: usize },

    #[error("all weak values vanish; element is null")]
    NullElement,

    #[error("element sum is singular; completeness cannot be repaired")]
    DegenerateData,

    #[error("probe set is not informationally complete (span rank {rank}, need {needed})")]
    NotInformationallyComplete { rank: usize, needed: usize },

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
