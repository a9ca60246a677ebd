use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a chain needs at least 2 sites, got {0}")]
    ChainTooShort(usize),
    #[error("local state at site {site} is not normalized (norm {norm})")]
    UnnormalizedLocal { site: usize, norm: f64 },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("bond dimension cap must be at least 1")]
    InvalidBondCap,
    #[error("site {site} out of range for a chain of {n} sites")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("site {0} listed more than once")]
    DuplicateSite(usize),
    #[error("reduced states are supported on 1 to 3 sites, got {0}")]
    UnsupportedSiteCount(usize),
    #[error("invalid Pauli index {0} (expected 0..=3)")]
    InvalidPauli(u8),
    #[error("expected {expected} couplings, got {got}")]
    CouplingCount { expected: usize, got: usize },
    #[error("coupling {0} is not finite")]
    NonFiniteCoupling(usize),
    #[error("invalid disorder interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("ensemble size must be at least 1")]
    EmptyEnsemble,
    #[error("smoothing window must be odd and positive, got {0}")]
    InvalidWindow(i64),
    #[error("field amplitude bound must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("expected a two-site density matrix, got {0} sites")]
    NotTwoQubit(usize),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("dense reference supports at most {max} sites, got {n}")]
    OracleTooLarge { n: usize, max: usize },
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("norm drifted by {0:e} during a step")]
    NormDrift(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
