use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: every mode needs at least {min} Fock levels")]
    InvalidDimension { dim: usize, min: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("mode index {index} out of range for a {modes}-mode layout")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error(
        "truncation insufficient: |alpha|^2 = {mean_photons} exceeds dim/4 = {limit} \
         (pass allow_tight_truncation to override)"
    )]
    TruncationInsufficient { mean_photons: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operator power {power} does not fit in a mode of dimension {dim}")]
    PowerExceedsDimension { power: usize, dim: usize },

    #[error("unsupported commutator order {0}: the f-polynomial table covers orders 1..=9")]
    UnsupportedOrder(usize),

    #[error("f-polynomial table check failed for order {order}: max deviation {deviation:e}")]
    FTableMismatch { order: usize, deviation: f64 },

    #[error("operator is not Hermitian: max |M - M^dagger| = {0:e}")]
    NotHermitian(f64),

    #[error("numerical consistency: {what} (residue {residue:e})")]
    NumericalConsistency { what: &'static str, residue: f64 },

    #[error("integrator failed to reach tolerance {tolerance:e}: achieved residual {achieved:e} at t = {time}")]
    IntegratorFailure {
        tolerance: f64,
        achieved: f64,
        time: f64,
    },

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("unsupported interaction: {0}")]
    UnsupportedInteraction(String),

    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
