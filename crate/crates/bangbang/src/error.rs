use thiserror::Error;

/// Unified error type for the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spin index {index} out of range 1..={n_spins}")]
    SpinIndexOutOfRange { index: usize, n_spins: usize },

    #[error("species index {index} out of range for {n_species} species")]
    UnknownSpecies { index: usize, n_species: usize },

    #[error("matrix is not Hermitian: max |A - A\u{2020}| = {max_dev:.3e}")]
    NotHermitian { max_dev: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("sequence does not match propagator cache: {0}")]
    CacheMismatch(String),

    #[error("sequence has twirl boundaries; unitary evaluation is undefined (use bb_evolve_with_twirls)")]
    TwirlBoundariesPresent,

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("amplitude {amplitude} rad/s outside [0, {max}] for species {species}")]
    AmplitudeOutOfRange {
        species: usize,
        amplitude: f64,
        max: f64,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("deviation matrix has zero norm")]
    ZeroNormState,

    #[error("density-matrix kinds differ")]
    KindMismatch,

    #[error("marked set is empty")]
    EmptyMarkedSet,

    #[error("marked index {index} out of range for database size {q}")]
    MarkedOutOfRange { index: usize, q: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("Chebyshev T of fractional order {order} undefined at x = {x} < -1")]
    ChebyshevDomain { order: f64, x: f64 },

    #[error("genome shape mismatch: {0}")]
    GenomeShape(String),

    #[error("unitary objective cannot score genomes with twirl genes")]
    TwirlGenesOnUnitaryObjective,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
