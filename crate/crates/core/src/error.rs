use thiserror::Error;

/// Errors raised by the identification toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no excitable odd harmonic in band [{f_min_hz} Hz, {f_max_hz} Hz]")]
    NoExcitableHarmonic { f_min_hz: f64, f_max_hz: f64 },

    #[error("harmonic {harmonic} ({freq_hz} Hz) violates the Nyquist bound {nyquist_hz} Hz")]
    Nyquist {
        harmonic: u64,
        freq_hz: f64,
        nyquist_hz: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal is identically zero")]
    ZeroSignal,

    #[error("record metadata mismatch: {0}")]
    MetadataMismatch(String),

    #[error("record is not periodic: {0}")]
    NonPeriodic(String),

    #[error("frequency must be strictly positive, got {0} rad/s")]
    NonPositiveFrequency(f64),

    #[error("rational model has a pole at {omega} rad/s")]
    Pole { omega: f64 },

    #[error("no frequency bin selected for estimation")]
    EmptyBinSelection,

    #[error("regression has {rows} real rows for {cols} unknowns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("cannot normalize the estimate: a_1 is numerically zero")]
    Normalization,

    #[error("noise covariances unavailable (need at least 2 periods); use unweighted TLS")]
    CovariancesUnavailable,

    #[error("coefficients inconsistent with Randles structure: {0}")]
    InconsistentCoefficients(String),

    #[error("frequency grids do not match: {0}")]
    GridMismatch(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl Error {
    /// True when the failure comes from the numerics rather than from the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Pole { .. }
                | Error::Normalization
                | Error::InconsistentCoefficients(_)
                | Error::Linalg(_)
                | Error::ZeroSignal
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
