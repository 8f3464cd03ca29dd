use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {gap:e}")]
    NonSymmetric { i: usize, j: usize, gap: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("jacobi eigensolver did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("cannot build a subspace from zero keys")]
    EmptyKeys,
    #[error("key {index} is not unit norm (norm = {norm})")]
    NonUnitKey { index: usize, norm: f64 },
    #[error("{k} keys exceed embedding dimension {dim}")]
    KExceedsDim { k: usize, dim: usize },
    #[error("every eigenvalue is at or below the rank floor")]
    AllZeroSpectrum,
    #[error("positive index {index} out of range for {count} candidates")]
    PositiveOutOfRange { index: usize, count: usize },
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid config `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),
    #[error("corrupt dataset file: {0}")]
    DatasetCorrupt(String),
    #[error("non-finite loss at step {step}: {diagnostic}")]
    NonFiniteLoss { step: usize, diagnostic: String },
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonSquare { .. } => "non_square",
            Error::NonSymmetric { .. } => "non_symmetric",
            Error::NonFinite(_) => "non_finite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NoConvergence { .. } => "no_convergence",
            Error::EmptyKeys => "empty_keys",
            Error::NonUnitKey { .. } => "non_unit_key",
            Error::KExceedsDim { .. } => "k_exceeds_dim",
            Error::AllZeroSpectrum => "all_zero_spectrum",
            Error::PositiveOutOfRange { .. } => "positive_out_of_range",
            Error::NonFiniteActivation { .. } => "non_finite_activation",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFiniteGradient => "non_finite_gradient",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::CheckpointCorrupt(_) => "checkpoint_corrupt",
            Error::DatasetCorrupt(_) => "dataset_corrupt",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Io(_) => "io",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NoConvergence { .. }
                | Error::AllZeroSpectrum
                | Error::NonFiniteActivation { .. }
                | Error::NonFiniteGradient
                | Error::NonFiniteLoss { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
