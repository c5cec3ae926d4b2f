use crate::field::ScalarField;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("field mismatch: {left} vs {right}")]
    FieldMismatch {
        left: ScalarField,
        right: ScalarField,
    },

    #[error("invalid dimension n = {0}")]
    InvalidDimension(usize),

    #[error("no maximal ETF available over {field} in dimension {n}")]
    UnsupportedDimension { field: ScalarField, n: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frame is not tight (residual {residual:.3e})")]
    NotTight { residual: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("frame does not satisfy the equality conditions")]
    ConditionsNotMet,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("feasibility undetermined (residual {residual:.3e} after {iterations} iterations)")]
    Undetermined { residual: f64, iterations: usize },

    #[error("transform is singular")]
    SingularTransform,

    #[error("absconv and the rescaled zonotope coincide; no strict gap to sample from")]
    NoStrictGap,

    #[error("sampling exhausted after {rejections} rejections")]
    SamplingExhausted { rejections: usize },

    #[error("complex subspaces are not supported by the minimal projection LP")]
    ComplexUnsupported,

    #[error("rank deficient: rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("coefficient ({row}, {col}) has modulus {modulus} above the bound {bound}")]
    CoefficientOutOfRange {
        row: usize,
        col: usize,
        modulus: f64,
        bound: f64,
    },

    #[error("all frame vectors are zero")]
    ZeroFrame,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),
}
