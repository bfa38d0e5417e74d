use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the mathematical domain of a function.
    #[error("domain error in {func}: {msg}")]
    Domain { func: &'static str, msg: String },

    #[error("point is off the support of the {dist} distribution: {msg}")]
    Support { dist: &'static str, msg: String },

    #[error("stereographic inverse is singular at the north pole (1 - s_last = {gap:e})")]
    Singularity { gap: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "degenerate interpolation path: linear interpolant norm {norm:e} at lambda = {lambda}"
    )]
    DegeneratePath { norm: f64, lambda: f64 },

    #[error("geodesic is undefined for antipodal points (angle {angle})")]
    UndefinedGeodesic { angle: f64 },

    /// A non-finite value appeared; `layer` is the chain index that produced
    /// it, or `None` when it came from the base distribution or manifold map.
    #[error("non-finite value at layer {layer:?}: {msg}")]
    NonFinite { layer: Option<usize>, msg: String },

    /// Decoding an encoded point missed the original by more than `tol`.
    #[error("round trip error {err:e} exceeds tolerance {tol:e}")]
    RoundTrip { err: f64, tol: f64 },

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            func,
            msg: msg.into(),
        }
    }

    pub(crate) fn support(dist: &'static str, msg: impl Into<String>) -> Self {
        Error::Support {
            dist,
            msg: msg.into(),
        }
    }
}
