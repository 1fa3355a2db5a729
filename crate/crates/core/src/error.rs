//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the library. Domain failures carry their canonical
/// name in the message so callers (and the CLI) can surface them verbatim.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("MissingDepth: pixel point carries no depth value")]
    MissingDepth,

    #[error("NonPositiveDepth: depth {depth} must be > 0{}", joint.map(|j| format!(" (joint {j})")).unwrap_or_default())]
    NonPositiveDepth { depth: f64, joint: Option<usize> },

    #[error("DegenerateView: gravity row is orthogonal to the pose extent (|denominator| < {eps})")]
    DegenerateView { eps: f64 },

    #[error("BehindCamera: camera-frame depth {z_c} is not positive")]
    BehindCamera { z_c: f64 },

    #[error("NonOrthonormalRotation: max deviation {deviation} exceeds 1e-9")]
    NonOrthonormalRotation { deviation: f64 },

    #[error("DegeneratePose: {0}")]
    DegeneratePose(String),

    #[error("EmptyLibrary: pose library holds no entries")]
    EmptyLibrary,

    #[error("UnknownClass: class id {0} is not one of 1..=30")]
    UnknownClass(u32),

    #[error("RegionOutOfBounds: region lo {lo:?} hi {hi:?} does not fit grid dims {dims:?}")]
    RegionOutOfBounds {
        lo: [usize; 3],
        hi: [usize; 3],
        dims: [usize; 3],
    },

    #[error("NoForeground: no heat-map pixel exceeds threshold {0}")]
    NoForeground(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
