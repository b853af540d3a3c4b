use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by the layer that raises them; the CLI maps them to
/// exit codes (config problems exit 2, numerical failures exit 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("backward requires a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("backward requires a tracked root; this value never entered the tape")]
    UntrackedRoot,

    #[error("{op}: row {row} has zero norm and cannot be normalized")]
    ZeroRow { op: &'static str, row: usize },

    #[error("{what} must not be empty")]
    EmptySet { what: &'static str },

    #[error("invalid {field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("unknown preset {name:?}; valid presets: {valid:?}")]
    UnknownPreset {
        name: String,
        valid: &'static [&'static str],
    },

    #[error("point {index} has no same-class peer, the objective is undefined for it")]
    NoSameClassPeer { index: usize },

    #[error("row {row} has norm {norm} but unit norm is required")]
    NotUnitNorm { row: usize, norm: f64 },

    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        value: f64,
    },

    #[error("checkpoint version {found} is not supported (this build reads version {supported})")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("corrupt checkpoint {path}: {detail}")]
    CheckpointCorrupt { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse: {0}")]
    TomlParse(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for config problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig { .. }
            | Error::UnknownPreset { .. }
            | Error::TomlParse(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptySet { .. } => 2,
            Error::NonFiniteLoss { .. }
            | Error::ZeroRow { .. }
            | Error::NotUnitNorm { .. }
            | Error::NonScalarRoot { .. }
            | Error::UntrackedRoot
            | Error::ShapeMismatch { .. } => 3,
            _ => 1,
        }
    }
}
