use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scene, model spec, or config violates one of its invariants.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{what}: expected length {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("transmitter and receiver coincide; path length would be zero")]
    CoincidentEndpoints,

    #[error("UE region has zero footprint area")]
    DegenerateRegion,

    #[error("all CIR values are zero; cannot fit a scale factor")]
    AllZeroCir,

    #[error("test split is empty")]
    EmptyTestSplit,

    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGradient { name: String },

    #[error("loss became non-finite at step {step}; diagnostic checkpoint at {checkpoint}")]
    NonFiniteLoss { step: usize, checkpoint: PathBuf },

    #[error("unknown preset {name:?}")]
    UnknownPreset { name: String },

    #[error("corrupt dataset file at byte {offset}: {what}")]
    Corrupt { offset: u64, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("TOML parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("TOML encode error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
