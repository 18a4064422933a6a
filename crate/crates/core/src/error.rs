use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("duplicate key label {0:?}")]
    DuplicateKey(char),

    #[error("key {label:?} has non-positive dimensions ({width} x {height})")]
    BadDimensions {
        label: char,
        width: f64,
        height: f64,
    },

    #[error("keys {0:?} and {1:?} overlap")]
    OverlappingKeys(char, char),

    #[error("character {0:?} is not on the layout")]
    KeyNotFound(char),

    #[error("layout has no keys")]
    EmptyLayout,

    #[error("unsupported profile version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("line {line}: {reason}")]
    LexiconLine { line: usize, reason: String },

    #[error("paired samples differ in length ({control} vs {arm})")]
    LengthMismatch { control: usize, arm: usize },

    #[error("control mean is zero; relative delta undefined")]
    ZeroControlMean,

    #[error("random streams for user {user} differ between arms")]
    PairingViolation { user: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
