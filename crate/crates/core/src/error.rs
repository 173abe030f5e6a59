use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data and files.
    Format,
    /// Numerical failures and invalid numeric arguments.
    Numeric,
}

/// Location of a problem inside a text file (1-based line numbers).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line(pub usize);

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("dimension mismatch{}: expected {expected}, found {found}", at(.line))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        line: Option<Line>,
    },

    #[error("non-finite value at {line}")]
    NonFinite { line: Line },

    #[error("non-numeric component {token:?} at {line}")]
    NonNumeric { line: Line, token: String },

    #[error("malformed record{}: {reason}", at(.line))]
    Malformed { line: Option<Line>, reason: String },

    #[error("duplicate id {id:?}{}", at(.line))]
    DuplicateId { id: String, line: Option<Line> },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error("bad trial label {label:?} at {line}")]
    BadLabel { line: Line, label: String },

    #[error("zero-norm vector{}", .id.as_deref().map(|i| format!(" (id {i:?})")).unwrap_or_default())]
    ZeroVector { id: Option<String> },

    #[error("need at least 2 classes, found {found}")]
    InsufficientClasses { found: usize },

    #[error("record {id:?} has no speaker label")]
    MissingLabel { id: String },

    #[error("requested rank {k} outside [1, {max}]")]
    BadRank { k: usize, max: usize },

    #[error("within-class scatter is singular after regularization")]
    SingularScatter,

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("trial {index} references unknown id {id:?}")]
    UnknownId { index: usize, id: String },

    #[error("value {value} outside the valid domain")]
    DomainError { value: f64 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("trial set needs at least one target and one nontarget (targets={targets}, nontargets={nontargets})")]
    DegenerateTrialSet { targets: usize, nontargets: usize },

    #[error("trial {index} has no target/nontarget label")]
    UnlabeledTrial { index: usize },

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn at(line: &Option<Line>) -> String {
    line.map(|l| format!(" at {l}")).unwrap_or_default()
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "Io",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::NonNumeric { .. } => "NonNumeric",
            Error::Malformed { .. } => "Malformed",
            Error::DuplicateId { .. } => "DuplicateId",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptArchive(_) => "CorruptArchive",
            Error::BadLabel { .. } => "BadLabel",
            Error::ZeroVector { .. } => "ZeroVector",
            Error::InsufficientClasses { .. } => "InsufficientClasses",
            Error::MissingLabel { .. } => "MissingLabel",
            Error::BadRank { .. } => "BadRank",
            Error::SingularScatter => "SingularScatter",
            Error::SingularCovariance(_) => "SingularCovariance",
            Error::UnknownId { .. } => "UnknownId",
            Error::DomainError { .. } => "DomainError",
            Error::EmptyBatch => "EmptyBatch",
            Error::TrainingDiverged { .. } => "TrainingDiverged",
            Error::DegenerateTrialSet { .. } => "DegenerateTrialSet",
            Error::UnlabeledTrial { .. } => "UnlabeledTrial",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ZeroVector { .. }
            | Error::BadRank { .. }
            | Error::SingularScatter
            | Error::SingularCovariance(_)
            | Error::DomainError { .. }
            | Error::EmptyBatch
            | Error::TrainingDiverged { .. }
            | Error::InvalidArgument(_) => ErrorClass::Numeric,
            _ => ErrorClass::Format,
        }
    }

    pub(crate) fn dim(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            line: None,
        }
    }
}
