use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not fit the operation's shape algebra.
    Dimension { op: &'static str, detail: String },
    /// A class index outside `[0, classes)`.
    Label { index: usize, classes: usize },
    /// An API precondition was violated by the caller.
    Contract(String),
    /// Two evaluations of the same function at the same point disagreed.
    Determinism,
    /// Inconsistent configuration (e.g. a cycle in a merge table).
    Config(String),
    /// No usable token vectors for a label.
    Embedding { label: String },
    /// Out-of-range numeric parameter.
    Parameter(String),
    /// A value violates a domain invariant.
    Validation(String),
    /// Inputs refer to each other inconsistently (e.g. unknown image id).
    Data(String),
    /// Training produced a non-finite loss.
    Divergence { step: usize },
    /// No keyword rule applies to a label.
    UnresolvedKeyword { label: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            Error::Label { index, classes } => {
                write!(f, "label {index} out of range for {classes} classes")
            }
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Determinism => f.write_str("function is not deterministic"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Embedding { label } => write!(f, "no embedding for label {label:?}"),
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Divergence { step } => write!(f, "training diverged at step {step}"),
            Error::UnresolvedKeyword { label } => {
                write!(f, "no keyword rule resolves label {label:?}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn dim_err(op: &'static str, detail: String) -> Error {
    Error::Dimension { op, detail }
}
