use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix did not have the length the model requires.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// Exact enumeration was requested for a model with too many units.
    ModelTooLarge { units: usize, limit: usize },
    /// An operation that averages over samples got none.
    EmptyInput(&'static str),
    InvalidArgument(&'static str),
    NonFinite(&'static str),
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    LabelOutOfRange { label: usize, class_count: usize },
    /// Annihilation would leave the layer with no hidden neurons.
    WouldRemoveAllHidden,
    ValueOutOfRange { what: &'static str, value: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, found {found}"),
            Error::ModelTooLarge { units, limit } => write!(
                f,
                "model has {units} units, exact enumeration is limited to {limit}"
            ),
            Error::EmptyInput(what) => write!(f, "{what} must not be empty"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::IndexOutOfRange { what, index, bound } => {
                write!(f, "{what} index {index} out of range (< {bound})")
            }
            Error::LabelOutOfRange { label, class_count } => {
                write!(f, "label {label} out of range for {class_count} classes")
            }
            Error::WouldRemoveAllHidden => f.write_str("cannot remove every hidden neuron"),
            Error::ValueOutOfRange { what, value } => {
                write!(f, "{what} value {value} outside [0, 1]")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
