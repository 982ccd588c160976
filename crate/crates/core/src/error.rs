use std::fmt;
use std::io;

/// Convenience alias for fallible operations in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by volumes, layers, the planner, ingestion, and
/// persistence.
#[derive(Debug)]
pub enum Error {
    /// A volume was requested with a zero dimension, or a hyperparameter
    /// that must be positive was not.
    Dimension(String),
    /// An access fell outside a volume's (padded) extent.
    Index(String),
    /// An operation produced or received a non-finite value.
    Numeric(String),
    /// Two shapes that must agree did not.
    Shape(String),
    /// `(v - r + 2z) / s` is not a whole integer: the windows do not fit
    /// neatly across the input at this stride.
    StrideFit { v: usize, r: usize, z: usize, s: usize },
    /// The window cannot cover the padded input even once: `v + 2z < r`.
    Geometry { v: usize, r: usize, z: usize },
    /// A class label was outside `[0, classes)`.
    Label { label: usize, classes: usize },
    /// An architecture violated a structural rule (e.g. no leading input
    /// layer).
    Arch(String),
    /// An operation was called before its prerequisite state existed.
    State(String),
    /// Image and label collections have different lengths.
    Pairing { images: usize, labels: usize },
    /// A byte stream did not match the expected format.
    Format(String),
    /// A payload had the wrong byte length.
    Length { expected: usize, actual: usize },
    /// A checkpoint carried an unrecognized format version.
    UnknownVersion(u32),
    /// An architecture file failed to parse.
    Parse { line: usize, message: String },
    /// A caller violated a documented precondition.
    Precondition(String),
    /// An error attributed to a specific layer of an architecture.
    AtLayer { index: usize, source: Box<Error> },
    /// An error attributed to a specific minibatch of a training run.
    AtBatch { index: usize, source: Box<Error> },
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Index(msg) => write!(f, "index error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::StrideFit { v, r, z, s } => write!(
                f,
                "stride-fit error: ((v - r + 2z) / s) + 1 = (({v} - {r} + {}) / {s}) + 1 \
                 is not a whole integer",
                2 * z
            ),
            Error::Geometry { v, r, z } => write!(
                f,
                "geometry error: window {r} exceeds padded extent {v} + 2*{z}"
            ),
            Error::Label { label, classes } => {
                write!(f, "label error: label {label} outside [0, {classes})")
            }
            Error::Arch(msg) => write!(f, "architecture error: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Pairing { images, labels } => write!(
                f,
                "pairing error: {images} images but {labels} labels"
            ),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Length { expected, actual } => write!(
                f,
                "length error: expected {expected} bytes, got {actual}"
            ),
            Error::UnknownVersion(v) => write!(f, "unknown checkpoint version {v}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::AtLayer { index, source } => write!(f, "layer {index}: {source}"),
            Error::AtBatch { index, source } => write!(f, "batch {index}: {source}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::AtLayer { source, .. } | Error::AtBatch { source, .. } => Some(source),
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

impl Error {
    /// Wraps an error with the index of the architecture layer it arose in.
    pub fn at_layer(self, index: usize) -> Self {
        Error::AtLayer {
            index,
            source: Box::new(self),
        }
    }

    /// Wraps an error with the index of the minibatch it arose in.
    pub fn at_batch(self, index: usize) -> Self {
        Error::AtBatch {
            index,
            source: Box::new(self),
        }
    }
}
