use thiserror::Error;

/// Errors raised by the divided-difference rules and the modules built on them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeltaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error {0}")]
    Parse(#[from] crate::expr::ParseError),

    #[error("overflow in {op}")]
    Overflow { op: &'static str },

    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid spline: {0}")]
    Spline(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("degenerate model: model difference is zero")]
    DegenerateModel,

    #[error("in `{node}`: {source}")]
    AtNode {
        node: String,
        #[source]
        source: Box<DeltaError>,
    },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<DeltaError>,
    },
}

impl DeltaError {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        DeltaError::Domain {
            op,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the inputs rather than by a numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        match self {
            DeltaError::Numerical(_) | DeltaError::Overflow { .. } => false,
            DeltaError::AtIteration { source, .. } | DeltaError::AtNode { source, .. } => source.is_input_error(),
            _ => true,
        }
    }
}

pub type Result<T, E = DeltaError> = std::result::Result<T, E>;

impl DeltaError {
    /// The innermost error, with node and iteration context stripped.
    pub fn root_cause(&self) -> &DeltaError {
        match self {
            DeltaError::AtNode { source, .. } | DeltaError::AtIteration { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
