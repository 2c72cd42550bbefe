use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("directed cycle through vertex `{0}`")]
    CycleDetected(String),
    #[error("tree is disconnected: `{0}` and `{1}` have no common ancestor")]
    Disconnected(String, String),
    #[error("vertex `{0}` has more than one parent")]
    DuplicateParent(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("declared root `{declared}` does not match the parentless vertex `{detected}`")]
    RootMismatch { declared: String, detected: String },
    #[error("tree has no vertices")]
    EmptyTree,
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("window too shallow: {0}")]
    WindowTooShallow(String),
    #[error("function is not constant on the fiber over `{0}`")]
    NotFiberMeasurable(String),
    #[error("zero denominator at weighted point `{0}`")]
    ZeroDenominatorAtWeightedPoint(String),
    #[error("order {requested} exceeds the valid order {valid}")]
    OrderTooLarge { requested: usize, valid: usize },
    #[error("vertex `{vertex}` has {found} children, fewer than {kappa}")]
    ValencyTooLow { vertex: String, found: usize, kappa: usize },
    #[error("ancestor of `{0}` at the requested order is outside the window")]
    UndefinedAncestor(String),
    #[error("operator is not centered: {0}")]
    NotCentered(String),
    #[error("weighted shift has zero weights; decompose it first")]
    ZeroWeights,
    #[error("singular matrix")]
    SingularMatrix,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
}

pub type Result<T> = std::result::Result<T, Error>;
