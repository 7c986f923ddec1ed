use thiserror::Error;

/// Errors raised by the labeling pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("crowd has no net competence (mu = {mu}); labels are not identifiable")]
    NonPositiveMu { mu: f64 },

    #[error("task with q = 0.5 carries no signal")]
    DegenerateTask,

    #[error("task pool is empty")]
    EmptyPool,

    #[error("invalid degrees: {0}")]
    InvalidDegrees(String),

    #[error("budget exhausted: requested {requested}, remaining {remaining}")]
    BudgetExhausted { requested: usize, remaining: usize },

    #[error("budget {budget} cannot cover the plan: {reason}")]
    InfeasibleBudget { budget: usize, reason: String },

    #[error("iteration did not converge after {iterations} steps")]
    NoConvergence { iterations: usize },

    #[error("graph has an isolated node: {0}")]
    IsolatedNode(String),

    #[error("task {task} received no answers")]
    NoAnswers { task: usize },

    #[error("geometric ratio equals one; closed form is singular")]
    SingularGeometricRatio,

    #[error("bound preconditions violated: {}", .0.join(", "))]
    ConditionsViolated(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
