use std::fmt;

/// One reason a model description was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// The offending reaction, state or species, as written in the model.
    pub subject: String,
    pub reason: String,
}

impl Violation {
    pub fn new(subject: impl Into<String>, reason: impl Into<String>) -> Self {
        Violation {
            subject: subject.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.reason)
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("model rejected: {}", join(.0))]
    Violation(Vec<Violation>),

    #[error("cannot read model: {0}")]
    Parse(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("environment state `{0}` has zero exit rate")]
    AbsorbingState(String),

    #[error("environment has {0} states, expected a single state")]
    NotSingleton(usize),

    #[error("span [{u}, {t}] is not inside the path horizon [0, {horizon}]")]
    SpanOutOfRange { u: f64, t: f64, horizon: f64 },

    #[error("adaptive quadrature exceeded depth {depth} on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64, depth: usize },

    #[error("requested count {requested} exceeds the lattice cap {cap}")]
    TruncationTooSmall { requested: u64, cap: u64 },

    #[error("{count} burst configurations exceed the enumeration cap {cap}")]
    TooManyConfigurations { count: u128, cap: u128 },

    #[error("joint simulation exceeded {steps} steps before time {time}")]
    StepBudgetExceeded { steps: u64, time: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("no alpha up to {alpha_max} passed the contraction test")]
    BudgetExhausted { alpha_max: usize },

    #[error("E[C^{q}] has upper confidence bound {ucb} >= 1")]
    UnstableDenominator { q: u32, ucb: f64 },

    #[error("error certificate needs alpha = 1 (found {found})")]
    AlphaNotOne { found: String },

    #[error("overflow mass {mass:e} exceeds tolerance {tol:e}")]
    OverflowTooLarge { mass: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the model itself rather than by numerics.
    pub fn is_model_rejection(&self) -> bool {
        matches!(self, Error::Violation(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
