use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    /// The configuration would allocate more accumulator elements than allowed.
    #[error("element budget exceeded: {required} elements required, budget is {budget}")]
    ElementBudget { required: u128, budget: u128 },

    #[error("attention read requested on an empty context")]
    EmptyContext,

    /// The truncated kernel normalizer is too close to zero (or exactly zero).
    /// Both halves of the ratio are kept for diagnosis.
    #[error("degenerate denominator {denominator:e} (guard {threshold:e})")]
    DegenerateDenominator {
        denominator: f64,
        threshold: f64,
        numerator: Vec<f64>,
    },

    #[error("token {index}: {source}")]
    AtToken {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("token stream: {0}")]
    Format(String),

    #[error("unknown attention method `{0}`")]
    UnknownMethod(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn at_token(self, index: usize) -> Self {
        match self {
            e @ Error::AtToken { .. } => e,
            e => Error::AtToken {
                index,
                source: Box::new(e),
            },
        }
    }

    /// Strips any token-index wrapper.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtToken { source, .. } => source.root(),
            e => e,
        }
    }
}
