use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid tree: {0}")]
    Tree(String),

    #[error("root finding failed to converge: {what} (last residual {residual:e} after {iterations} iterations)")]
    RootFind {
        what: String,
        residual: f64,
        iterations: usize,
    },

    #[error("saddle solve failed at node {node}: residual {residual:e} after {iterations} iterations")]
    Saddle {
        node: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Wraps the error with a context string (node, path, rebalance index...).
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
