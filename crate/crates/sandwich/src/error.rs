use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Arithmetic produced a non-finite value.
    #[error("overflow: {0}")]
    Overflow(String),

    /// A requested swap output cannot be produced from the pool's reserves.
    #[error("infeasible output: requested {requested} against reserve {reserve}")]
    Infeasible { requested: f64, reserve: f64 },

    /// With zero fee the adversary's unconstrained profit grows without bound.
    #[error("unbounded optimum: fee-free profit is monotone, use the slippage bound")]
    UnboundedOptimum,

    /// The profit curve has no interior maximum for these parameters.
    #[error("no interior optimum for the unconstrained attack")]
    NoInteriorOptimum,

    /// The attack front-run pushed the victim past the slippage tolerance.
    #[error("victim trade reverted: realized {realized} below tolerated {tolerated}")]
    VictimReverted { realized: f64, tolerated: f64 },

    #[error("not enough data: need {needed} observations, have {available}")]
    NotEnoughData { needed: usize, available: usize },

    #[error("search failed to converge within {iters} iterations, bracket [{lo}, {hi}]")]
    SearchFailure { iters: usize, lo: f64, hi: f64 },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("data error at {file}:{line}: {message}")]
    Data {
        file: String,
        line: u64,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn ingestion(msg: impl Into<String>) -> Self {
        Error::Ingestion(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
