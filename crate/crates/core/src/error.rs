use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("work area {work} is not contained in task area {task}")]
    NotNested { work: String, task: String },

    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },

    #[error("{0} requires at least one element")]
    Empty(&'static str),

    #[error("generalized median needs {expected} constants per axis, got {got}")]
    ConstantCount { expected: usize, got: usize },

    #[error("best-response bracket exceeded {limit:e} bits/s for worker {worker}")]
    BracketOverflow { worker: usize, limit: f64 },

    #[error("best-response iteration did not converge after {sweeps} sweeps (last change {last_change:e})")]
    NashNotConverged {
        sweeps: usize,
        last_change: f64,
        last_iterate: Vec<f64>,
    },

    #[error("worker {worker} fails the best-response check at the fixed point (relative residual {residual:e})")]
    NotAnEquilibrium { worker: usize, residual: f64 },

    #[error(
        "platform optimum sits on the search upper bound P_c = {bound:e}; raise pc_upper_bound"
    )]
    UpperBoundBinding { bound: f64 },

    #[error("projected gradient ascent did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    PlacementNotConverged { iterations: usize, grad_norm: f64 },

    #[error("deployment roster is empty: no worker has a positive equilibrium rate")]
    EmptyRoster,

    #[error("instance seed {seed}: {source}")]
    Replication {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn with_seed(self, seed: u64) -> Self {
        Error::Replication {
            seed,
            source: Box::new(self),
        }
    }
}
