use thiserror::Error;

/// Errors raised across the simulation crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty swarm")]
    EmptySwarm,
    #[error("total reduction: every amplitude is below the amplitude quantum {epsilon}")]
    TotalReduction { epsilon: f64 },
    #[error("degenerate state: no elementary events to draw from")]
    Degenerate,
    #[error("memory budget exceeded: population {population} > cap {cap}")]
    MemoryBudget { population: u64, cap: u64 },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("interference condition violated: {0}")]
    Interference(String),
    #[error("swarm stability violation: {0}")]
    Stability(String),
    #[error("disjointness violated: overlap {overlap:e}")]
    Disjointness { overlap: f64 },
    #[error("matrix too large for permanent: n = {n} (max {max})")]
    TooLarge { n: usize, max: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
