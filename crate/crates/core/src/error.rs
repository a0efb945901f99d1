use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precision exhausted at n = {n}: residual {residual:e} still above tolerance at {bits} bits (max_bits reached)")]
    PrecisionExhausted { n: u64, bits: u32, residual: f64 },

    #[error("envelope window does not fit at x = {x}: table has n_max = {n_max}, need at least {required_n_max}")]
    WindowRange {
        x: f64,
        n_max: u64,
        required_n_max: u64,
    },

    #[error("infeasible K = {k}: must exceed {threshold}")]
    InfeasibleK { k: f64, threshold: f64 },

    #[error("constant search failed: {0}")]
    SearchFailed(String),

    #[error("pushforward limit exceeded: n = {n} > {limit}; use the Monte Carlo simulator for larger populations")]
    PushforwardLimit { n: u64, limit: u64 },

    #[error("unknown kernel `{0}` (expected roulette, coinflip or parity)")]
    UnknownKernel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed table: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
