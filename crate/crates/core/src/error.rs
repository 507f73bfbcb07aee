use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("subcarrier {subcarrier}: rank below {required} (sigma ratio {ratio:e})")]
    RankDeficient {
        subcarrier: usize,
        required: usize,
        ratio: f64,
    },

    #[error("stream {stream} has zero SINR")]
    ZeroSinr { stream: usize },

    #[error("inner fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    InnerNotConverged { iterations: usize, residual: f64 },

    #[error("dense construction limited to N_c <= {limit}, got {block_len}")]
    TooLarge { block_len: usize, limit: usize },
}
