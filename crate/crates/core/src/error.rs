use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity: level {level} would hold {count} intervals (limit n_max <= {limit})")]
    Capacity { level: usize, count: String, limit: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("ill-conditioned submatrix: condition number {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
