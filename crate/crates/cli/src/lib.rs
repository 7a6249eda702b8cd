//! Config-driven experiment runner: parse a JSON config, run bounds,
//! simulations, lemma checks or rate checks per sweep point, emit CSV/JSON.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Format, Method, Task};
pub use emit::{emit, emit_to_string, sig12, ResultRow, CSV_HEADER};
pub use run::{run, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] adn_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
