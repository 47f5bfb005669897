use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("term budget of {budget} exceeded; best reconstruction error {best_error:.3e}")]
    BudgetExceeded { budget: usize, best_error: f64 },
    #[error("memory budget exceeded: {0}")]
    Memory(String),
    #[error("blowup at t = {t}: {msg}")]
    Blowup { t: f64, msg: String },
    #[error("boundary contamination at t = {t}: mass fraction {fraction:.3e}")]
    Boundary { t: f64, fraction: f64 },
    #[error("solve failed for l = {l}, k = {k}: {source}")]
    Channel {
        l: usize,
        k: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
