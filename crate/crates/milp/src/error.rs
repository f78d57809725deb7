use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("row {row} references undeclared variable {var} (only {nvars} declared)")]
    UnknownVariable { row: usize, var: usize, nvars: usize },
    #[error("variable {var} has lower bound {lb} above upper bound {ub}")]
    InvertedBounds { var: usize, lb: f64, ub: f64 },
    #[error("non-finite coefficient in {what}")]
    NonFinite { what: String },
    #[error("interchange parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
