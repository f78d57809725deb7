use std::fmt;

use thiserror::Error;

/// One problem found by a validator, anchored at a dotted path into the
/// instance (for example `stochastics.tree.nodes[3]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub at: String,
    pub msg: String,
}

impl Violation {
    pub fn new(at: impl Into<String>, msg: impl Into<String>) -> Self {
        Violation { at: at.into(), msg: msg.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.at, self.msg)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown tick {0}")]
    UnknownTick(String),
    #[error("tick {0} is on the slowest timescale and has no parent")]
    NoParent(String),
    #[error("tick {0} is on the finest timescale and has no segment")]
    FinestLevel(String),
    #[error("{} validation violation(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),
    #[error("{what}: {count} exceeds the budget of {limit}")]
    Budget { what: String, count: u128, limit: u128 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: String, expected: usize, got: usize },
    #[error("point not on grid: {0}")]
    OffGrid(String),
    #[error("rollout blocked at {0}: no feasible control")]
    InfeasibleRollout(String),
    #[error("empty scenario tree")]
    EmptyTree,
    #[error("instance file: {0}")]
    Parse(String),
    #[error(transparent)]
    Milp(#[from] mts_milp::MilpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_if_any(v: Vec<Violation>) -> Result<()> {
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(v))
    }
}
