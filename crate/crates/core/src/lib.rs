//! Multi-timescale stochastic programs: nested time grids, per-timescale
//! uncertainty, linear stage templates coupled through aggregated states,
//! and two ways to solve them (an extensive-form MILP and segment-wise
//! value-function dynamic programming), plus a brute-force oracle and a
//! three-timescale unit-commitment builder.

pub mod error;
pub mod instantiate;
pub mod model;
pub mod oracle;
pub mod samples;
pub mod scenario;
pub mod segdp;
pub mod stochastic;
pub mod timegrid;
pub mod ucdemo;

pub use error::{Error, Result, Violation};
