//! A small exact MILP toolkit.
//!
//! [`StandardForm`] is the solver-neutral carrier: sparse rows with a sense
//! and right-hand side, variable bounds, integrality flags and a linear
//! objective (always minimized). [`solve_lp`] runs a two-phase
//! bounded-variable primal simplex (Dantzig pricing, Bland fallback on
//! stalls) over a dense explicit
//! basis inverse; [`solve_milp`] wraps it in best-first branch-and-bound.
//!
//! Everything here is sized for desk-scale instances (a few thousand
//! columns at most). There is no presolve, scaling, or warm starting.

mod bnb;
mod error;
mod form;
pub mod interchange;
mod simplex;

pub use bnb::{solve_milp, MilpOptions, MilpResult, MilpStatus};
pub use error::MilpError;
pub use form::{Row, Sense, StandardForm};
pub use simplex::{solve_lp, LpOptions, LpResult, LpStatus};

/// Integrality tolerance used by branch-and-bound and by callers checking
/// integer feasibility of a returned point.
pub const INT_TOL: f64 = 1e-6;
