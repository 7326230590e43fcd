//! Exact rational arithmetic and a small exact simplex solver.
//!
//! Every region computation in this crate runs on [`Rational`] values; nothing
//! touches floating point until entropies are involved.

mod lp;
mod rational;

pub use lp::{lp_optimize, LinearProgram, LpError, LpOutcome, VarSign};
pub(crate) use rational::primitive_scaling;
pub use rational::{ParseRationalError, Rational, RationalError};
