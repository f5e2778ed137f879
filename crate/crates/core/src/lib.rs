//! Distributionally robust linear-quadratic control with Wasserstein
//! penalties.
//!
//! A controller picks `u_t` for `x_{t+1} = A x_t + B u_t + Ξ w_t` while an
//! opponent picks the disturbance distribution, paying `λ W₂²` for moving
//! away from the empirical distribution of observed samples. Optimal
//! policies are affine in the state, the opponent's best response is a
//! shifted copy of the samples, and everything reduces to Riccati
//! recursions.

// `!(x >= 0.0)` rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod finite_horizon;
pub mod infinite_horizon;
pub mod io;
pub mod linalg;
pub mod model;
pub mod powergrid;
pub mod robustness;
pub mod simulator;
pub mod tuning;

pub use error::{Error, Result};
pub use finite_horizon::{solve_finite, solve_finite_lqg, EmpiricalSchedule, FiniteSolution, ValueParams};
pub use model::{AffinePolicy, CostSpec, DiscreteDistribution, EmpiricalDistribution, Horizon, LinearSystem};
