//! Discounted reach-avoid and stabilize-avoid value functions on grids.
//!
//! The crate computes, for control-affine systems under bounded adversarial
//! disturbance:
//!
//! * the discounted infinite-horizon reach-avoid value `V_gamma`, whose zero
//!   sublevel set is the reach-avoid set ([`hji`], cross-checked by the
//!   semi-Lagrangian value iteration in [`bellman`]);
//! * the robust control Lyapunov-value function and its smallest invariant
//!   set ([`rclvf`]);
//! * the two-step stabilize-avoid value ([`sa`]);
//! * feedback controllers and closed-loop rollouts ([`control`]).
//!
//! Runnable walkthroughs live in `examples/`; the `discount-reach` binary
//! drives the same pipelines from TOML experiment files ([`config`], [`cli`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod geometry;
pub mod dynamics;
mod scheme;
pub mod hji;
pub mod bellman;
pub mod rclvf;
pub mod sa;
pub mod control;
pub mod scenarios;
pub mod config;
pub mod cli;

pub use error::{Error, Result};
