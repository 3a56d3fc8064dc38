//! Quadrotor trajectory-tracking bench: Euler-Lagrange model, linear and nonlinear MPC,
//! classical baseline trackers and a closed-loop harness with RMSE metrics.

pub mod baselines;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod lmpc;
pub mod metrics;
pub mod mpc;
pub mod nmpc;
pub mod numerics;
pub mod qp;
pub mod reference;
pub mod sim;

pub use error::{Error, Result};
