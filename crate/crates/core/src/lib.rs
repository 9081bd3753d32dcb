//! Alpha-reliable combined-mean traffic equilibrium (CMTE) on road networks
//! whose link capacities degrade uniformly at random.
//!
//! The crate is organised bottom-up:
//!
//! * [`net_model`] parses networks, enumerates routes and builds incidences.
//! * [`stochastic_bpr`] gives link and route travel-time moments under BPR
//!   cost with capacity `C ~ U(θ·C̄, C̄)`.
//! * [`risk_indices`] holds the standard-normal numerics and the
//!   MTT / TTB / MBTT / METT / CMTT index family.
//! * [`equilibrium`] assembles the variational inequality over route flows
//!   and OD multipliers and solves it with a backtracking extra-gradient method.
//! * [`mc_oracle`] is an independent Monte-Carlo checker for the closed forms.
//! * [`scenario`] runs single solves and parameter sweeps and writes results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod error;
pub mod mc_oracle;
pub mod net_model;
pub mod risk_indices;
pub mod scenario;
pub mod stochastic_bpr;

pub use error::{Error, Result};
