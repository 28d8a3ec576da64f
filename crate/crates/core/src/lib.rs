//! Variance-aware optimistic value iteration for episodic linear MDPs.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: weighted Gram matrices with Sherman–Morrison updates and
//!   log-determinant tracking.
//! - [`linmdp`]: finite-state linear MDP models, validity checks, instance
//!   generators and exact dynamic programming.
//! - [`radii`]: closed-form confidence radii and counting bounds.
//! - [`agents`]: random, oracle, LSVI-UCB and the Bernstein-bonus
//!   rare-switching agent (`LsviPlus`).
//! - [`conclab`]: Monte Carlo checks of the concentration inequalities the
//!   agent relies on.
//! - [`bench`]: seeded experiment runs with exact per-episode regret, sweeps,
//!   and CSV/JSON persistence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod bench;
pub mod conclab;
mod error;
pub mod linalg;
pub mod linmdp;
pub mod radii;
pub mod rng;

pub use error::{Error, Result};
