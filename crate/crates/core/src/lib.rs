//! Model-based offline reinforcement learning for finite-horizon tabular MDPs
//! with a stationary transition kernel.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure numerics:
//! exact dynamic programming, the count-based plug-in estimator, uniform
//! off-policy evaluation over global and local policy classes, absorbing-MDP
//! constructions, multi-task planning from one exploration dataset, and the
//! linear anchor-representation estimator. File formats, the CLI and parallel
//! sweeps live in the `offrl` crate.
//!
//! Conventions used throughout:
//!
//! * steps are 0-based, `0..horizon`; value tables carry an extra terminal
//!   row at index `horizon` that is identically zero,
//! * transition kernels are stored flat as `[s][a][s']`, rewards as `[s][a]`,
//!   policies as `[h][s][a]`.

#![no_std]

extern crate alloc;

pub mod absorbing;
pub mod anchor;
pub mod error;
pub mod instance;
pub mod mdp;
pub mod multitask;
mod num;
pub mod ope;
pub mod plugin;
pub mod rate;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
pub use mdp::{
    evaluate_policy, minimal_occupancy, occupancy, plan_optimal, Coverage, FiniteHorizon,
    OccupancyTable, Policy, TabularMdp, ValueTable,
};
pub use plugin::{fit_plugin, l1_row_error, EmpiricalModel};
pub use rng::RngStream;
pub use trajectory::{roll_episodes, EpisodeDataset, Transition};

/// Absolute tolerance for a single dynamic-programming pass.
pub const DP_TOL: f64 = 1e-12;
/// Tolerance for quantities that accumulate over several passes (occupancies,
/// identities comparing two independent planning runs).
pub const ACCUM_TOL: f64 = 1e-10;
