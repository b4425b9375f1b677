//! File formats, parallel Monte Carlo sweeps and the `offrl` command line on
//! top of [`offrl_core`].

pub use offrl_core as core;

pub mod formats;
pub mod sweep;
