use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{path}: probabilities sum to {sum} (expected 1)")]
    NotNormalized { path: String, sum: f64 },

    #[error("{path}: entry {value} is not a valid probability")]
    InvalidProbability { path: String, value: f64 },

    #[error("{path}: reward {value} outside [{lo}, {hi}]")]
    RewardOutOfRange {
        path: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{path}: index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        path: String,
        index: usize,
        limit: usize,
    },

    #[error("{0} must be positive")]
    Empty(&'static str),

    #[error("episode {episode}, step {step}: next state {next} does not match the following state {found}")]
    BrokenChain {
        episode: usize,
        step: usize,
        next: usize,
        found: usize,
    },

    #[error("every state-action occupancy is zero")]
    NoCoverage,

    #[error("dataset holds no episodes, the initial distribution is undefined")]
    NoEpisodes,

    #[error("exhaustive enumeration needs {size} policies, above the cap of {cap}; use sampled mode")]
    EnumerationCap { size: u128, cap: u64 },

    #[error("policy {index} leaves the local class: value gap {gap} exceeds eps_opt {eps_opt}")]
    NotInLocalClass { index: usize, gap: f64, eps_opt: f64 },

    #[error("eps_opt must be finite and nonnegative, got {0}")]
    InvalidRadius(f64),

    #[error("the two-step construction needs horizon 2, got {0}")]
    HorizonNotTwo(usize),

    #[error("the construction needs at least {needed} actions, got {found}")]
    TooFewActions { needed: usize, found: usize },

    #[error("optimal value increment at step {step} is negative ({value}); rewards must be nonnegative")]
    NegativeIncrement { step: usize, value: f64 },

    #[error("target feature is not representable by the anchors (residual {residual})")]
    NotRepresentable { residual: f64 },

    #[error("no anchor coefficients resolved for pair ({state}, {action})")]
    UnresolvedPair { state: usize, action: usize },

    #[error("pair ({state}, {action}) is not representable by the anchors (residual {residual})")]
    UnrepresentablePair {
        state: usize,
        action: usize,
        residual: f64,
    },

    #[error("rate fit needs at least {needed} grid points, got {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("rate fit at n = {n}: {found} replicates, need at least {needed}")]
    TooFewReplicates { n: u64, found: usize, needed: usize },

    #[error("mean metric at n = {n} is {mean}; a log-log fit needs positive values")]
    NonPositiveMean { n: u64, mean: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;
