use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row {row} is not stochastic (sum deviates from 1 by {deficit:e})")]
    NotStochastic { row: usize, deficit: f64 },

    #[error("entry {index} is negative or not finite ({value})")]
    InvalidEntry { index: usize, value: f64 },

    #[error("unknown built-in channel `{0}`")]
    UnknownName(String),

    #[error("parameter {0} is out of range")]
    EpsilonOutOfRange(f64),

    #[error("channel is not a finite-memory state channel")]
    NotFiniteMemory,

    #[error("channel is not unifilar")]
    NotUnifilar,

    #[error("channel is neither unifilar nor finite-memory; the dual MDP is not finite")]
    NotFiniteClass,

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("size {required} exceeds the configured cap {cap}")]
    CapExceeded { required: u128, cap: u128 },

    #[error("enumeration needs {required} candidate tables, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("parameter {index} is not finite")]
    NonFinite { index: usize },

    #[error("test distribution entry ({q}, {y}) = {value:e} is below the positivity floor")]
    BelowFloor { q: usize, y: usize, value: f64 },

    #[error("value iteration did not converge in {iterations} iterations (gain in [{lower}, {upper}])")]
    NotConverged { iterations: usize, lower: f64, upper: f64 },

    #[error("policy induces {classes} recurrent classes")]
    MultichainDetected { policy: Vec<usize>, classes: usize },

    #[error("output {y} has zero probability under the current belief and input")]
    UnreachableOutput { y: usize },

    #[error("quantized belief MDP exceeds the state budget of {budget}")]
    StateBudgetExceeded { budget: usize },

    #[error("input distribution is not BCJR-invariant (max violation {max_violation:e})")]
    BcjrViolated { max_violation: f64 },

    #[error("initial (s, q) lies in a class with period {period}")]
    PeriodicClass { period: usize },

    #[error("initial (s, q) is not in a closed communicating class")]
    NotRecurrent,

    #[error("no feasible point found")]
    EmptyFeasibleSet,

    #[error("linear system is singular")]
    Singular,

    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
