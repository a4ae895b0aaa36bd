//! Bounds on the feedback capacity of finite-state channels (FSCs).
//!
//! The upper bound comes from a KL-divergence duality argument with an output
//! test distribution structured on a Q-graph. For a fixed test distribution
//! the bound is the optimal average reward of a finite Markov decision process
//! whenever the channel is unifilar or has a finite-memory state, and is
//! obtained here by relative value iteration or policy iteration.
//!
//! The lower bound is the single-letter rate `I(X,S;Y|Q)` of a BCJR-invariant
//! graph-based encoder on a unifilar channel.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`channel`] | channel kernels, classification, built-ins, finite-memory to unifilar transform |
//! | [`qgraph`] | Q-graphs, walking, validity, exhaustive enumeration |
//! | [`testdist`] | graph-based test distributions and their parameterization |
//! | [`mdp`] | average-reward MDP solvers and Bellman certificates |
//! | [`dualbound`] | the dual-bound MDP, the upper bound and its optimization over test distributions |
//! | [`lowerbound`] | (S,Q)-graph chain, BCJR invariance, achievable rates |
//! | [`analytic`] | closed forms for the NOST and noisy Ising channels |
//!
//! The crate is `no_std` (it needs `alloc`); IO, file formats and the CLI live
//! in the `fscap` crate.

#![no_std]

extern crate alloc;

pub mod analytic;
pub mod channel;
pub mod dualbound;
pub mod error;
pub mod graph;
pub mod info;
pub mod linalg;
pub mod lowerbound;
pub mod mdp;
pub mod qgraph;
pub mod search;
pub mod testdist;

pub use error::{Error, Result};

/// Tolerance used to decide that a probability vector sums to one.
pub const STOCHASTIC_TOL: f64 = 1e-12;
