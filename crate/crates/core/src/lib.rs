//! Reinforcement learning in drifting tabular MDPs: sliding-window optimistic
//! exploration with confidence widening, a bandit-over-RL parameter tuner,
//! extended value iteration, and exact offline oracles for dynamic regret.

// Negated float comparisons are how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod borl;
pub mod budget;
pub mod diameter;
pub mod envs;
pub mod error;
pub mod evi;
pub mod gain;
pub mod harness;
pub mod io;
pub mod mdp;
pub mod regret;
pub mod rng;
pub mod sim;
pub mod swucrl;
pub mod window;

pub use error::{Error, Result};
