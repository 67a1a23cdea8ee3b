//! Finite-MDP laboratory for temporal-difference learning, Dirichlet norms
//! and reversible policies.
//!
//! The crate is organised bottom-up: [`mdp`] builds induced chains from
//! MDPs and policies, [`chain`] analyses them, [`value`] solves for exact
//! value functions, [`approx`] provides parametric value families, [`td`]
//! implements stochastic and expected TD, [`policy_grad`] computes softmax
//! policy gradients, and [`reversible`] / [`grid`] construct reversible
//! chains.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod chain;
pub mod error;
pub mod fixtures;
pub mod formats;
pub mod grid;
pub mod mdp;
pub mod policy_grad;
pub mod reversible;
pub mod td;
pub mod value;
pub mod verify;

pub use error::{Error, Result};

pub use nalgebra;
pub use rand;
pub use rand_chacha;
