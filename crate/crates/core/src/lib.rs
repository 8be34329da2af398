//! Deterministic building blocks for labelled pseudo NTK experiments.
//!
//! Everything in this crate is pure computation over `f64` slices: a small
//! dense matrix type, a seeded generator with a stable stream, multilayer
//! perceptrons with manual backprop, empirical tangent kernels and their
//! label-aware variants, clustering and pruning analyses on top of those
//! kernels, synthetic dataset generation, and a toy gridworld Q-learner.
//!
//! The crate is `no_std` (with `alloc`) and routes all transcendental math
//! through `libm`, so results are bit-identical across platforms and across
//! thread counts. File formats, threading and the command line live in the
//! companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod data;
pub mod error;
pub mod kernel;
pub mod model;
pub mod numerics;
pub mod rl;

pub use error::{Error, Result};
