//! Centeredness, weak centeredness and Morrel–Muhly type of weighted
//! composition operators on discrete L² spaces, with weighted shifts on
//! directed trees as the main source of instances.
//!
//! The analytic side ([`transfer`], [`centered`], [`classify`]) works
//! pointwise with Radon–Nikodym derivatives and conditional expectations on a
//! finite truncation window. The [`oracle`] materializes the same operator as a
//! dense matrix and tests the operator-algebra definitions directly, so the two
//! can be cross-checked.

// Vertices are dense indices, so index loops are the natural form here.
#![allow(clippy::needless_range_loop)]

pub mod builtins;
pub mod centered;
pub mod classify;
pub mod cli;
pub mod continuous;
pub mod discrete;
pub mod error;
pub mod oracle;
pub mod report;
pub mod transfer;
pub mod tree;

pub use num_complex::Complex64;

pub use error::{Error, Result};
