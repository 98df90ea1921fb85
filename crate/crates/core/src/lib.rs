//! Kinetic transport of a phonon-like chain through an interface that
//! transmits, reflects or absorbs, and its fractional-diffusion limit.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod fractional_pde;
pub mod harness;
pub mod io;
pub mod kinetic_det;
pub mod kinetic_mc;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod stable_limit;
pub mod stats;

pub use error::{Error, Result};
