// `!(x > 0.0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod config;
pub mod constitutive;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod friction;
pub mod geometry;
pub mod harness;
pub mod integrator;
pub mod noise;
pub mod pde_ops;

pub use error::{Error, Result};
