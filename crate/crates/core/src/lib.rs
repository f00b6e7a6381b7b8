//! Cycle-level and analytical models of a compressed-sparse CNN inference
//! accelerator built around an input-stationary Cartesian-product dataflow,
//! plus the dense baselines it is compared against.
//!
//! Every simulated layer can be checked bit-exactly against
//! [`tensors::reference_conv`].

pub mod analytic;
pub mod codec;
pub mod dataflow;
pub mod error;
pub mod simulator;
pub mod tensors;
pub mod workloads;

pub use error::{Error, Result};
pub use tensors::{DenseTensor, DimRole, LayerShape};
