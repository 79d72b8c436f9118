//! Functional and cycle-level model of a MIMD-SIMD accelerator for
//! generative networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: layer geometry, tensors, workload files, reference kernels.
//! * [`planner`]: output-row and filter-row reorganization of transposed
//!   convolutions and inconsequential-MAC statistics.
//! * [`isa`]: the micro-op set, its 65-bit global encoding, the textual
//!   assembler and the lowering from a dataflow plan to a program.
//! * [`engines`]: per-PE access (strided index generators) and execute engines.
//! * [`array`]: the clock-stepped PE-array simulator and the dense baseline.
//! * [`metrics`]: event counters, energy accounting and run comparison.
//! * [`runner`]: whole-workload runs and report generation.
//!
//! All numeric code is generic over [`Scalar`]; [`Fx16`] (Q8.8) gives
//! bit-exact results, `f32` is provided for cross-checks.

pub mod array;
pub mod engines;
pub mod isa;
pub mod metrics;
pub mod model;
pub mod planner;
pub mod runner;
pub mod scalar;

pub use scalar::{ElemKind, Fx16, Scalar};

pub type FixedTensor = model::Tensor<Fx16>;
pub type FloatTensor = model::Tensor<f32>;
