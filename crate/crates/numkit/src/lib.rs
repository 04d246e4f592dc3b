//! Minimal dense-tensor math with reverse-mode automatic differentiation.
//!
//! This crate provides exactly what the sequence models in this workspace
//! need and nothing more: a contiguous row-major [`Tensor`], a tape-style
//! [`Graph`] that records differentiable operations and replays them in
//! reverse to produce gradients, and a Nesterov-momentum SGD optimizer.
//!
//! Design points worth knowing up front:
//!
//! * **Precision is generic.** Everything is parameterized over [`Scalar`]
//!   (`f32` or `f64`). Training and decoding run in `f32`; the `f64`
//!   instantiation exists so finite-difference gradient checks have enough
//!   headroom to be meaningful.
//! * **NaN/Inf is an error, not a value.** Every operation validates its
//!   output and fails loudly instead of letting a poisoned value propagate
//!   through a training step.
//! * **Determinism.** All operations use fixed reduction orders, so
//!   identical inputs produce bit-identical outputs within one build.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;

mod error;

pub use error::{NumError, Result};
pub use graph::{Graph, NodeRef, PadMode};
pub use optim::NesterovSgd;
pub use scalar::Scalar;
pub use tensor::Tensor;
