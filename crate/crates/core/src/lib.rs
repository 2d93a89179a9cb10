//! Desk-scale language modelling with resonance-gated attention.
//!
//! - [`tensor`], [`graph`], [`gradcheck`]: deterministic dense arithmetic and
//!   reverse-mode differentiation.
//! - [`model`]: the gated micro-transformer.
//! - [`train`]: joint loss, plain gradient descent and perplexity-triggered
//!   learning-rate decay.
//! - [`datagen`]: copy / key-value recall generators, byte corpora, noise.
//! - [`eval`]: perplexity, retention, noise robustness, coherence, latency
//!   and the gate ablation runner.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod par;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Grads, Graph, Var};
pub use model::{GateMode, ModelConfig, Params};
pub use rng::{randn, Rng, RngState};
pub use scalar::Scalar;
pub use tensor::Tensor2;
