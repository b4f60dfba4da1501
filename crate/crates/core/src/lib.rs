//! Modality-agnostic vision transformer for multi-modal face anti-spoofing.
//!
//! The crate is `no_std` (with `alloc`) and carries everything that is pure
//! computation: a small reverse-mode autodiff engine over dense `f64`
//! tensors, the multi-modal tokenizer, the attention primitives
//! (self-attention, modal-disentangle attention and cross-modal attention),
//! the encoder, the shared classification heads and joint loss, the Adam
//! training loop, the anti-spoofing metric suite, a seeded synthetic
//! dataset generator and an in-memory checkpoint codec.
//!
//! File IO, dataset manifests and the command-line tool live in the `mavit`
//! companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod synth;
pub mod tensor;
pub mod tokenize;
pub mod train;

pub use config::{Ablation, Modality, ModalityId, ModelConfig};
pub use error::{Error, Result};
pub use graph::{Graph, Var, NEG_LARGE};
pub use model::{MaVit, ModalImages, PathScores, Sample};
pub use params::{GradStore, ParamStore};
pub use tensor::Tensor;
