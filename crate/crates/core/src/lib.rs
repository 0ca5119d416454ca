//! Dependency semantic role labeling with capsule routing refinement.
//!
//! The crate is organized around the prediction pipeline:
//!
//! - [`tensor`]: dense tensors and reverse-mode automatic differentiation
//! - [`conll`]: CoNLL-2009 column files, vocabularies and instances
//! - [`embeddings`]: pretrained embedding and contextual-vector loaders
//! - [`encoder`]: embedding lookup plus stacked bidirectional LSTM
//! - [`capsule`]: word/role capsule layers, dynamic routing, model heads
//! - [`params`]: named parameter store and checkpoint files
//! - [`training`]: losses, Adam, the training loop
//! - [`eval`]: scoring and the refinement analyses
//! - [`synthetic`]: deterministic toy corpus generator
//! - [`config`]: run configuration shared by the CLI

pub mod capsule;
pub mod config;
pub mod conll;
pub mod embeddings;
pub mod encoder;
pub mod eval;
pub mod params;
pub mod pipeline;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod trajectory;
