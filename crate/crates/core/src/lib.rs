//! Semi-supervised expectation-maximization training engine.
//!
//! The crate combines a small dense tensor kernel with hand-written
//! forward/backward passes ([`tensor`]), probabilistic classifiers built on
//! top of it ([`models`]), the expectation-maximization outer loop that
//! trains any of those classifiers from labeled data plus an unlabeled pool
//! ([`em`]), a volumetric preprocessing pipeline with a seeded synthetic
//! two-domain generator ([`data`]), and a cross-domain experiment harness
//! ([`eval`]).

pub mod data;
pub mod em;
pub mod error;
pub mod eval;
pub mod label;
pub mod models;
pub mod seed;
pub mod tensor;

pub use error::{CoreError, Result};
pub use label::SoftLabel;
pub use tensor::Tensor;
