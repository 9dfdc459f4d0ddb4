//! Core library for the nextsum extractive summarizer: corpus handling,
//! lightweight linguistic annotation, a topic HMM over sentences, feature
//! extraction, the next-sentence prediction network, summary generation,
//! baselines, and the evaluation toolkit.
//!
//! Numeric building blocks ([`mlp::Mlp`], [`content_model::ContentHmm`], the
//! Adam optimizer, rank correlation) are generic over [`Scalar`]; the
//! pipeline uses the `f64` aliases below.

pub mod align;
pub mod annotate;
pub mod content_model;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod generator;
pub mod mlp;
pub mod pipeline;
pub mod predictor;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp64 = mlp::Mlp<f64>;
pub type Mlp32 = mlp::Mlp<f32>;
pub type ContentHmm64 = content_model::ContentHmm<f64>;
pub type ContentHmm32 = content_model::ContentHmm<f32>;
