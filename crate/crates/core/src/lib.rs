//! Term normalization with ontology pretraining followed by finetuning.

pub mod config;
pub mod contrastive;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod ontology;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
