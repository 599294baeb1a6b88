//! Desk-scale normalization models.
//!
//! * [`ClassifierModel`]: softmax classifier whose output layer always spans
//!   every PT of the ontology, trained or not.
//! * [`DualEncoder`] + [`PtIndex`]: a linear projection of hashed n-gram
//!   features to unit-norm embeddings; prediction is the PT with maximal
//!   cosine similarity.
//!
//! Generative models are supported only through prompt export and prediction
//! ingestion (see [`prompts`]).

pub mod checkpoint;
pub mod classifier;
pub mod dual_encoder;
pub mod prompts;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use classifier::ClassifierModel;
pub use dual_encoder::{DualEncoder, PtIndex};
pub use prompts::{ingest_predictions, render_prompts, Prediction, PredictionSet, PromptStyle};

use crate::error::Result;
use crate::ontology::Ontology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Classifier,
    DualEncoder,
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classifier" => Ok(ModelKind::Classifier),
            "dual_encoder" | "dual-encoder" => Ok(ModelKind::DualEncoder),
            other => Err(format!("unknown model kind {other:?} (classifier | dual_encoder)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Classifier => "classifier",
            ModelKind::DualEncoder => "dual_encoder",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Classifier(ClassifierModel),
    DualEncoder(DualEncoder),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Classifier(_) => ModelKind::Classifier,
            Model::DualEncoder(_) => ModelKind::DualEncoder,
        }
    }

    pub fn pt_order(&self) -> &[String] {
        match self {
            Model::Classifier(m) => m.pt_order(),
            Model::DualEncoder(m) => m.pt_order(),
        }
    }

    /// Ready-to-query predictor; builds the PT index for dual encoders.
    pub fn predictor<'a>(&'a self, ontology: &Ontology) -> Result<Predictor<'a>> {
        Ok(match self {
            Model::Classifier(m) => Predictor::Classifier(m),
            Model::DualEncoder(m) => Predictor::Retrieval {
                encoder: m,
                index: PtIndex::build(m, ontology)?,
            },
        })
    }
}

/// Anything that maps an AE string to a pt_id.
pub trait Normalizer: Sync {
    fn normalize(&self, text: &str) -> Result<String>;
}

pub enum Predictor<'a> {
    Classifier(&'a ClassifierModel),
    Retrieval { encoder: &'a DualEncoder, index: PtIndex },
}

impl Normalizer for Predictor<'_> {
    fn normalize(&self, text: &str) -> Result<String> {
        match self {
            Predictor::Classifier(m) => Ok(m.predict(text)?.to_string()),
            Predictor::Retrieval { encoder, index } => Ok(index.retrieve(encoder, text)?.to_string()),
        }
    }
}

/// Gradient for a parameter matrix stored row-per-feature: only rows touched
/// by nonzero features are materialized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows {
    pub width: usize,
    pub rows: BTreeMap<u32, Vec<f64>>,
}

impl SparseRows {
    pub fn new(width: usize) -> Self {
        SparseRows {
            width,
            rows: BTreeMap::new(),
        }
    }

    /// `row[index] += scale * values`
    pub fn add_row(&mut self, index: u32, scale: f64, values: &[f64]) {
        let width = self.width;
        let row = self.rows.entry(index).or_insert_with(|| vec![0.0; width]);
        for (r, v) in row.iter_mut().zip(values) {
            *r += scale * v;
        }
    }

    pub fn get(&self, row: u32, col: usize) -> f64 {
        self.rows.get(&row).map_or(0.0, |r| r[col])
    }

    pub fn merge_scaled(&mut self, other: &SparseRows, scale: f64) {
        for (&i, values) in &other.rows {
            self.add_row(i, scale, values);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
