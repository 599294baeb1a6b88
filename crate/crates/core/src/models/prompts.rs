//! Prompt export and prediction ingestion for external generative models.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::text::normalize_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Gpt2,
    Sci5,
}

impl std::str::FromStr for PromptStyle {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gpt2" => Ok(PromptStyle::Gpt2),
            "sci5" => Ok(PromptStyle::Sci5),
            other => Err(format!("unknown prompt style {other:?} (gpt2 | sci5)")),
        }
    }
}

impl PromptStyle {
    pub fn render(self, text: &str) -> String {
        match self {
            PromptStyle::Gpt2 => format!("INPUT: {text}\nMEANING:"),
            PromptStyle::Sci5 => format!("normalize: {text}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub prompt: String,
}

/// One prompt per sample, in dataset order, as JSON lines.
pub fn render_prompts(dataset: &Dataset, style: PromptStyle) -> String {
    let mut out = String::new();
    for s in &dataset.samples {
        let rec = PromptRecord {
            id: s.sample_id.clone(),
            prompt: style.render(&s.text),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("serializable"));
    }
    out
}

pub const UNRESOLVED: &str = "UNRESOLVED";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Prediction {
    Pt(String),
    Unresolved,
}

impl Prediction {
    pub fn pt(&self) -> Option<&str> {
        match self {
            Prediction::Pt(p) => Some(p),
            Prediction::Unresolved => None,
        }
    }
}

/// sample_id → prediction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pub predictions: BTreeMap<String, Prediction>,
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    predicted: &'a str,
}

impl PredictionSet {
    pub fn insert(&mut self, id: impl Into<String>, p: Prediction) {
        self.predictions.insert(id.into(), p);
    }

    pub fn unresolved_count(&self) -> usize {
        self.predictions.values().filter(|p| **p == Prediction::Unresolved).count()
    }

    /// `{id, predicted}` lines sorted by id; unresolved entries carry `"UNRESOLVED"`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, p) in &self.predictions {
            let line = PredictionLine {
                id,
                predicted: p.pt().unwrap_or(UNRESOLVED),
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("serializable"));
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Str(String),
    Int(i64),
}

impl Scalar {
    fn into_string(self) -> String {
        match self {
            Scalar::Str(s) => s,
            Scalar::Int(i) => i.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct RawPrediction {
    id: Scalar,
    predicted: Scalar,
}

/// Resolves model outputs to PTs: an exact pt_id wins, otherwise the
/// normalized string must equal a normalized PT name (smallest pt_id on
/// collisions), otherwise the prediction is unresolved.
pub struct PtResolver {
    by_name: BTreeMap<String, String>,
}

impl PtResolver {
    pub fn new(ontology: &Ontology) -> Self {
        let mut by_name = BTreeMap::new();
        // concepts iterate in pt_id order, so the first insert is the smallest id
        for c in ontology.concepts() {
            by_name.entry(normalize_text(&c.pt_text)).or_insert_with(|| c.pt_id.clone());
        }
        PtResolver { by_name }
    }

    pub fn resolve(&self, ontology: &Ontology, predicted: &str) -> Prediction {
        if ontology.has_pt(predicted) {
            return Prediction::Pt(predicted.to_string());
        }
        match self.by_name.get(&normalize_text(predicted)) {
            Some(pt) => Prediction::Pt(pt.clone()),
            None => Prediction::Unresolved,
        }
    }
}

pub fn ingest_predictions(path: impl AsRef<Path>, ontology: &Ontology, split: &Split) -> Result<PredictionSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, path, ontology, split)
}

pub fn parse_predictions(text: &str, origin: &Path, ontology: &Ontology, split: &Split) -> Result<PredictionSet> {
    let resolver = PtResolver::new(ontology);
    let test: std::collections::BTreeSet<&str> = split.test.iter().map(String::as_str).collect();
    let mut set = PredictionSet::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(origin, i + 1, m);
        let raw: RawPrediction =
            serde_json::from_str(line).map_err(|e| err(format!("malformed prediction: {e}")))?;
        let id = raw.id.into_string();
        if !test.contains(id.as_str()) {
            return Err(err(format!("id {id:?} is not in the split's test set")));
        }
        if set.predictions.contains_key(&id) {
            return Err(err(format!("duplicate prediction for {id:?}")));
        }
        let p = resolver.resolve(ontology, &raw.predicted.into_string());
        set.insert(id, p);
    }
    Ok(set)
}
