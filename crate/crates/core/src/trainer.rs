//! Mini-batch SGD for the three learning strategies:
//!
//! * `FT`: supervised training on the dataset only;
//! * `OP`: training on the ontology-derived corpus only;
//! * `OP_FT`: the OP phase followed by the FT phase on the same parameters.
//!
//! Every source of randomness is derived from `TrainConfig::seed`:
//! parameter init uses `derive(seed, 0)`, the OP phase `derive(seed, 1)` and
//! the FT phase `derive(seed, 2)`. Each phase draws one permutation per epoch
//! from its own stream. Gradients are reduced sequentially in batch order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contrastive::{
    coder_samples_with, sapbert_dataset_pairs, sapbert_op_pairs, CoderOptions, PairSample, Polarity,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::classifier::ClassifierGrad;
use crate::models::dual_encoder::{DEFAULT_EMBED_DIM, DEFAULT_TEMPERATURE};
use crate::models::{ClassifierModel, DualEncoder, Model, ModelKind, SparseRows};
use crate::ontology::{build_op_corpus, Ontology};
use crate::rng::{derive, DetRng};
use crate::text::{FeatureVector, FeaturizerConfig};

/// Explicit negatives added per anchor when the pair corpus carries them.
pub const EXPLICIT_NEGATIVES_PER_ANCHOR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "FT")]
    Ft,
    #[serde(rename = "OP")]
    Op,
    #[serde(rename = "OP_FT")]
    OpFt,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "FT" => Ok(Strategy::Ft),
            "OP" => Ok(Strategy::Op),
            "OP_FT" | "OP+FT" | "OPFT" => Ok(Strategy::OpFt),
            _ => Err(format!("unknown strategy {s:?} (FT | OP | OP_FT)")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Ft => "FT",
            Strategy::Op => "OP",
            Strategy::OpFt => "OP_FT",
        })
    }
}

/// Which contrastive samples feed the dual encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSource {
    Sapbert,
    Coder,
}

impl std::str::FromStr for PairSource {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sapbert" => Ok(PairSource::Sapbert),
            "coder" => Ok(PairSource::Coder),
            _ => Err(format!("unknown pair source {s:?} (sapbert | coder)")),
        }
    }
}

/// `(op_epochs, ft_epochs)` per model family and strategy, following the
/// discriminative classifier (OP 30, FT 10, OP+FT 30+5) and the contrastive
/// encoder (OP 30, FT 15, OP+FT 30+10) schedules.
pub fn default_epochs(kind: ModelKind, strategy: Strategy) -> (usize, usize) {
    match (kind, strategy) {
        (ModelKind::Classifier, Strategy::Ft) => (0, 10),
        (ModelKind::Classifier, Strategy::Op) => (30, 0),
        (ModelKind::Classifier, Strategy::OpFt) => (30, 5),
        (ModelKind::DualEncoder, Strategy::Ft) => (0, 15),
        (ModelKind::DualEncoder, Strategy::Op) => (30, 0),
        (ModelKind::DualEncoder, Strategy::OpFt) => (30, 10),
    }
}

/// Scales an epoch count, keeping nonzero schedules nonzero.
pub fn scale_epochs(epochs: usize, scale: f64) -> usize {
    if epochs == 0 {
        0
    } else {
        ((epochs as f64 * scale).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub op_epochs: usize,
    pub ft_epochs: usize,
    pub learning_rate: f64,
    /// FT-phase learning rate, typically set below `learning_rate` when
    /// finetuning a pretrained model; `learning_rate` when unset.
    pub ft_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
    pub model_kind: ModelKind,
    pub featurizer: FeaturizerConfig,
    pub embed_dim: usize,
    pub temperature: f64,
    pub index_llts: bool,
    pub pair_source: PairSource,
    pub max_negatives_per_positive: Option<usize>,
}

impl TrainConfig {
    /// Default hyperparameters and the default epoch schedule for `strategy`.
    pub fn new(strategy: Strategy, model_kind: ModelKind, seed: u64) -> Self {
        let (op_epochs, ft_epochs) = default_epochs(model_kind, strategy);
        TrainConfig {
            strategy,
            op_epochs,
            ft_epochs,
            learning_rate: match model_kind {
                ModelKind::Classifier => 1.0,
                ModelKind::DualEncoder => 0.05,
            },
            ft_learning_rate: match (strategy, model_kind) {
                (Strategy::OpFt, ModelKind::Classifier) => Some(0.05),
                (Strategy::OpFt, ModelKind::DualEncoder) => Some(0.01),
                _ => None,
            },
            batch_size: match model_kind {
                ModelKind::Classifier => 8,
                ModelKind::DualEncoder => 16,
            },
            seed,
            model_kind,
            featurizer: FeaturizerConfig::default(),
            embed_dim: DEFAULT_EMBED_DIM,
            temperature: DEFAULT_TEMPERATURE,
            index_llts: false,
            pair_source: PairSource::Sapbert,
            max_negatives_per_positive: Some(4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("train config: {m}")));
        match self.strategy {
            Strategy::OpFt if self.op_epochs == 0 || self.ft_epochs == 0 => {
                return bad("OP_FT needs op_epochs > 0 and ft_epochs > 0")
            }
            Strategy::Ft if self.op_epochs != 0 => return bad("FT needs op_epochs = 0"),
            Strategy::Op if self.ft_epochs != 0 => return bad("OP needs ft_epochs = 0"),
            _ => {}
        }
        for lr in [Some(self.learning_rate), self.ft_learning_rate].into_iter().flatten() {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("learning rates must be positive");
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        self.featurizer.validate()
    }

    pub fn phase(&self, epochs: usize, learning_rate: f64, tag: u64) -> PhaseParams {
        PhaseParams {
            epochs,
            learning_rate,
            batch_size: self.batch_size,
            seed: derive(self.seed, tag),
        }
    }

    pub fn op_phase(&self) -> PhaseParams {
        self.phase(self.op_epochs, self.learning_rate, 1)
    }

    pub fn ft_phase(&self) -> PhaseParams {
        self.phase(self.ft_epochs, self.ft_learning_rate.unwrap_or(self.learning_rate), 2)
    }

    fn coder_options(&self) -> CoderOptions {
        CoderOptions {
            max_negatives_per_positive: self.max_negatives_per_positive,
            seed: derive(self.seed, 3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    /// Mean per-example loss of each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum TrainCorpus<'a> {
    Labeled(&'a Dataset),
    Pairs(&'a [PairSample]),
}

impl TrainCorpus<'_> {
    fn describe(&self) -> &'static str {
        match self {
            TrainCorpus::Labeled(_) => "labeled samples",
            TrainCorpus::Pairs(_) => "contrastive pairs",
        }
    }
}

/// Fresh model with seeded parameters over the ontology's full PT inventory.
pub fn init_model(config: &TrainConfig, ontology: &Ontology) -> Result<Model> {
    let init_seed = derive(config.seed, 0);
    Ok(match config.model_kind {
        ModelKind::Classifier => {
            Model::Classifier(ClassifierModel::new(config.featurizer, ontology.pt_ids(), init_seed)?)
        }
        ModelKind::DualEncoder => {
            let mut e = DualEncoder::new(
                config.featurizer,
                config.embed_dim,
                config.temperature,
                ontology.pt_ids(),
                init_seed,
            )?;
            e.index_llts = config.index_llts;
            Model::DualEncoder(e)
        }
    })
}

/// Runs `params.epochs` epochs of SGD over `corpus`, updating `model` in place.
pub fn train_phase(model: &mut Model, corpus: TrainCorpus<'_>, params: &PhaseParams) -> Result<PhaseStats> {
    if params.epochs == 0 {
        return Ok(PhaseStats::default());
    }
    if params.batch_size == 0 || params.learning_rate.is_nan() || params.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("batch_size and learning_rate must be positive".into()));
    }
    match (model, corpus) {
        (Model::Classifier(m), TrainCorpus::Labeled(d)) => train_classifier(m, d, params),
        (Model::DualEncoder(e), TrainCorpus::Pairs(p)) => train_dual_encoder(e, p, params),
        (m, c) => Err(Error::KindMismatch(format!(
            "{} model cannot train on {}",
            m.kind(),
            c.describe()
        ))),
    }
}

fn check_finite(loss: f64, epoch: usize, batch: usize, last: Option<f64>) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        log::error!("non-finite loss at epoch {epoch}, batch {batch}");
        Err(Error::Divergence {
            epoch,
            batch,
            last_finite: last,
        })
    }
}

fn train_classifier(model: &mut ClassifierModel, corpus: &Dataset, params: &PhaseParams) -> Result<PhaseStats> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty training corpus".into()));
    }
    let examples: Vec<(FeatureVector, usize)> = corpus
        .samples
        .iter()
        .map(|s| {
            let label = model.class_index(&s.label_pt_id).ok_or_else(|| {
                Error::UnknownId(format!("label {:?} is not a class of the model", s.label_pt_id))
            })?;
            Ok((model.input(&s.text), label))
        })
        .collect::<Result<_>>()?;

    let mut rng = DetRng::new(params.seed);
    let mut stats = PhaseStats::default();
    let mut last = None;
    for epoch in 0..params.epochs {
        let order = rng.permutation(examples.len());
        let mut total = 0.0;
        for (b, chunk) in order.chunks(params.batch_size).enumerate() {
            let mut acc = ClassifierGrad::zeros(model.n_classes());
            let scale = 1.0 / chunk.len() as f64;
            for &k in chunk {
                let (fv, label) = &examples[k];
                let (loss, grad) = model.loss_grad(fv, *label)?;
                check_finite(loss, epoch, b, last)?;
                total += loss;
                acc.merge_scaled(&grad, scale);
            }
            model.apply(&acc, params.learning_rate);
        }
        let mean = total / examples.len() as f64;
        last = Some(mean);
        log::debug!("classifier epoch {epoch}: loss {mean:.6}");
        stats.epoch_losses.push(mean);
    }
    Ok(stats)
}

fn train_dual_encoder(enc: &mut DualEncoder, pairs: &[PairSample], params: &PhaseParams) -> Result<PhaseStats> {
    let positives: Vec<&PairSample> = pairs.iter().filter(|p| p.polarity == Polarity::Positive).collect();
    if positives.is_empty() {
        return Err(Error::InvalidArgument("no positive pairs to train on".into()));
    }
    let mut explicit: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| p.polarity == Polarity::Negative) {
        explicit.entry(&p.left).or_default().push(&p.right);
        explicit.entry(&p.right).or_default().push(&p.left);
    }

    let temperature = enc.temperature();
    let mut rng = DetRng::new(params.seed);
    let mut stats = PhaseStats::default();
    let mut last = None;
    for epoch in 0..params.epochs {
        let order = rng.permutation(positives.len());
        let mut total = 0.0;
        let mut counted = 0usize;
        for (b, chunk) in order.chunks(params.batch_size).enumerate() {
            let mut acc = SparseRows::new(enc.embed_dim());
            let mut used = Vec::new();
            for &k in chunk {
                let p = positives[k];
                let mut negs: Vec<String> = Vec::new();
                let push = |t: &str, negs: &mut Vec<String>| {
                    if t != p.left && t != p.right && !negs.iter().any(|n| n == t) {
                        negs.push(t.to_string());
                    }
                };
                for &other in chunk {
                    if other != k {
                        push(&positives[other].right, &mut negs);
                    }
                }
                if let Some(ex) = explicit.get(p.left.as_str()) {
                    for t in ex.iter().take(EXPLICIT_NEGATIVES_PER_ANCHOR) {
                        push(t, &mut negs);
                    }
                }
                if negs.is_empty() {
                    continue;
                }
                let (loss, grad) = enc.contrastive_loss_grad(&p.left, &p.right, &negs, temperature)?;
                check_finite(loss, epoch, b, last)?;
                total += loss;
                counted += 1;
                used.push(grad);
            }
            if used.is_empty() {
                continue;
            }
            let scale = 1.0 / used.len() as f64;
            for g in &used {
                acc.merge_scaled(g, scale);
            }
            enc.apply(&acc, params.learning_rate);
        }
        if counted == 0 {
            return Err(Error::InvalidArgument(
                "no example had a negative; increase batch_size or supply negative pairs".into(),
            ));
        }
        let mean = total / counted as f64;
        last = Some(mean);
        log::debug!("dual-encoder epoch {epoch}: loss {mean:.6}");
        stats.epoch_losses.push(mean);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub op: PhaseStats,
    pub ft: PhaseStats,
}

/// OP phase: the ontology corpus matching the model kind.
pub fn pretrain(model: &mut Model, config: &TrainConfig, ontology: &Ontology) -> Result<PhaseStats> {
    let params = config.op_phase();
    if params.epochs == 0 {
        return Ok(PhaseStats::default());
    }
    match model.kind() {
        ModelKind::Classifier => {
            let corpus = build_op_corpus(ontology);
            train_phase(model, TrainCorpus::Labeled(&corpus), &params)
        }
        ModelKind::DualEncoder => {
            let pairs = match config.pair_source {
                PairSource::Sapbert => sapbert_op_pairs(ontology),
                PairSource::Coder => {
                    coder_samples_with(&build_op_corpus(ontology), ontology, &config.coder_options())?.pairs
                }
            };
            train_phase(model, TrainCorpus::Pairs(&pairs), &params)
        }
    }
}

/// FT phase on `train` (already restricted to the training split).
pub fn finetune(model: &mut Model, config: &TrainConfig, ontology: &Ontology, train: &Dataset) -> Result<PhaseStats> {
    let params = config.ft_phase();
    if params.epochs == 0 {
        return Ok(PhaseStats::default());
    }
    match model.kind() {
        ModelKind::Classifier => train_phase(model, TrainCorpus::Labeled(train), &params),
        ModelKind::DualEncoder => {
            let pairs = match config.pair_source {
                PairSource::Sapbert => sapbert_dataset_pairs(train, ontology)?,
                PairSource::Coder => coder_samples_with(train, ontology, &config.coder_options())?.pairs,
            };
            train_phase(model, TrainCorpus::Pairs(&pairs), &params)
        }
    }
}

pub fn run_strategy(config: &TrainConfig, ontology: &Ontology, train: &Dataset) -> Result<(Model, StrategyStats)> {
    config.validate()?;
    let mut model = init_model(config, ontology)?;
    let mut stats = StrategyStats::default();
    if matches!(config.strategy, Strategy::Op | Strategy::OpFt) {
        stats.op = pretrain(&mut model, config, ontology)?;
    }
    if matches!(config.strategy, Strategy::Ft | Strategy::OpFt) {
        stats.ft = finetune(&mut model, config, ontology, train)?;
    }
    Ok((model, stats))
}
