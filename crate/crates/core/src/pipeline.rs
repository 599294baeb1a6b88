//! End-to-end benchmark run: synthesize, split, train FT / OP / OP_FT, evaluate
//! in-dataset and across datasets, and assemble a deterministic report.
//!
//! Every seed is derived from the master seed: synthesis `derive(m, 10)`,
//! splits of dataset `d` `derive(m, 20 + 3d + i)`, the shared OP phase
//! `derive(m, 30)` and the model for dataset `d`, split `i` `derive(m, 40 + 3d + i)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::KvConfig;
use crate::dataset::{dataset_stats, make_splits, out_fraction, Dataset, OverlapReport, Split};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, cross_matrix, evaluate, fmt_opt, predict_split, AggregateReport, CrossMatrix, F1_AVERAGING};
use crate::models::{Model, ModelKind};
use crate::ontology::Ontology;
use crate::rng::derive;
use crate::synth::{gen_synthetic, NoiseStyle, SynthConfig};
use crate::text::FeaturizerConfig;
use crate::trainer::{default_epochs, finetune, init_model, pretrain, scale_epochs, Strategy, TrainConfig};

pub const KEYS: &[&str] = &[
    "seed",
    "n_pt",
    "children_min",
    "children_max",
    "n_hlt",
    "n_samples",
    "zipf_exponent",
    "styles",
    "train_ratio",
    "model_kind",
    "dim",
    "ngram_lo",
    "ngram_hi",
    "embed_dim",
    "temperature",
    "learning_rate",
    "ft_learning_rate",
    "batch_size",
    "epoch_scale",
    "op_epochs",
    "ft_epochs",
    "op_ft_finetune_epochs",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// `synth.seed` is overwritten with the derived synthesis seed.
    pub synth: SynthConfig,
    pub train_ratio: f64,
    pub model_kind: ModelKind,
    pub featurizer: FeaturizerConfig,
    pub embed_dim: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    /// FT-phase rate when finetuning a pretrained model.
    pub ft_learning_rate: f64,
    pub batch_size: usize,
    pub epoch_scale: f64,
    pub op_epochs: usize,
    /// FT-only schedule.
    pub ft_epochs: usize,
    /// FT phase of OP_FT.
    pub op_ft_finetune_epochs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_kind(ModelKind::Classifier, 1.0)
    }
}

impl PipelineConfig {
    pub fn for_kind(kind: ModelKind, epoch_scale: f64) -> Self {
        let base = TrainConfig::new(Strategy::OpFt, kind, 0);
        let (op, opft_ft) = default_epochs(kind, Strategy::OpFt);
        let (_, ft) = default_epochs(kind, Strategy::Ft);
        PipelineConfig {
            seed: 7,
            synth: SynthConfig::default(),
            train_ratio: 0.6,
            model_kind: kind,
            featurizer: FeaturizerConfig::new(1 << 14, 2, 4).expect("valid"),
            embed_dim: base.embed_dim,
            temperature: base.temperature,
            learning_rate: base.learning_rate,
            ft_learning_rate: base.ft_learning_rate.unwrap_or(base.learning_rate),
            batch_size: base.batch_size,
            epoch_scale,
            op_epochs: scale_epochs(op, epoch_scale),
            ft_epochs: scale_epochs(ft, epoch_scale),
            op_ft_finetune_epochs: scale_epochs(opft_ft, epoch_scale),
        }
    }

    /// Defaults overlaid with the keys of `kv`; unknown keys are errors.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        kv.check_keys(KEYS)?;
        let kind = kv.get::<ModelKind>("model_kind")?.unwrap_or(ModelKind::Classifier);
        let scale = kv.get::<f64>("epoch_scale")?.unwrap_or(1.0);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument("epoch_scale must be positive".into()));
        }
        let mut c = Self::for_kind(kind, scale);
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        take!("seed", c.seed);
        take!("n_pt", c.synth.n_pt);
        take!("children_min", c.synth.children_range[0]);
        take!("children_max", c.synth.children_range[1]);
        take!("n_hlt", c.synth.n_hlt);
        take!("n_samples", c.synth.n_samples);
        take!("zipf_exponent", c.synth.zipf_exponent);
        take!("train_ratio", c.train_ratio);
        take!("dim", c.featurizer.dim);
        take!("ngram_lo", c.featurizer.ngram_lo);
        take!("ngram_hi", c.featurizer.ngram_hi);
        take!("embed_dim", c.embed_dim);
        take!("temperature", c.temperature);
        take!("learning_rate", c.learning_rate);
        take!("ft_learning_rate", c.ft_learning_rate);
        take!("batch_size", c.batch_size);
        take!("op_epochs", c.op_epochs);
        take!("ft_epochs", c.ft_epochs);
        take!("op_ft_finetune_epochs", c.op_ft_finetune_epochs);
        if let Some(s) = kv.get_str("styles") {
            c.synth.noise_styles = parse_styles(s)?;
        }
        c.featurizer.validate()?;
        c.synth.validate()?;
        Ok(c)
    }

    /// Canonical `key = value` form, the input of [`PipelineConfig::hash`].
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        let mut put = |k: &str, v: String| kv.set(&format!("{k}={v}")).expect("valid assignment");
        put("seed", self.seed.to_string());
        put("n_pt", self.synth.n_pt.to_string());
        put("children_min", self.synth.children_range[0].to_string());
        put("children_max", self.synth.children_range[1].to_string());
        put("n_hlt", self.synth.n_hlt.to_string());
        put("n_samples", self.synth.n_samples.to_string());
        put("zipf_exponent", self.synth.zipf_exponent.to_string());
        put("styles", format_styles(&self.synth.noise_styles));
        put("train_ratio", self.train_ratio.to_string());
        put("model_kind", self.model_kind.to_string());
        put("dim", self.featurizer.dim.to_string());
        put("ngram_lo", self.featurizer.ngram_lo.to_string());
        put("ngram_hi", self.featurizer.ngram_hi.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("temperature", self.temperature.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("ft_learning_rate", self.ft_learning_rate.to_string());
        put("batch_size", self.batch_size.to_string());
        put("epoch_scale", self.epoch_scale.to_string());
        put("op_epochs", self.op_epochs.to_string());
        put("ft_epochs", self.ft_epochs.to_string());
        put("op_ft_finetune_epochs", self.op_ft_finetune_epochs.to_string());
        kv
    }

    /// Hex SHA-256 of the canonical config text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_kv().to_text().as_bytes()))
    }

    pub fn train_config(&self, strategy: Strategy, seed: u64) -> TrainConfig {
        let mut t = TrainConfig::new(strategy, self.model_kind, seed);
        t.featurizer = self.featurizer;
        t.embed_dim = self.embed_dim;
        t.temperature = self.temperature;
        t.learning_rate = self.learning_rate;
        if strategy == Strategy::OpFt {
            t.ft_learning_rate = Some(self.ft_learning_rate);
        }
        t.batch_size = self.batch_size;
        (t.op_epochs, t.ft_epochs) = match strategy {
            Strategy::Ft => (0, self.ft_epochs),
            Strategy::Op => (self.op_epochs, 0),
            Strategy::OpFt => (self.op_epochs, self.op_ft_finetune_epochs),
        };
        t
    }
}

/// `typo:paraphrase` pairs separated by commas.
pub fn parse_styles(s: &str) -> Result<Vec<NoiseStyle>> {
    s.split(',')
        .map(|part| {
            let bad = || Error::InvalidArgument(format!("style {part:?} is not typo:paraphrase"));
            let (t, p) = part.trim().split_once(':').ok_or_else(bad)?;
            Ok(NoiseStyle {
                typo_rate: t.trim().parse().map_err(|_| bad())?,
                paraphrase_rate: p.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn format_styles(styles: &[NoiseStyle]) -> String {
    styles
        .iter()
        .map(|s| format!("{}:{}", s.typo_rate, s.paraphrase_rate))
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub synth: u64,
    pub splits: BTreeMap<String, Vec<u64>>,
    pub op: u64,
    pub models: BTreeMap<String, Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportHeader {
    pub f1_averaging: String,
    pub config_hash: String,
    pub ontology_version: String,
    pub seeds: Seeds,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub samples: usize,
    pub out_fraction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub header: ReportHeader,
    pub datasets: Vec<DatasetSummary>,
    pub stats: OverlapReport,
    /// strategy → dataset → aggregate
    pub in_dataset: BTreeMap<Strategy, BTreeMap<String, AggregateReport>>,
    /// strategy → cross matrix (FT and OP_FT)
    pub cross: BTreeMap<Strategy, CrossMatrix>,
    pub op_final_loss: Option<f64>,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    /// Mean over datasets and splits of (diagonal − off-diagonal) overall accuracy.
    pub fn cross_drop(&self, strategy: Strategy) -> Option<f64> {
        let m = self.cross.get(&strategy)?;
        let n = m.train_datasets.len();
        let mut drops = Vec::new();
        for test in 0..n {
            let diag = m.cells[test][test].accuracy_overall.mean?;
            for train in (0..n).filter(|&t| t != test) {
                drops.push(diag - m.cells[train][test].accuracy_overall.mean?);
            }
        }
        (!drops.is_empty()).then(|| drops.iter().sum::<f64>() / drops.len() as f64)
    }

    /// Mean over datasets of an in-dataset metric mean.
    pub fn mean_over_datasets(&self, strategy: Strategy, field: fn(&AggregateReport) -> Option<f64>) -> Option<f64> {
        let per = self.in_dataset.get(&strategy)?;
        let v: Vec<f64> = per.values().filter_map(field).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// One row per (dataset, strategy): accuracy and F1 on in / out / overall,
    /// each as mean and std.
    pub fn table_csv(&self) -> String {
        let mut out = String::from(
            "dataset,strategy,acc_in,acc_in_std,acc_out,acc_out_std,acc_overall,acc_overall_std,f1_in,f1_in_std,f1_out,f1_out_std,f1_overall,f1_overall_std\n",
        );
        let names: Vec<&String> = self.datasets.iter().map(|d| &d.name).collect();
        for name in names {
            for (strategy, per) in &self.in_dataset {
                let Some(r) = per.get(name) else { continue };
                let _ = write!(out, "{name},{strategy}");
                for f in [r.accuracy_in, r.accuracy_out, r.accuracy_overall, r.f1_in, r.f1_out, r.f1_overall] {
                    let _ = write!(out, ",{},{}", fmt_opt(f.mean), fmt_opt(f.std));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Everything a pipeline run produced besides the report.
pub struct PipelineArtifacts {
    pub ontology: Ontology,
    pub datasets: Vec<Dataset>,
    pub splits: BTreeMap<String, Vec<Split>>,
}

pub fn run_pipeline(config: &PipelineConfig, jobs: usize) -> Result<(PipelineReport, PipelineArtifacts)> {
    let master = config.seed;
    let mut synth = config.synth.clone();
    synth.seed = derive(master, 10);
    let (ontology, datasets) = gen_synthetic(&synth)?;
    log::info!(
        "synthetic benchmark: {} PTs, {} LLTs, {} datasets",
        ontology.concept_count(),
        ontology.llt_count(),
        datasets.len()
    );

    let mut seeds = Seeds {
        master,
        synth: synth.seed,
        splits: BTreeMap::new(),
        op: derive(master, 30),
        models: BTreeMap::new(),
    };
    let mut splits: BTreeMap<String, Vec<Split>> = BTreeMap::new();
    let mut summaries = Vec::new();
    for (d, ds) in datasets.iter().enumerate() {
        let s: [u64; 3] = std::array::from_fn(|i| derive(master, 20 + 3 * d as u64 + i as u64));
        let made = make_splits(ds, s, config.train_ratio)?;
        summaries.push(DatasetSummary {
            name: ds.name.clone(),
            samples: ds.len(),
            out_fraction: made.iter().map(out_fraction).collect::<Result<_>>()?,
        });
        seeds.splits.insert(ds.name.clone(), s.to_vec());
        seeds
            .models
            .insert(ds.name.clone(), (0..3).map(|i| derive(master, 40 + 3 * d as u64 + i)).collect());
        splits.insert(ds.name.clone(), made.to_vec());
    }

    let op_config = config.train_config(Strategy::Op, seeds.op);
    let mut op_model = init_model(&op_config, &ontology)?;
    let op_stats = pretrain(&mut op_model, &op_config, &ontology)?;
    log::info!("OP phase done ({} epochs)", op_stats.epoch_losses.len());

    let mut trained: BTreeMap<Strategy, BTreeMap<String, Vec<Model>>> = BTreeMap::new();
    for ds in &datasets {
        for (i, split) in splits[&ds.name].iter().enumerate() {
            let seed = seeds.models[&ds.name][i];
            let train = ds.subset(format!("{}-train-{i}", ds.name), &split.train)?;

            let ft_config = config.train_config(Strategy::Ft, seed);
            let mut ft = init_model(&ft_config, &ontology)?;
            finetune(&mut ft, &ft_config, &ontology, &train)?;
            trained.entry(Strategy::Ft).or_default().entry(ds.name.clone()).or_default().push(ft);

            let opft_config = config.train_config(Strategy::OpFt, seed);
            let mut opft = op_model.clone();
            finetune(&mut opft, &opft_config, &ontology, &train)?;
            trained.entry(Strategy::OpFt).or_default().entry(ds.name.clone()).or_default().push(opft);
            log::info!("trained {} split {i}", ds.name);
        }
    }

    let mut in_dataset: BTreeMap<Strategy, BTreeMap<String, AggregateReport>> = BTreeMap::new();
    let op_predictor = op_model.predictor(&ontology)?;
    let mut op_rows = BTreeMap::new();
    for ds in &datasets {
        let metrics = splits[&ds.name]
            .iter()
            .map(|split| evaluate(&predict_split(&op_predictor, ds, split)?, split, ds))
            .collect::<Result<Vec<_>>>()?;
        op_rows.insert(ds.name.clone(), aggregate(&metrics)?);
    }
    in_dataset.insert(Strategy::Op, op_rows);

    let mut cross = BTreeMap::new();
    for (strategy, per_dataset) in &trained {
        let predictors = per_dataset
            .iter()
            .map(|(name, models)| {
                let p = models.iter().map(|m| m.predictor(&ontology)).collect::<Result<Vec<_>>>()?;
                Ok((name.clone(), p))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let matrix = cross_matrix(&predictors, &datasets, &splits, jobs)?;
        let diag = matrix
            .train_datasets
            .iter()
            .enumerate()
            .map(|(k, n)| (n.clone(), matrix.cells[k][k].clone()))
            .collect();
        in_dataset.insert(*strategy, diag);
        cross.insert(*strategy, matrix);
    }

    let report = PipelineReport {
        header: ReportHeader {
            f1_averaging: F1_AVERAGING.to_string(),
            config_hash: config.hash(),
            ontology_version: ontology.version_tag().to_string(),
            seeds,
            config: config
                .to_kv()
                .keys()
                .map(|k| (k.to_string(), config.to_kv().get_str(k).unwrap_or_default().to_string()))
                .collect(),
        },
        datasets: summaries,
        stats: dataset_stats(&datasets),
        in_dataset,
        cross,
        op_final_loss: op_stats.epoch_losses.last().copied(),
    };
    Ok((
        report,
        PipelineArtifacts {
            ontology,
            datasets,
            splits,
        },
    ))
}
