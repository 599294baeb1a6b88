use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use termnorm::config::{KvConfig, CONFIG_ENV};
use termnorm::contrastive::{
    coder_samples_with, pair_counts, pairs_to_jsonl, sapbert_dataset_pairs, sapbert_op_pairs, triples_to_jsonl,
    CoderOptions,
};
use termnorm::dataset::{dataset_stats, load_dataset, make_splits, out_fraction, Dataset, Split};
use termnorm::evaluation::{cross_matrix, evaluate, predict_split_jobs, FieldStat, F1_AVERAGING};
use termnorm::models::{checkpoint, ingest_predictions, render_prompts, ModelKind, PromptStyle};
use termnorm::ontology::{build_op_corpus, Ontology};
use termnorm::pipeline::{run_pipeline, PipelineConfig};
use termnorm::rng::derive;
use termnorm::trainer::{finetune, init_model, pretrain, Strategy};

#[derive(Parser)]
#[command(name = "termnorm", version, about = "Term normalization with ontology pretraining and finetuning")]
struct Cli {
    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ontology and one dataset per noise style
    Synth(SynthArgs),
    /// Validate a dataset against an ontology and write it with PT labels
    Ingest(IngestArgs),
    /// Write the ontology pretraining corpus (one sample per LLT)
    OpCorpus(OpCorpusArgs),
    /// Write contrastive pairs (and RO triples for coder)
    Pairs(PairsArgs),
    /// Write three seeded train/test splits
    Split(SplitArgs),
    /// Train a model with the FT, OP or OP_FT strategy
    Train(TrainArgs),
    /// Predict PTs for the test samples of a split
    Predict(PredictArgs),
    /// Render prompts for an external generative model
    Prompts(PromptsArgs),
    /// Score a prediction file against a split
    Evaluate(EvaluateArgs),
    /// Evaluate every model on every dataset
    CrossEval(CrossEvalArgs),
    /// PT overlap statistics over datasets
    Stats(StatsArgs),
    /// Run the whole synthetic benchmark and write a report
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value config file (default: $TERMNORM_CONFIG if set)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set n_pt=50
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let path = self.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let mut kv = match path {
            Some(p) => KvConfig::load(&p)?,
            None => KvConfig::default(),
        };
        for s in &self.sets {
            kv.set(s)?;
        }
        Ok(PipelineConfig::from_kv(&kv)?)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for ontology.tsv and the dataset files
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Write the validated dataset here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OpCorpusArgs {
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PairStyle {
    Coder,
    Sapbert,
    SapbertOp,
}

#[derive(Args)]
struct PairsArgs {
    #[arg(long)]
    ontology: PathBuf,
    /// Required except for sapbert-op
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Restrict to the training samples of this split
    #[arg(long)]
    split: Option<PathBuf>,
    /// Use every sample of the dataset instead of a split's training part
    #[arg(long)]
    all_samples: bool,
    #[arg(long, value_enum)]
    style: PairStyle,
    /// Keep at most this many negatives per positive (coder)
    #[arg(long)]
    max_negatives: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    triples_out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.6)]
    train_ratio: f64,
    /// Writes <dataset>.split0.json .. split2.json
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    ontology: PathBuf,
    /// Not needed for OP
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Train on this split's training samples (default: the whole dataset)
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, default_value = "OP_FT")]
    strategy: Strategy,
    #[arg(long)]
    model_kind: Option<ModelKind>,
    /// Continue from this checkpoint instead of a fresh model (FT phase only)
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    epoch_scale: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Predict this split's test samples (default: every sample)
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PromptsArgs {
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Only the test samples of this split
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    style: PromptStyle,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// `{id, predicted}` JSON lines; predicted may be a pt_id or PT name
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrossEvalArgs {
    #[arg(long)]
    ontology: PathBuf,
    /// Dataset files; names are the file stems
    #[arg(long, num_args = 1.., required = true)]
    datasets: Vec<PathBuf>,
    /// NAME=CKPT0,CKPT1,CKPT2 for each dataset
    #[arg(long = "model", value_name = "NAME=PATHS", required = true)]
    models: Vec<String>,
    /// NAME=SPLIT0,SPLIT1,SPLIT2 for each dataset
    #[arg(long = "splits", value_name = "NAME=PATHS", required = true)]
    splits: Vec<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write one CSV per metric into this directory
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Master seed (overrides the config's `seed`)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-dataset table as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the ontology, datasets and splits here
    #[arg(long)]
    artifacts_dir: Option<PathBuf>,
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_split_for(path: &Path, dataset: &Dataset) -> Result<Split> {
    let split = Split::load(path)?;
    split.validate(dataset)?;
    Ok(split)
}

fn train_subset(dataset: &Dataset, split: Option<&Path>) -> Result<Dataset> {
    match split {
        Some(p) => {
            let s = load_split_for(p, dataset)?;
            Ok(dataset.subset(format!("{}-train", dataset.name), &s.train)?)
        }
        None => Ok(dataset.clone()),
    }
}

fn name_to_paths(specs: &[String]) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    specs
        .iter()
        .map(|s| {
            let (name, paths) = s.split_once('=').ok_or_else(|| anyhow!("expected NAME=PATHS, got {s:?}"))?;
            let paths: Vec<PathBuf> = paths.split(',').map(PathBuf::from).collect();
            if paths.len() != 3 {
                bail!("{name}: expected 3 comma-separated paths, got {}", paths.len());
            }
            Ok((name.to_string(), paths))
        })
        .collect()
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let mut synth = cfg.synth;
    synth.seed = a.seed.unwrap_or(cfg.seed);
    let (onto, datasets) = termnorm::synth::gen_synthetic(&synth)?;
    write_atomic(&a.out_dir.join("ontology.tsv"), onto.to_tsv().as_bytes())?;
    for d in &datasets {
        write_atomic(&a.out_dir.join(format!("{}.jsonl", d.name)), d.to_jsonl().as_bytes())?;
    }
    println!(
        "{} PTs, {} LLTs, {} datasets of {} samples",
        onto.concept_count(),
        onto.llt_count(),
        datasets.len(),
        synth.n_samples
    );
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let d = load_dataset(&a.dataset, &onto)?;
    println!("{}: {} samples, {} distinct PTs", d.name, d.len(), d.labels().len());
    if let Some(out) = a.out {
        write_atomic(&out, d.to_jsonl().as_bytes())?;
    }
    Ok(())
}

fn op_corpus(a: OpCorpusArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let corpus = build_op_corpus(&onto);
    write_atomic(&a.out, corpus.to_jsonl().as_bytes())?;
    println!("{} samples", corpus.len());
    Ok(())
}

fn pairs(a: PairsArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let source = || -> Result<Dataset> {
        let path = a.dataset.as_ref().ok_or_else(|| anyhow!("--dataset is required for this style"))?;
        let d = load_dataset(path, &onto)?;
        match (&a.split, a.all_samples) {
            (Some(_), true) => bail!("--split and --all-samples are exclusive"),
            (None, false) => bail!("pass --split to use training samples only, or --all-samples"),
            (split, _) => train_subset(&d, split.as_deref()),
        }
    };
    let (pairs, triples) = match a.style {
        PairStyle::SapbertOp => (sapbert_op_pairs(&onto), None),
        PairStyle::Sapbert => (sapbert_dataset_pairs(&source()?, &onto)?, None),
        PairStyle::Coder => {
            let opts = CoderOptions {
                max_negatives_per_positive: a.max_negatives,
                seed: derive(a.seed, 3),
            };
            let out = coder_samples_with(&source()?, &onto, &opts)?;
            if out.skipped_missing_hlt > 0 {
                eprintln!("{} pair(s) had a PT without HLT and produced no triple", out.skipped_missing_hlt);
            }
            (out.pairs, Some(out.triples))
        }
    };
    write_atomic(&a.out, pairs_to_jsonl(&pairs).as_bytes())?;
    if let (Some(path), Some(t)) = (&a.triples_out, &triples) {
        write_atomic(path, triples_to_jsonl(t).as_bytes())?;
    }
    let counts = pair_counts(&pairs);
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k:?}: {v}")).collect();
    println!("{} pairs ({})", pairs.len(), summary.join(", "));
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let d = load_dataset(&a.dataset, &onto)?;
    let seeds = [derive(a.seed, 0), derive(a.seed, 1), derive(a.seed, 2)];
    let splits = make_splits(&d, seeds, a.train_ratio)?;
    for (i, s) in splits.iter().enumerate() {
        write_atomic(&a.out_dir.join(format!("{}.split{i}.json", d.name)), s.to_json().as_bytes())?;
        println!(
            "split {i}: {} train, {} test, {:.2}% OUT",
            s.train.len(),
            s.test.len(),
            100.0 * out_fraction(s)?
        );
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut kv_sets = a.config.sets.clone();
    if let Some(k) = a.model_kind {
        kv_sets.push(format!("model_kind={k}"));
    }
    if let Some(s) = a.epoch_scale {
        kv_sets.push(format!("epoch_scale={s}"));
    }
    if let Some(lr) = a.lr {
        kv_sets.push(format!("learning_rate={lr}"));
    }
    if let Some(b) = a.batch_size {
        kv_sets.push(format!("batch_size={b}"));
    }
    let cfg = ConfigArgs {
        config: a.config.config.clone(),
        sets: kv_sets,
    }
    .load()?;
    let tc = cfg.train_config(a.strategy, a.seed);
    tc.validate()?;
    let onto = Ontology::load(&a.ontology)?;
    let train = match &a.dataset {
        Some(p) => Some(train_subset(&load_dataset(p, &onto)?, a.split.as_deref())?),
        None if a.strategy == Strategy::Op => None,
        None => bail!("--dataset is required for {}", a.strategy),
    };
    let mut model = match &a.init {
        Some(p) => {
            let m = checkpoint::load(p, &onto)?;
            if m.kind() != tc.model_kind {
                bail!("--init checkpoint is a {} model", m.kind());
            }
            m
        }
        None => init_model(&tc, &onto)?,
    };
    if a.init.is_none() && matches!(a.strategy, Strategy::Op | Strategy::OpFt) {
        let s = pretrain(&mut model, &tc, &onto)?;
        log::info!("OP losses: {:?}", s.epoch_losses);
    }
    if let (Some(train), Strategy::Ft | Strategy::OpFt) = (&train, a.strategy) {
        let s = finetune(&mut model, &tc, &onto, train)?;
        log::info!("FT losses: {:?}", s.epoch_losses);
    }
    write_atomic(&a.out, &checkpoint::to_bytes(&model))?;
    println!("{} {} model written to {}", a.strategy, tc.model_kind, a.out.display());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let model = checkpoint::load(&a.checkpoint, &onto)?;
    let d = load_dataset(&a.dataset, &onto)?;
    let split = match &a.split {
        Some(p) => load_split_for(p, &d)?,
        None => Split {
            seed: 0,
            train: vec![],
            test: d.samples.iter().map(|s| s.sample_id.clone()).collect(),
            category: BTreeMap::new(),
        },
    };
    let predictor = model.predictor(&onto)?;
    let preds = predict_split_jobs(&predictor, &d, &split, a.jobs)?;
    write_atomic(&a.out, preds.to_jsonl().as_bytes())?;
    println!("{} predictions", preds.predictions.len());
    Ok(())
}

fn prompts(a: PromptsArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let d = load_dataset(&a.dataset, &onto)?;
    let d = match &a.split {
        Some(p) => {
            let s = load_split_for(p, &d)?;
            d.subset(d.name.clone(), &s.test)?
        }
        None => d,
    };
    write_atomic(&a.out, render_prompts(&d, a.style).as_bytes())?;
    println!("{} prompts", d.len());
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalReport<'a> {
    f1_averaging: &'a str,
    ontology_version: &'a str,
    split_seed: u64,
    metrics: termnorm::evaluation::Metrics,
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let d = load_dataset(&a.dataset, &onto)?;
    let split = load_split_for(&a.split, &d)?;
    let preds = ingest_predictions(&a.predictions, &onto, &split)?;
    let metrics = evaluate(&preds, &split, &d)?;
    let report = to_json(&EvalReport {
        f1_averaging: F1_AVERAGING,
        ontology_version: onto.version_tag(),
        split_seed: split.seed,
        metrics,
    });
    match &a.out {
        Some(p) => write_atomic(p, report.as_bytes())?,
        None => print!("{report}"),
    }
    Ok(())
}

type MetricField = fn(&termnorm::evaluation::AggregateReport) -> FieldStat;

fn cross_eval(a: CrossEvalArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let datasets = a
        .datasets
        .iter()
        .map(|p| load_dataset(p, &onto))
        .collect::<termnorm::Result<Vec<_>>>()?;
    let model_paths = name_to_paths(&a.models)?;
    let split_paths = name_to_paths(&a.splits)?;
    let mut models = BTreeMap::new();
    for (name, paths) in &model_paths {
        let ms = paths
            .iter()
            .map(|p| checkpoint::load(p, &onto))
            .collect::<termnorm::Result<Vec<_>>>()?;
        models.insert(name.clone(), ms);
    }
    let mut splits = BTreeMap::new();
    for d in &datasets {
        let paths = split_paths
            .get(&d.name)
            .ok_or_else(|| anyhow!("no --splits entry for dataset {:?}", d.name))?;
        let ss = paths.iter().map(|p| load_split_for(p, d)).collect::<Result<Vec<_>>>()?;
        splits.insert(d.name.clone(), ss);
    }
    let predictors = models
        .iter()
        .map(|(n, ms)| {
            let p = ms.iter().map(|m| m.predictor(&onto)).collect::<termnorm::Result<Vec<_>>>()?;
            Ok((n.clone(), p))
        })
        .collect::<termnorm::Result<BTreeMap<_, _>>>()?;
    let matrix = cross_matrix(&predictors, &datasets, &splits, a.jobs)?;
    write_atomic(&a.out, to_json(&matrix).as_bytes())?;
    if let Some(dir) = &a.csv_dir {
        let fields: [(&str, MetricField); 6] = [
            ("accuracy_in", |r| r.accuracy_in),
            ("accuracy_out", |r| r.accuracy_out),
            ("accuracy_overall", |r| r.accuracy_overall),
            ("f1_in", |r| r.f1_in),
            ("f1_out", |r| r.f1_out),
            ("f1_overall", |r| r.f1_overall),
        ];
        for (name, f) in fields {
            write_atomic(&dir.join(format!("{name}.csv")), matrix.to_csv(f).as_bytes())?;
        }
    }
    print!("{}", matrix.to_csv(|r| r.accuracy_overall));
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let onto = Ontology::load(&a.ontology)?;
    let datasets = a
        .datasets
        .iter()
        .map(|p| load_dataset(p, &onto))
        .collect::<termnorm::Result<Vec<_>>>()?;
    let report = dataset_stats(&datasets);
    match &a.out {
        Some(p) => write_atomic(p, to_json(&report).as_bytes())?,
        None => {
            for d in &report.datasets {
                println!("{}: {} PTs, {} unique to it", d.name, d.distinct_pts, d.unique_pts);
            }
            println!(
                "union {} PTs, {} shared by two or more, {} shared by all",
                report.union_pts, report.shared_two_or_more, report.shared_all
            );
        }
    }
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let (report, artifacts) = run_pipeline(&cfg, a.jobs)?;
    write_atomic(&a.out, report.to_json().as_bytes())?;
    if let Some(csv) = &a.csv {
        write_atomic(csv, report.table_csv().as_bytes())?;
    }
    if let Some(dir) = &a.artifacts_dir {
        write_atomic(&dir.join("ontology.tsv"), artifacts.ontology.to_tsv().as_bytes())?;
        for d in &artifacts.datasets {
            write_atomic(&dir.join(format!("{}.jsonl", d.name)), d.to_jsonl().as_bytes())?;
            for (i, s) in artifacts.splits[&d.name].iter().enumerate() {
                write_atomic(&dir.join(format!("{}.split{i}.json", d.name)), s.to_json().as_bytes())?;
            }
        }
    }
    print!("{}", report.table_csv());
    for s in [Strategy::Ft, Strategy::OpFt] {
        if let Some(drop) = report.cross_drop(s) {
            println!("{s} cross-dataset overall-accuracy drop: {drop:.4}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::OpCorpus(a) => op_corpus(a),
        Command::Pairs(a) => pairs(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Prompts(a) => prompts(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::CrossEval(a) => cross_eval(a),
        Command::Stats(a) => stats(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<termnorm::Error>() {
        Some(termnorm::Error::Divergence { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
