//! Accuracy and macro-F1 on IN / OUT / overall test subsets, three-split
//! aggregation, and cross-dataset matrices.
//!
//! Macro-F1 averages per-class F1 over the classes present in the gold labels
//! of the evaluated subset; a class with `precision + recall = 0` scores 0.
//! Unresolved predictions count as wrong and are nobody's false positive.
//! A subset without samples has undefined (null) metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, Dataset, Split};
use crate::error::{Error, Result};
use crate::models::{Normalizer, Prediction, PredictionSet};

pub const F1_AVERAGING: &str =
    "macro: unweighted mean of per-class F1 over the gold classes present in each subset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy_in: Option<f64>,
    pub accuracy_out: Option<f64>,
    pub accuracy_overall: Option<f64>,
    pub f1_in: Option<f64>,
    pub f1_out: Option<f64>,
    pub f1_overall: Option<f64>,
    pub support_in: usize,
    pub support_out: usize,
    pub unresolved: usize,
}

/// Accuracy over `(gold, predicted)` items; `None` when empty.
pub fn accuracy(items: &[(&str, Option<&str>)]) -> Option<f64> {
    if items.is_empty() {
        return None;
    }
    let correct = items.iter().filter(|(g, p)| Some(*g) == *p).count();
    Some(correct as f64 / items.len() as f64)
}

/// Macro-F1 over the gold classes of `items`; `None` when empty.
pub fn macro_f1(items: &[(&str, Option<&str>)]) -> Option<f64> {
    if items.is_empty() {
        return None;
    }
    #[derive(Default)]
    struct Counts {
        tp: usize,
        fp: usize,
        fn_: usize,
    }
    let mut per: BTreeMap<&str, Counts> = items.iter().map(|(g, _)| (*g, Counts::default())).collect();
    for (gold, pred) in items {
        if Some(*gold) == *pred {
            per.get_mut(gold).unwrap().tp += 1;
            continue;
        }
        per.get_mut(gold).unwrap().fn_ += 1;
        if let Some(c) = pred.and_then(|p| per.get_mut(p)) {
            c.fp += 1;
        }
    }
    let sum: f64 = per
        .values()
        .map(|c| {
            let precision = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
            let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .sum();
    Some(sum / per.len() as f64)
}

pub fn evaluate(predictions: &PredictionSet, split: &Split, gold: &Dataset) -> Result<Metrics> {
    let test: BTreeSet<&str> = split.test.iter().map(String::as_str).collect();
    if let Some(id) = predictions.predictions.keys().find(|id| !test.contains(id.as_str())) {
        return Err(Error::Evaluation(format!("prediction for {id:?}, which is not a test sample")));
    }
    let by_id = gold.by_id();
    let mut subsets: BTreeMap<Category, Vec<(&str, Option<&str>)>> = BTreeMap::new();
    let mut unresolved = 0;
    for id in &split.test {
        let sample = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Evaluation(format!("unknown sample_id {id:?} in split")))?;
        let pred = predictions
            .predictions
            .get(id)
            .ok_or_else(|| Error::Evaluation(format!("missing prediction for {id:?}")))?;
        let cat = *split
            .category
            .get(id)
            .ok_or_else(|| Error::Evaluation(format!("no IN/OUT category for {id:?}")))?;
        if *pred == Prediction::Unresolved {
            unresolved += 1;
        }
        subsets
            .entry(cat)
            .or_default()
            .push((sample.label_pt_id.as_str(), pred.pt()));
    }
    let empty = Vec::new();
    let ins = subsets.get(&Category::In).unwrap_or(&empty);
    let outs = subsets.get(&Category::Out).unwrap_or(&empty);
    let all: Vec<(&str, Option<&str>)> = ins.iter().chain(outs.iter()).copied().collect();

    let accuracy_in = accuracy(ins);
    let accuracy_out = accuracy(outs);
    let (n_in, n_out) = (ins.len() as f64, outs.len() as f64);
    let accuracy_overall = match (accuracy_in, accuracy_out) {
        (Some(a), Some(b)) => Some((n_in * a + n_out * b) / (n_in + n_out)),
        (a, b) => a.or(b),
    };
    Ok(Metrics {
        accuracy_in,
        accuracy_out,
        accuracy_overall,
        f1_in: macro_f1(ins),
        f1_out: macro_f1(outs),
        f1_overall: macro_f1(&all),
        support_in: ins.len(),
        support_out: outs.len(),
        unresolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStat {
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1 denominator); needs two defined values.
    pub std: Option<f64>,
    /// Number of splits where the field was defined.
    pub defined: usize,
}

impl FieldStat {
    pub fn of(values: &[Option<f64>]) -> Self {
        let v: Vec<f64> = values.iter().flatten().copied().collect();
        let n = v.len();
        if n == 0 {
            return FieldStat { mean: None, std: None, defined: 0 };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        FieldStat { mean: Some(mean), std, defined: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub per_split: Vec<Metrics>,
    pub accuracy_in: FieldStat,
    pub accuracy_out: FieldStat,
    pub accuracy_overall: FieldStat,
    pub f1_in: FieldStat,
    pub f1_out: FieldStat,
    pub f1_overall: FieldStat,
    pub support_in: FieldStat,
    pub support_out: FieldStat,
    /// Some field was undefined on at least one split.
    pub partial: bool,
}

pub fn aggregate(metrics: &[Metrics]) -> Result<AggregateReport> {
    if metrics.len() != 3 {
        return Err(Error::Evaluation(format!("aggregate needs exactly 3 splits, got {}", metrics.len())));
    }
    let stat = |f: fn(&Metrics) -> Option<f64>| FieldStat::of(&metrics.iter().map(f).collect::<Vec<_>>());
    let report = AggregateReport {
        per_split: metrics.to_vec(),
        accuracy_in: stat(|m| m.accuracy_in),
        accuracy_out: stat(|m| m.accuracy_out),
        accuracy_overall: stat(|m| m.accuracy_overall),
        f1_in: stat(|m| m.f1_in),
        f1_out: stat(|m| m.f1_out),
        f1_overall: stat(|m| m.f1_overall),
        support_in: stat(|m| Some(m.support_in as f64)),
        support_out: stat(|m| Some(m.support_out as f64)),
        partial: false,
    };
    let partial = [
        report.accuracy_in,
        report.accuracy_out,
        report.accuracy_overall,
        report.f1_in,
        report.f1_out,
        report.f1_overall,
    ]
    .iter()
    .any(|s| s.defined < 3);
    Ok(AggregateReport { partial, ..report })
}

/// Predicts every test sample of `split`.
pub fn predict_split<N: Normalizer + ?Sized>(model: &N, dataset: &Dataset, split: &Split) -> Result<PredictionSet> {
    let by_id = dataset.by_id();
    let mut set = PredictionSet::default();
    for id in &split.test {
        let s = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Evaluation(format!("unknown sample_id {id:?} in split")))?;
        set.insert(id.clone(), Prediction::Pt(model.normalize(&s.text)?));
    }
    Ok(set)
}

/// [`predict_split`] over `jobs` threads; the result does not depend on `jobs`.
pub fn predict_split_jobs<N: Normalizer + ?Sized>(
    model: &N,
    dataset: &Dataset,
    split: &Split,
    jobs: usize,
) -> Result<PredictionSet> {
    if jobs <= 1 {
        return predict_split(model, dataset, split);
    }
    use rayon::prelude::*;
    let by_id = dataset.by_id();
    let texts = split
        .test
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|s| (id, s.text.as_str()))
                .ok_or_else(|| Error::Evaluation(format!("unknown sample_id {id:?} in split")))
        })
        .collect::<Result<Vec<_>>>()?;
    let pool = thread_pool(jobs)?;
    let preds: Vec<Result<String>> = pool.install(|| texts.par_iter().map(|(_, t)| model.normalize(t)).collect());
    let mut set = PredictionSet::default();
    for ((id, _), p) in texts.iter().zip(preds) {
        set.insert((*id).clone(), Prediction::Pt(p?));
    }
    Ok(set)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Trains-on-row × tests-on-column matrix of aggregated metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub train_datasets: Vec<String>,
    pub test_datasets: Vec<String>,
    /// `cells[row][col]`
    pub cells: Vec<Vec<AggregateReport>>,
}

impl CrossMatrix {
    pub fn cell(&self, train: &str, test: &str) -> Option<&AggregateReport> {
        let r = self.train_datasets.iter().position(|n| n == train)?;
        let c = self.test_datasets.iter().position(|n| n == test)?;
        Some(&self.cells[r][c])
    }

    /// One CSV per metric: rows are training sets, columns test sets, values mean.
    pub fn to_csv(&self, field: fn(&AggregateReport) -> FieldStat) -> String {
        let mut out = String::from("train\\test");
        for t in &self.test_datasets {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for (r, name) in self.train_datasets.iter().enumerate() {
            out.push_str(name);
            for cell in &self.cells[r] {
                let _ = write!(out, ",{}", fmt_opt(field(cell).mean));
            }
            out.push('\n');
        }
        out
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// For every training dataset `d1` and test dataset `d2`, predicts the test
/// samples of `d2`'s split `i` with the model trained on `d1`'s split `i`, tags
/// them with `d2`'s IN/OUT categories, and aggregates the three splits.
///
/// `jobs > 1` evaluates cells on a thread pool; results do not depend on it.
pub fn cross_matrix<N: Normalizer>(
    models: &BTreeMap<String, Vec<N>>,
    datasets: &[Dataset],
    splits: &BTreeMap<String, Vec<Split>>,
    jobs: usize,
) -> Result<CrossMatrix> {
    let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
    for n in &names {
        match models.get(n) {
            Some(v) if v.len() == 3 => {}
            _ => return Err(Error::Evaluation(format!("need 3 models trained on {n:?}"))),
        }
        match splits.get(n) {
            Some(v) if v.len() == 3 => {}
            _ => return Err(Error::Evaluation(format!("need 3 splits for {n:?}"))),
        }
    }
    let cells: Vec<(usize, usize)> = (0..names.len())
        .flat_map(|r| (0..names.len()).map(move |c| (r, c)))
        .collect();
    let run = |&(r, c): &(usize, usize)| -> Result<AggregateReport> {
        let test = &datasets[c];
        let metrics = (0..3)
            .map(|i| {
                let split = &splits[&names[c]][i];
                let preds = predict_split(&models[&names[r]][i], test, split)?;
                evaluate(&preds, split, test)
            })
            .collect::<Result<Vec<_>>>()?;
        aggregate(&metrics)
    };
    let results: Vec<Result<AggregateReport>> = if jobs > 1 {
        use rayon::prelude::*;
        thread_pool(jobs)?.install(|| cells.par_iter().map(run).collect())
    } else {
        cells.iter().map(run).collect()
    };
    let mut flat = results.into_iter();
    let mut grid = Vec::with_capacity(names.len());
    for _ in 0..names.len() {
        let row = (0..names.len()).map(|_| flat.next().unwrap()).collect::<Result<Vec<_>>>()?;
        grid.push(row);
    }
    Ok(CrossMatrix {
        train_datasets: names.clone(),
        test_datasets: names,
        cells: grid,
    })
}
