//! Instance generators and brute-force oracles shared by the integration
//! tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use termnorm::contrastive::{PairSample, Polarity, TripleSample, RELATED_OTHER};
use termnorm::dataset::{Category, Dataset, Sample, Split};
use termnorm::models::{Prediction, PredictionSet};
use termnorm::ontology::{Concept, LltEntry, Ontology, HEADER};
use termnorm::models::{ClassifierModel, DualEncoder, PtIndex};
use termnorm::rng::DetRng;
use termnorm::text::FeaturizerConfig;

pub fn sample(id: &str, text: &str, label: &str) -> Sample {
    Sample {
        sample_id: id.to_string(),
        text: text.to_string(),
        label_pt_id: label.to_string(),
        group_key: None,
        source_llt_id: None,
    }
}

/// Three LLTs under two PTs, both PTs under one HLT.
pub fn toy_ontology() -> Ontology {
    let tsv = format!(
        "{HEADER}\n\
         10001\tweakness\tasthenia\tasthenia\tHLT1\tAsthenic conditions\n\
         10002\tloss of energy\tasthenia\tasthenia\tHLT1\tAsthenic conditions\n\
         10003\tfeeling unwell\tmalaise\tmalaise\tHLT1\tAsthenic conditions\n"
    );
    Ontology::parse(&tsv, Path::new("toy.tsv")).unwrap()
}

pub fn worked_example() -> Dataset {
    Dataset::new(
        "worked",
        vec![
            sample("a1", "weak knees", "asthenia"),
            sample("a2", "zap me of all energy", "asthenia"),
            sample("a3", "feel like crap", "malaise"),
        ],
    )
    .unwrap()
}

const WORDS: &[&str] = &["ache", "pain", "sore", "weak", "tired", "dizzy", "sick", "numb", "hot", "cold"];

fn phrase(rng: &mut DetRng) -> String {
    let n = 1 + rng.below(3);
    (0..n).map(|_| *rng.pick(WORDS)).collect::<Vec<_>>().join(" ")
}

/// Random ontology with at most `max_pt` PTs (ids `P0..`), at most `max_hlt`
/// HLTs, and some PTs without an HLT.
pub fn random_ontology(rng: &mut DetRng, max_pt: usize, max_hlt: usize, max_children: usize) -> Ontology {
    let n_pt = 1 + rng.below(max_pt);
    let n_hlt = rng.below(max_hlt + 1);
    let mut concepts = Vec::new();
    let mut llts = Vec::new();
    let mut used = BTreeSet::new();
    for p in 0..n_pt {
        let hlt = if n_hlt == 0 || rng.chance(0.25) { None } else { Some(rng.below(n_hlt)) };
        concepts.push(Concept {
            pt_id: format!("P{p}"),
            pt_text: format!("pt {p}"),
            hlt_id: hlt.map(|h| format!("H{h}")),
            hlt_text: hlt.map(|h| format!("group {h}")),
        });
        let k = 1 + rng.below(max_children);
        for _ in 0..k {
            let mut text = phrase(rng);
            while !used.insert(text.clone()) {
                text = format!("{text} {}", rng.pick(WORDS));
            }
            llts.push(LltEntry {
                llt_id: format!("L{:03}", llts.len()),
                llt_text: text,
                parent_pt_id: format!("P{p}"),
            });
        }
    }
    Ontology::from_parts(concepts, llts, "random").unwrap()
}

/// Random labeled dataset over the ontology's PTs; texts may repeat.
pub fn random_dataset(rng: &mut DetRng, onto: &Ontology, max_samples: usize) -> Dataset {
    let pts = onto.pt_ids();
    let n = rng.below(max_samples + 1);
    let mut ids: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut ids);
    let samples = ids
        .into_iter()
        .map(|i| sample(&format!("s{i:02}"), &phrase(rng), rng.pick(&pts)))
        .collect();
    Dataset::new("random", samples).unwrap()
}

pub fn sorted<T: Ord + Clone>(v: &[T]) -> Vec<T> {
    let mut v = v.to_vec();
    v.sort();
    v
}

/// Term-term pairs and RO triples by exhaustive enumeration of ordered index
/// pairs, keeping the one whose first sample id is smaller.
pub fn coder_oracle(d: &Dataset, o: &Ontology) -> (Vec<PairSample>, Vec<TripleSample>, usize) {
    let s = &d.samples;
    let mut pairs = Vec::new();
    let mut triples = Vec::new();
    let mut skipped = 0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if s[i].sample_id >= s[j].sample_id {
                continue;
            }
            let same = s[i].label_pt_id == s[j].label_pt_id;
            pairs.push(PairSample {
                left: s[i].text.clone(),
                right: s[j].text.clone(),
                polarity: if same { Polarity::Positive } else { Polarity::Negative },
            });
            if same {
                continue;
            }
            let hi = o.concept(&s[i].label_pt_id).unwrap().hlt_id.clone();
            let hj = o.concept(&s[j].label_pt_id).unwrap().hlt_id.clone();
            match (hi, hj) {
                (Some(a), Some(b)) if a == b => triples.push(TripleSample {
                    left: s[i].text.clone(),
                    relation: RELATED_OTHER.to_string(),
                    right: s[j].text.clone(),
                }),
                (Some(_), Some(_)) => {}
                _ => skipped += 1,
            }
        }
    }
    (pairs, triples, skipped)
}

/// `(llt, ae)` for every (sample, LLT) combination whose parent is the label.
pub fn sapbert_dataset_oracle(d: &Dataset, o: &Ontology) -> Vec<PairSample> {
    let mut out = Vec::new();
    for s in &d.samples {
        for l in o.llts() {
            if l.parent_pt_id == s.label_pt_id {
                out.push(PairSample {
                    left: l.llt_text.clone(),
                    right: s.text.clone(),
                    polarity: Polarity::Positive,
                });
            }
        }
    }
    out
}

/// `(llt_a, llt_b)` for all LLT pairs with equal parent, smaller id on the left.
pub fn sapbert_op_oracle(o: &Ontology) -> Vec<PairSample> {
    let llts: Vec<_> = o.llts().collect();
    let mut out = Vec::new();
    for a in &llts {
        for b in &llts {
            if a.llt_id < b.llt_id && a.parent_pt_id == b.parent_pt_id {
                out.push(PairSample {
                    left: a.llt_text.clone(),
                    right: b.llt_text.clone(),
                    polarity: Polarity::Positive,
                });
            }
        }
    }
    out
}

pub struct ConfusionScores {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy and macro-F1 from an explicit confusion matrix. `None` predictions
/// fall in an extra column that belongs to no class.
pub fn confusion_oracle(items: &[(String, Option<String>)]) -> Option<ConfusionScores> {
    if items.is_empty() {
        return None;
    }
    let mut labels: Vec<String> = items.iter().map(|(g, _)| g.clone()).collect();
    for (_, p) in items {
        if let Some(p) = p {
            labels.push(p.clone());
        }
    }
    labels.sort();
    labels.dedup();
    let k = labels.len();
    let idx = |s: &str| labels.iter().position(|l| l == s).unwrap();
    // column k is "unresolved"
    let mut m = vec![vec![0usize; k + 1]; k];
    for (g, p) in items {
        let col = p.as_deref().map(idx).unwrap_or(k);
        m[idx(g)][col] += 1;
    }
    let correct: usize = (0..k).map(|i| m[i][i]).sum();
    let gold: BTreeSet<usize> = items.iter().map(|(g, _)| idx(g)).collect();
    let f1s: Vec<f64> = gold
        .iter()
        .map(|&c| {
            let tp = m[c][c] as f64;
            let fp = (0..k).map(|r| m[r][c]).sum::<usize>() as f64 - tp;
            let fn_ = m[c].iter().sum::<usize>() as f64 - tp;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        })
        .collect();
    Some(ConfusionScores {
        accuracy: correct as f64 / items.len() as f64,
        macro_f1: f1s.iter().sum::<f64>() / f1s.len() as f64,
    })
}

/// A random evaluation instance: gold dataset, split with random IN/OUT tags,
/// and predictions (some unresolved).
pub fn random_eval_instance(rng: &mut DetRng, max_classes: usize, max_samples: usize) -> (Dataset, Split, PredictionSet) {
    let n_classes = 1 + rng.below(max_classes);
    let n = 1 + rng.below(max_samples);
    let class = |rng: &mut DetRng| format!("C{}", rng.below(n_classes));
    let samples: Vec<Sample> = (0..n).map(|i| sample(&format!("t{i:03}"), "x", &class(rng))).collect();
    let mut preds = PredictionSet::default();
    let mut category = BTreeMap::new();
    for s in &samples {
        let p = match rng.below(10) {
            0 => Prediction::Unresolved,
            1..=4 => Prediction::Pt(s.label_pt_id.clone()),
            _ => Prediction::Pt(class(rng)),
        };
        preds.insert(s.sample_id.clone(), p);
        category.insert(
            s.sample_id.clone(),
            if rng.chance(0.3) { Category::Out } else { Category::In },
        );
    }
    let split = Split {
        seed: 0,
        train: vec![],
        test: samples.iter().map(|s| s.sample_id.clone()).collect(),
        category,
    };
    (Dataset::new("eval", samples).unwrap(), split, preds)
}

pub fn items_for(
    d: &Dataset,
    split: &Split,
    preds: &PredictionSet,
    cat: Option<Category>,
) -> Vec<(String, Option<String>)> {
    d.samples
        .iter()
        .filter(|s| cat.is_none_or(|c| split.category[&s.sample_id] == c))
        .map(|s| {
            (
                s.label_pt_id.clone(),
                preds.predictions[&s.sample_id].pt().map(str::to_string),
            )
        })
        .collect()
}

/// Random dataset for split tests; group keys on about half the instances.
pub fn random_split_dataset(rng: &mut DetRng) -> Dataset {
    let n = 2 + rng.below(60);
    let grouped = rng.chance(0.5);
    let n_groups = 1 + rng.below(8);
    let samples = (0..n)
        .map(|i| Sample {
            sample_id: format!("id{:03}", (i * 37) % 1000),
            text: "t".into(),
            label_pt_id: format!("P{}", rng.below(1 + n / 3)),
            group_key: (grouped && rng.chance(0.8)).then(|| format!("g{}", rng.below(n_groups))),
            source_llt_id: None,
        })
        .collect();
    Dataset::new("s", samples).unwrap()
}

/// Disjoint, exhaustive, correctly tagged; whole groups on one side.
pub fn check_split(d: &Dataset, s: &Split) -> Result<(), String> {
    let all: BTreeSet<&str> = d.samples.iter().map(|x| x.sample_id.as_str()).collect();
    let train: BTreeSet<&str> = s.train.iter().map(String::as_str).collect();
    let test: BTreeSet<&str> = s.test.iter().map(String::as_str).collect();
    if train.len() != s.train.len() || test.len() != s.test.len() {
        return Err("duplicate ids".into());
    }
    if !train.is_disjoint(&test) {
        return Err("train and test overlap".into());
    }
    if train.union(&test).copied().collect::<BTreeSet<_>>() != all {
        return Err("not exhaustive".into());
    }
    let label = |id: &str| d.samples.iter().find(|x| x.sample_id == id).unwrap().label_pt_id.clone();
    let train_labels: BTreeSet<String> = train.iter().map(|id| label(id)).collect();
    let keys: BTreeSet<&str> = s.category.keys().map(String::as_str).collect();
    if keys != test {
        return Err("category keys differ from test ids".into());
    }
    for id in &test {
        let want = if train_labels.contains(&label(id)) { Category::In } else { Category::Out };
        if s.category[*id] != want {
            return Err(format!("{id} tagged {:?}", s.category[*id]));
        }
    }
    let mut side: BTreeMap<&str, bool> = BTreeMap::new();
    for x in &d.samples {
        if let Some(g) = &x.group_key {
            let t = train.contains(x.sample_id.as_str());
            if *side.entry(g).or_insert(t) != t {
                return Err(format!("group {g} split across train and test"));
            }
        }
    }
    Ok(())
}

/// round(0.6 n) with halves up, in integer arithmetic.
pub fn sixty_percent(n: usize) -> usize {
    (6 * n + 5) / 10
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    // vanishing gradients leave only finite-difference rounding noise
    diff / na.max(nb).max(1e-3)
}

const H: f64 = 1e-6;
const GRAD_TEXTS: &[&str] = &["weak knees", "zap me of all energy", "feel like crap", "head pounding", "sore", "dizzy spells"];

fn grad_featurizer() -> FeaturizerConfig {
    FeaturizerConfig::new(128, 2, 3).unwrap()
}

/// Norm-relative error of the classifier gradient at a random point.
pub fn classifier_check(seed: u64) -> f64 {
    let mut rng = DetRng::new(seed);
    let c = 2 + rng.below(4);
    let pts: Vec<String> = (0..c).map(|i| format!("P{i}")).collect();
    let mut m = ClassifierModel::new(grad_featurizer(), pts, seed).unwrap();
    for w in m.weights_mut() {
        *w = rng.uniform(-1.0, 1.0);
    }
    for b in m.bias_mut() {
        *b = rng.uniform(-1.0, 1.0);
    }
    let fv = m.input(rng.pick(GRAD_TEXTS));
    let label = rng.below(c);
    let (_, grad) = m.loss_grad(&fv, label).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for &(i, _) in &fv.entries {
        for k in 0..c {
            let at = i as usize * c + k;
            let orig = m.weights()[at];
            m.weights_mut()[at] = orig + H;
            let up = m.loss_grad(&fv, label).unwrap().0;
            m.weights_mut()[at] = orig - H;
            let down = m.loss_grad(&fv, label).unwrap().0;
            m.weights_mut()[at] = orig;
            numeric.push((up - down) / (2.0 * H));
            analytic.push(grad.weights.get(i, k));
        }
    }
    for k in 0..c {
        let orig = m.bias()[k];
        m.bias_mut()[k] = orig + H;
        let up = m.loss_grad(&fv, label).unwrap().0;
        m.bias_mut()[k] = orig - H;
        let down = m.loss_grad(&fv, label).unwrap().0;
        m.bias_mut()[k] = orig;
        numeric.push((up - down) / (2.0 * H));
        analytic.push(grad.bias[k]);
    }
    relative_error(&analytic, &numeric)
}

/// Norm-relative error of the InfoNCE gradient at a random point.
pub fn infonce_check(seed: u64) -> f64 {
    let mut rng = DetRng::new(seed);
    let d = 2 + rng.below(6);
    let mut enc = DualEncoder::new(grad_featurizer(), d, 0.07, vec!["P".into()], seed).unwrap();
    for p in enc.projection_mut() {
        *p = rng.uniform(-1.0, 1.0);
    }
    let tau = rng.uniform(0.05, 1.0);
    let anchor = rng.pick(GRAD_TEXTS).to_string();
    let positive = rng.pick(GRAD_TEXTS).to_string();
    let negatives: Vec<String> = (0..1 + rng.below(3)).map(|_| rng.pick(GRAD_TEXTS).to_string()).collect();
    let (_, grad) = enc.contrastive_loss_grad(&anchor, &positive, &negatives, tau).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (&row, values) in &grad.rows {
        for (k, g) in values.iter().enumerate() {
            let at = row as usize * d + k;
            let orig = enc.projection()[at];
            enc.projection_mut()[at] = orig + H;
            let up = enc.contrastive_loss_grad(&anchor, &positive, &negatives, tau).unwrap().0;
            enc.projection_mut()[at] = orig - H;
            let down = enc.contrastive_loss_grad(&anchor, &positive, &negatives, tau).unwrap().0;
            enc.projection_mut()[at] = orig;
            numeric.push((up - down) / (2.0 * H));
            analytic.push(*g);
        }
    }
    // a row the texts never touch has zero gradient
    let untouched = (0..128u32).find(|r| !grad.rows.contains_key(r)).unwrap();
    let at = untouched as usize * d;
    let orig = enc.projection()[at];
    enc.projection_mut()[at] = orig + H;
    let up = enc.contrastive_loss_grad(&anchor, &positive, &negatives, tau).unwrap().0;
    enc.projection_mut()[at] = orig - H;
    let down = enc.contrastive_loss_grad(&anchor, &positive, &negatives, tau).unwrap().0;
    enc.projection_mut()[at] = orig;
    numeric.push((up - down) / (2.0 * H));
    analytic.push(0.0);
    relative_error(&analytic, &numeric)
}

const RETRIEVAL_TEXTS: &[&str] = &["", "ache", "pain", "sore back", "back pain", "dizzy", "pain", "numb feet", "ache"];

/// O(n) cosine scan; ties go to the smallest pt_id.
pub fn cosine_scan(encoder: &DualEncoder, entries: &[(String, String)], query: &str) -> String {
    let q = encoder.embed(query);
    let cos = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (na * nb)
    };
    let scores: Vec<f64> = entries.iter().map(|(_, t)| cos(&q, &encoder.embed(t))).collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    entries
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s == best)
        .map(|((pt, _), _)| pt.clone())
        .min()
        .unwrap()
}

/// Random (encoder, entries, query) for retrieval checks; duplicated texts
/// under different ids create exact ties.
pub fn retrieval_instance(seed: u64) -> (DualEncoder, Vec<(String, String)>, &'static str) {
    let mut rng = DetRng::new(seed);
    let feat = FeaturizerConfig::new(64, 2, 3).unwrap();
    let d = 1 + rng.below(6);
    let n = 1 + rng.below(8);
    let mut entries: Vec<(String, String)> = (0..n)
        .map(|_| (format!("P{}", rng.below(20)), rng.pick(RETRIEVAL_TEXTS).to_string()))
        .collect();
    entries.sort();
    entries.dedup_by(|a, b| a.0 == b.0);
    rng.shuffle(&mut entries);
    let mut pts: Vec<String> = entries.iter().map(|e| e.0.clone()).collect();
    pts.sort();
    let enc = DualEncoder::new(feat, d, 0.07, pts, rng.next_u64()).unwrap();
    let query = *rng.pick(RETRIEVAL_TEXTS);
    (enc, entries, query)
}

/// `retrieve` agrees with the cosine scan on the instance for `seed`.
pub fn retrieval_agrees(seed: u64) -> bool {
    let (enc, entries, query) = retrieval_instance(seed);
    let index = PtIndex::from_texts(&enc, entries.iter().map(|(p, t)| (p.as_str(), t.as_str())));
    index.retrieve(&enc, query).unwrap() == cosine_scan(&enc, &entries, query)
}

/// One random split case: contract, repeatability, and the ungrouped size.
pub fn split_case(seed: u64) -> Result<(), String> {
    let mut rng = DetRng::new(seed);
    let d = random_split_dataset(&mut rng);
    let seeds = [1, 2, 3].map(|i| termnorm::rng::derive(seed, i));
    // a group larger than the test share can swallow the whole test set
    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    for s in &d.samples {
        let key = s.group_key.clone().unwrap_or_else(|| format!("\0{}", s.sample_id));
        *sizes.entry(key).or_insert(0) += 1;
    }
    let largest = sizes.values().copied().max().unwrap_or(0);
    let splits = match termnorm::dataset::make_splits(&d, seeds, 0.6) {
        Ok(s) => s,
        Err(_) if largest > d.len() - sixty_percent(d.len()) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let again = termnorm::dataset::make_splits(&d, seeds, 0.6).map_err(|e| e.to_string())?;
    if splits != again {
        return Err("repeat differs".into());
    }
    let grouped = d.samples.iter().any(|s| s.group_key.is_some());
    for s in &splits {
        check_split(&d, s)?;
        if !grouped && s.train.len() != sixty_percent(d.len()) {
            return Err(format!("train size {} for N = {}", s.train.len(), d.len()));
        }
        if grouped && s.train.len() < sixty_percent(d.len()) {
            return Err("grouped train below target".into());
        }
    }
    Ok(())
}

/// OP corpus size and label multiset on a random ontology.
pub fn op_corpus_case(seed: u64) -> Result<(), String> {
    let mut rng = DetRng::new(seed);
    let o = random_ontology(&mut rng, 8, 3, 5);
    let corpus = termnorm::ontology::build_op_corpus(&o);
    if corpus.len() != o.llt_count() {
        return Err(format!("{} samples for {} LLTs", corpus.len(), o.llt_count()));
    }
    let mut want: Vec<(String, String)> =
        o.llts().map(|l| (l.llt_text.clone(), l.parent_pt_id.clone())).collect();
    let mut got: Vec<(String, String)> =
        corpus.samples.iter().map(|s| (s.text.clone(), s.label_pt_id.clone())).collect();
    want.sort();
    got.sort();
    if want != got {
        return Err("label multiset differs".into());
    }
    Ok(())
}

pub fn toy_op_corpus_ok() -> bool {
    let corpus = termnorm::ontology::build_op_corpus(&toy_ontology());
    let got: BTreeSet<(String, String)> =
        corpus.samples.iter().map(|s| (s.text.clone(), s.label_pt_id.clone())).collect();
    let want: BTreeSet<(String, String)> = [
        ("weakness", "asthenia"),
        ("loss of energy", "asthenia"),
        ("feeling unwell", "malaise"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    corpus.len() == 3 && got == want
}

/// Overlap counts by explicit set algebra over the label sets.
pub struct StatsOracle {
    pub union: usize,
    pub shared_two: usize,
    pub shared_all: usize,
    pub unique: Vec<usize>,
    pub distinct: Vec<usize>,
}

pub fn stats_oracle(datasets: &[Dataset]) -> StatsOracle {
    let sets: Vec<BTreeSet<String>> = datasets
        .iter()
        .map(|d| d.samples.iter().map(|s| s.label_pt_id.clone()).collect())
        .collect();
    let union: BTreeSet<String> = sets.iter().flatten().cloned().collect();
    let all: BTreeSet<String> = union.iter().filter(|p| sets.iter().all(|s| s.contains(*p))).cloned().collect();
    let mut pairwise = BTreeSet::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            pairwise.extend(sets[i].intersection(&sets[j]).cloned());
        }
    }
    let unique = (0..sets.len())
        .map(|i| {
            let others: BTreeSet<String> =
                sets.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, s)| s.iter().cloned()).collect();
            sets[i].difference(&others).count()
        })
        .collect();
    StatsOracle {
        union: union.len(),
        shared_two: pairwise.len(),
        shared_all: all.len(),
        unique,
        distinct: sets.iter().map(BTreeSet::len).collect(),
    }
}

/// `dataset_stats` against the oracle, including per-PT frequencies.
pub fn stats_agree(datasets: &[Dataset]) -> Result<(), String> {
    let r = termnorm::dataset::dataset_stats(datasets);
    let o = stats_oracle(datasets);
    let got = (r.union_pts, r.shared_two_or_more, r.shared_all);
    if got != (o.union, o.shared_two, o.shared_all) {
        return Err(format!("totals {got:?} vs {:?}", (o.union, o.shared_two, o.shared_all)));
    }
    for (i, (d, per)) in datasets.iter().zip(&r.datasets).enumerate() {
        if per.unique_pts != o.unique[i] || per.distinct_pts != o.distinct[i] {
            return Err(format!("{}: unique/distinct mismatch", d.name));
        }
        if per.pt_frequency.values().sum::<usize>() != d.len() {
            return Err(format!("{}: histogram does not sum to the sample count", d.name));
        }
        for (pt, n) in &per.pt_frequency {
            if *n != d.samples.iter().filter(|s| &s.label_pt_id == pt).count() {
                return Err(format!("{}: count of {pt}", d.name));
            }
        }
    }
    let sum_unique: usize = o.unique.iter().sum();
    // every PT is unique to one dataset or shared by at least two
    if sum_unique + o.shared_two != o.union {
        return Err("unique and shared do not partition the union".into());
    }
    Ok(())
}

pub fn golden_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Samples behind the prompt golden files.
pub fn prompt_dataset() -> Dataset {
    Dataset::new(
        "prompts",
        vec![
            sample("1", "feel like crap", "P"),
            sample("2", "zap me of all energy", "P"),
            sample("3", "weak knees", "P"),
            sample("4", "my \"head\" hurts", "P"),
        ],
    )
    .unwrap()
}

/// Prompt rendering equals the golden files byte for byte.
pub fn prompts_match_golden() -> Result<(), String> {
    use termnorm::models::{render_prompts, PromptStyle};
    let d = prompt_dataset();
    for (style, file) in [(PromptStyle::Gpt2, "prompts_gpt2.jsonl"), (PromptStyle::Sci5, "prompts_sci5.jsonl")] {
        let want = std::fs::read(golden_path(file)).map_err(|e| e.to_string())?;
        if render_prompts(&d, style).as_bytes() != want.as_slice() {
            return Err(format!("{file} differs"));
        }
    }
    Ok(())
}
