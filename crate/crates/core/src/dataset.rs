//! Labeled AE datasets, deterministic train/test splits with IN/OUT tags,
//! and cross-dataset PT overlap statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::rng::DetRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub text: String,
    pub label_pt_id: String,
    pub group_key: Option<String>,
    /// LLT the text was derived from, when known (OP corpus, synthetic data).
    pub source_llt_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
}

/// JSON scalar accepted as an id: `"a1"` or `17`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum IdValue {
    Str(String),
    Int(i64),
}

impl IdValue {
    fn into_string(self) -> String {
        match self {
            IdValue::Str(s) => s,
            IdValue::Int(i) => i.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: IdValue,
    text: String,
    pt_id: Option<IdValue>,
    llt_id: Option<IdValue>,
    group: Option<IdValue>,
    source_llt: Option<IdValue>,
}

#[derive(Debug, Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    text: &'a str,
    pt_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_llt: Option<&'a str>,
}

impl Dataset {
    /// Checks that sample ids are unique and texts nonempty.
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if s.text.is_empty() {
                return Err(Error::InvalidArgument(format!("sample {:?} has empty text", s.sample_id)));
            }
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate sample_id {:?}", s.sample_id)));
            }
        }
        Ok(Dataset::new_unchecked(name, samples))
    }

    pub(crate) fn new_unchecked(name: impl Into<String>, samples: Vec<Sample>) -> Self {
        Dataset {
            name: name.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn by_id(&self) -> BTreeMap<&str, &Sample> {
        self.samples.iter().map(|s| (s.sample_id.as_str(), s)).collect()
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.label_pt_id.as_str()).collect()
    }

    /// Samples whose ids are listed, in the order given.
    pub fn subset(&self, name: impl Into<String>, ids: &[String]) -> Result<Dataset> {
        let by_id = self.by_id();
        let samples = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|s| (*s).clone())
                    .ok_or_else(|| Error::UnknownId(format!("sample {id:?} not in {}", self.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new_unchecked(name, samples))
    }

    pub fn check_labels(&self, ontology: &Ontology) -> Result<()> {
        match self.samples.iter().find(|s| !ontology.has_pt(&s.label_pt_id)) {
            Some(s) => Err(Error::UnknownId(format!(
                "sample {:?} label {:?} is not a PT of the ontology",
                s.sample_id, s.label_pt_id
            ))),
            None => Ok(()),
        }
    }

    /// JSON-lines form with PT labels.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let rec = OutRecord {
                id: &s.sample_id,
                text: &s.text,
                pt_id: &s.label_pt_id,
                group: s.group_key.as_deref(),
                source_llt: s.source_llt_id.as_deref(),
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("serializable"));
        }
        out
    }
}

/// Loads a JSON-lines dataset, relabeling LLT-labeled rows with their parent PT.
///
/// The dataset name is the file stem.
pub fn load_dataset(path: impl AsRef<Path>, ontology: &Ontology) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_dataset(&text, &name, path, ontology)
}

pub fn parse_dataset(text: &str, name: &str, origin: &Path, ontology: &Ontology) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(origin, lineno, m);
        let rec: RawRecord = serde_json::from_str(line).map_err(|e| err(format!("malformed record: {e}")))?;
        let id = rec.id.into_string();
        if let Some(prev) = seen.insert(id.clone(), lineno) {
            return Err(err(format!("duplicate sample id {id:?} (first on line {prev})")));
        }
        if rec.text.trim().is_empty() {
            return Err(err(format!("sample {id:?} has empty text")));
        }
        let label = match (rec.pt_id, rec.llt_id) {
            (Some(pt), None) => {
                let pt = pt.into_string();
                if !ontology.has_pt(&pt) {
                    return Err(err(format!("unknown label: pt_id {pt:?} not in ontology")));
                }
                pt
            }
            (None, Some(llt)) => {
                let llt = llt.into_string();
                ontology
                    .parent_of(&llt)
                    .map_err(|_| err(format!("unknown label: llt_id {llt:?} not in ontology")))?
                    .to_string()
            }
            _ => return Err(err("exactly one of pt_id / llt_id is required".into())),
        };
        samples.push(Sample {
            sample_id: id,
            text: rec.text,
            label_pt_id: label,
            group_key: rec.group.map(IdValue::into_string),
            source_llt_id: rec.source_llt.map(IdValue::into_string),
        });
    }
    Ok(Dataset::new_unchecked(name, samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "OUT")]
    Out,
}

/// Train/test partition. `train` and `test` are kept sorted by sample id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub category: BTreeMap<String, Category>,
}

impl Split {
    pub fn load(path: impl AsRef<Path>) -> Result<Split> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    /// Checks the partition and category invariants against `dataset`.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let bad = |m: String| Error::InvalidArgument(format!("split (seed {}): {m}", self.seed));
        let by_id = dataset.by_id();
        let train: BTreeSet<&str> = self.train.iter().map(String::as_str).collect();
        let test: BTreeSet<&str> = self.test.iter().map(String::as_str).collect();
        if train.len() != self.train.len() || test.len() != self.test.len() {
            return Err(bad("repeated ids".into()));
        }
        if let Some(id) = train.intersection(&test).next() {
            return Err(bad(format!("{id:?} is in both train and test")));
        }
        if train.len() + test.len() != by_id.len()
            || train.iter().chain(test.iter()).any(|id| !by_id.contains_key(id))
        {
            return Err(bad("train and test do not cover the dataset exactly".into()));
        }
        let train_labels: BTreeSet<&str> =
            train.iter().map(|id| by_id[id].label_pt_id.as_str()).collect();
        if self.category.len() != test.len() {
            return Err(bad("category map does not match the test set".into()));
        }
        for id in &test {
            let expected = category_of(&by_id[id].label_pt_id, &train_labels);
            match self.category.get(*id) {
                Some(c) if *c == expected => {}
                _ => return Err(bad(format!("wrong or missing category for {id:?}"))),
            }
        }
        Ok(())
    }

    pub fn count(&self, category: Category) -> usize {
        self.category.values().filter(|c| **c == category).count()
    }
}

fn category_of(label: &str, train_labels: &BTreeSet<&str>) -> Category {
    if train_labels.contains(label) {
        Category::In
    } else {
        Category::Out
    }
}

/// `round(ratio * n)` with halves rounded up.
pub fn train_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64 + 0.5).floor() as usize
}

/// One deterministic split.
///
/// Samples are canonicalized by sample id before shuffling. Without group
/// keys, the first `round(ratio * N)` shuffled samples go to train. When any
/// sample carries a group key, whole groups (ungrouped samples count as their
/// own group) are shuffled and taken into train until it holds at least
/// `round(ratio * N)` samples.
pub fn make_split(dataset: &Dataset, seed: u64, train_ratio: f64) -> Result<Split> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} sample(s); need at least 2")));
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("train ratio {train_ratio} outside (0, 1)")));
    }
    let target = train_size(n, train_ratio);

    let mut canon: Vec<&Sample> = dataset.samples.iter().collect();
    canon.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let mut rng = DetRng::new(seed);
    let grouped = canon.iter().any(|s| s.group_key.is_some());
    let mut in_train = vec![false; n];
    if grouped {
        // groups in order of first appearance in canonical order
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, s) in canon.iter().enumerate() {
            match s.group_key.as_deref() {
                Some(g) => {
                    let k = *slot.entry(g).or_insert_with(|| {
                        groups.push(Vec::new());
                        groups.len() - 1
                    });
                    groups[k].push(i);
                }
                None => groups.push(vec![i]),
            }
        }
        let order = rng.permutation(groups.len());
        let mut taken = 0;
        for g in order {
            if taken >= target {
                break;
            }
            for &i in &groups[g] {
                in_train[i] = true;
            }
            taken += groups[g].len();
        }
    } else {
        for &i in rng.permutation(n).iter().take(target) {
            in_train[i] = true;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in canon.iter().enumerate() {
        if in_train[i] {
            train.push(s.sample_id.clone());
        } else {
            test.push(s.sample_id.clone());
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "ratio {train_ratio} leaves an empty train or test set for {n} samples"
        )));
    }
    let train_labels: BTreeSet<&str> = canon
        .iter()
        .zip(&in_train)
        .filter(|(_, t)| **t)
        .map(|(s, _)| s.label_pt_id.as_str())
        .collect();
    let category = canon
        .iter()
        .zip(&in_train)
        .filter(|(_, t)| !**t)
        .map(|(s, _)| (s.sample_id.clone(), category_of(&s.label_pt_id, &train_labels)))
        .collect();
    Ok(Split {
        seed,
        train,
        test,
        category,
    })
}

/// Three splits, one per seed. Seeds must be distinct.
pub fn make_splits(dataset: &Dataset, seeds: [u64; 3], train_ratio: f64) -> Result<[Split; 3]> {
    if seeds[0] == seeds[1] || seeds[0] == seeds[2] || seeds[1] == seeds[2] {
        return Err(Error::InvalidArgument(format!("split seeds must be distinct: {seeds:?}")));
    }
    Ok([
        make_split(dataset, seeds[0], train_ratio)?,
        make_split(dataset, seeds[1], train_ratio)?,
        make_split(dataset, seeds[2], train_ratio)?,
    ])
}

/// Fraction of test samples tagged OUT.
pub fn out_fraction(split: &Split) -> Result<f64> {
    if split.test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    Ok(split.count(Category::Out) as f64 / split.test.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetOverlap {
    pub name: String,
    pub distinct_pts: usize,
    /// PTs found in this dataset only.
    pub unique_pts: usize,
    /// Sample count per PT.
    pub pt_frequency: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub datasets: Vec<DatasetOverlap>,
    pub union_pts: usize,
    pub shared_two_or_more: usize,
    pub shared_all: usize,
}

pub fn dataset_stats(datasets: &[Dataset]) -> OverlapReport {
    let sets: Vec<BTreeSet<&str>> = datasets.iter().map(Dataset::labels).collect();
    let mut membership: BTreeMap<&str, usize> = BTreeMap::new();
    for set in &sets {
        for pt in set {
            *membership.entry(pt).or_insert(0) += 1;
        }
    }
    let per = datasets
        .iter()
        .zip(&sets)
        .map(|(d, set)| {
            let mut freq: BTreeMap<String, usize> = BTreeMap::new();
            for s in &d.samples {
                *freq.entry(s.label_pt_id.clone()).or_insert(0) += 1;
            }
            DatasetOverlap {
                name: d.name.clone(),
                distinct_pts: set.len(),
                unique_pts: set.iter().filter(|pt| membership[*pt] == 1).count(),
                pt_frequency: freq,
            }
        })
        .collect();
    OverlapReport {
        datasets: per,
        union_pts: membership.len(),
        shared_two_or_more: membership.values().filter(|&&k| k >= 2).count(),
        shared_all: membership.values().filter(|&&k| k == datasets.len()).count(),
    }
}
