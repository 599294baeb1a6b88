//! Contrastive training samples built from labeled AEs and the ontology.
//!
//! * term-term pairs: every unordered pair of samples, positive when the two
//!   labels are equal and negative otherwise;
//! * term-relation-term triples `(x, RO, y)` for pairs with different labels
//!   whose PTs share the same HLT;
//! * synonym pairs `(llt, ae)` with `parent(llt) = label(ae)`, and
//!   `(llt_i, llt_j)` for LLTs under the same PT.
//!
//! Samples are visited in sample-id order and pairs `(i, j)` with `i < j`, so
//! every generator is deterministic.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::rng::DetRng;

pub const RELATED_OTHER: &str = "RO";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairSample {
    pub left: String,
    pub right: String,
    pub polarity: Polarity,
}

impl PairSample {
    fn new(left: &str, right: &str, polarity: Polarity) -> Self {
        PairSample {
            left: left.to_string(),
            right: right.to_string(),
            polarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleSample {
    pub left: String,
    pub relation: String,
    pub right: String,
}

#[derive(Debug, Clone, Default)]
pub struct CoderOptions {
    /// Keep at most this many negatives per positive pair (seeded
    /// subsample, original order preserved). `None` keeps all.
    pub max_negatives_per_positive: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoderSamples {
    pub pairs: Vec<PairSample>,
    pub triples: Vec<TripleSample>,
    /// Differently-labeled pairs skipped for triples because a PT lacks an HLT.
    pub skipped_missing_hlt: usize,
}

fn sorted_samples(dataset: &Dataset) -> Vec<&Sample> {
    let mut v: Vec<&Sample> = dataset.samples.iter().collect();
    v.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    v
}

fn check_labels(samples: &[&Sample], ontology: &Ontology) -> Result<()> {
    match samples.iter().find(|s| !ontology.has_pt(&s.label_pt_id)) {
        Some(s) => Err(Error::UnknownId(format!(
            "sample {:?} label {:?} not in ontology",
            s.sample_id, s.label_pt_id
        ))),
        None => Ok(()),
    }
}

pub fn coder_samples(dataset: &Dataset, ontology: &Ontology) -> Result<CoderSamples> {
    coder_samples_with(dataset, ontology, &CoderOptions::default())
}

pub fn coder_samples_with(
    dataset: &Dataset,
    ontology: &Ontology,
    opts: &CoderOptions,
) -> Result<CoderSamples> {
    let samples = sorted_samples(dataset);
    check_labels(&samples, ontology)?;

    let mut pairs = Vec::new();
    let mut triples = Vec::new();
    let mut skipped = 0usize;
    let mut negative_slots = Vec::new();
    let mut positives = 0usize;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            if a.label_pt_id == b.label_pt_id {
                pairs.push(PairSample::new(&a.text, &b.text, Polarity::Positive));
                positives += 1;
                continue;
            }
            negative_slots.push(pairs.len());
            pairs.push(PairSample::new(&a.text, &b.text, Polarity::Negative));
            match (ontology.hlt_of(&a.label_pt_id), ontology.hlt_of(&b.label_pt_id)) {
                (Some(ha), Some(hb)) if ha == hb => triples.push(TripleSample {
                    left: a.text.clone(),
                    relation: RELATED_OTHER.to_string(),
                    right: b.text.clone(),
                }),
                (Some(_), Some(_)) => {}
                _ => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        log::warn!(
            "{}: {skipped} pair(s) skipped for RO triples because a PT has no HLT",
            dataset.name
        );
    }

    if let Some(cap) = opts.max_negatives_per_positive {
        let keep_n = cap.saturating_mul(positives);
        if keep_n < negative_slots.len() {
            let mut rng = DetRng::new(opts.seed);
            rng.shuffle(&mut negative_slots);
            let mut drop = vec![false; pairs.len()];
            for &slot in &negative_slots[keep_n..] {
                drop[slot] = true;
            }
            pairs = pairs
                .into_iter()
                .zip(drop)
                .filter_map(|(p, d)| (!d).then_some(p))
                .collect();
        }
    }

    Ok(CoderSamples {
        pairs,
        triples,
        skipped_missing_hlt: skipped,
    })
}

/// `(llt_text, ae_text)` for every LLT under each sample's label; sample-major.
pub fn sapbert_dataset_pairs(dataset: &Dataset, ontology: &Ontology) -> Result<Vec<PairSample>> {
    let samples = sorted_samples(dataset);
    check_labels(&samples, ontology)?;
    let mut out = Vec::new();
    for s in samples {
        for llt_id in ontology.children(&s.label_pt_id) {
            let llt = ontology.llt(llt_id).expect("child index is consistent");
            out.push(PairSample::new(&llt.llt_text, &s.text, Polarity::Positive));
        }
    }
    Ok(out)
}

/// `(llt_i, llt_j)` for every unordered pair of LLTs under the same PT.
pub fn sapbert_op_pairs(ontology: &Ontology) -> Vec<PairSample> {
    let mut out = Vec::new();
    for c in ontology.concepts() {
        let kids = ontology.children(&c.pt_id);
        for (i, a) in kids.iter().enumerate() {
            for b in &kids[i + 1..] {
                let (la, lb) = (ontology.llt(a).unwrap(), ontology.llt(b).unwrap());
                out.push(PairSample::new(&la.llt_text, &lb.llt_text, Polarity::Positive));
            }
        }
    }
    out
}

/// Counts of the three rules, for quick reporting.
pub fn pair_counts(pairs: &[PairSample]) -> BTreeMap<Polarity, usize> {
    let mut m = BTreeMap::new();
    for p in pairs {
        *m.entry(p.polarity).or_insert(0) += 1;
    }
    m
}

pub fn pairs_to_jsonl(pairs: &[PairSample]) -> String {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(out, "{}", serde_json::to_string(p).expect("serializable"));
    }
    out
}

pub fn triples_to_jsonl(triples: &[TripleSample]) -> String {
    let mut out = String::new();
    for t in triples {
        let _ = writeln!(out, "{}", serde_json::to_string(t).expect("serializable"));
    }
    out
}

pub fn parse_pairs_jsonl(text: &str) -> Result<Vec<PairSample>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
