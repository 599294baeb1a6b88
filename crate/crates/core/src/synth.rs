//! Synthetic ontology and long-tail datasets.
//!
//! PT names are `[qualifier] <organ> <condition>` combinations. Each PT gets
//! LLT variants built from its own name (always the first), lay wording,
//! reordering and `nos`/`unspecified` affixes. Every dataset has one noise
//! style, its own Zipf rank order over the PTs, and renders each sample from a
//! random LLT of its label:
//!
//! - synonym substitution from [`SYNONYMS`], with probability `paraphrase_rate`
//! - filler-word insertion from [`FILLERS`], with probability `paraphrase_rate`
//! - per letter, with probability `typo_rate`: swap with the next letter or
//!   delete it (even odds)

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::ontology::{Concept, LltEntry, Ontology};
use crate::rng::{derive, DetRng};

/// (formal stem, lay stem)
const STEMS: &[(&str, &str)] = &[
    ("cardiac", "heart"),
    ("hepatic", "liver"),
    ("renal", "kidney"),
    ("gastric", "stomach"),
    ("pulmonary", "lung"),
    ("cutaneous", "skin"),
    ("ocular", "eye"),
    ("neural", "nerve"),
    ("muscular", "muscle"),
    ("vascular", "vein"),
    ("dental", "tooth"),
    ("nasal", "nose"),
    ("spinal", "back"),
    ("thyroid", "neck gland"),
    ("pancreatic", "pancreas"),
    ("biliary", "bile duct"),
    ("colonic", "bowel"),
    ("oral", "mouth"),
    ("aural", "ear"),
    ("articular", "joint"),
];

/// (formal condition, lay condition)
const CONDITIONS: &[(&str, &str)] = &[
    ("pain", "ache"),
    ("inflammation", "inflamed"),
    ("swelling", "swollen"),
    ("haemorrhage", "bleeding"),
    ("failure", "not working"),
    ("disorder", "problem"),
    ("infection", "infected"),
    ("spasm", "cramp"),
    ("lesion", "sore"),
    ("weakness", "weak"),
    ("numbness", "numb"),
    ("rash", "spots"),
    ("pruritus", "itchy"),
    ("discomfort", "uneasy"),
    ("atrophy", "wasting"),
];

/// (formal qualifier, lay qualifier)
const QUALIFIERS: &[(&str, &str)] = &[
    ("acute", "sudden"),
    ("chronic", "long term"),
    ("recurrent", "repeated"),
    ("severe", "bad"),
];

/// Word-level paraphrase table.
pub const SYNONYMS: &[(&str, &str)] = &[
    ("ache", "hurting"),
    ("pain", "hurt"),
    ("stomach", "tummy"),
    ("heart", "chest"),
    ("bleeding", "blood loss"),
    ("weak", "feeble"),
    ("sore", "raw"),
    ("swollen", "puffy"),
    ("itchy", "scratchy"),
    ("problem", "trouble"),
    ("cramp", "twitching"),
    ("bad", "terrible"),
    ("sudden", "out of nowhere"),
    ("numb", "dead feeling"),
    ("bowel", "gut"),
    ("infected", "septic"),
    ("inflamed", "angry"),
    ("spots", "bumps"),
];

pub const FILLERS: &[&str] = &["i have", "really", "my", "so much", "feeling", "some", "constant", "this"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStyle {
    pub typo_rate: f64,
    pub paraphrase_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_pt: usize,
    pub children_range: [usize; 2],
    pub n_hlt: usize,
    /// Samples per dataset.
    pub n_samples: usize,
    pub zipf_exponent: f64,
    /// One dataset per style.
    pub noise_styles: Vec<NoiseStyle>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pt: 200,
            children_range: [2, 6],
            n_hlt: 20,
            n_samples: 2000,
            zipf_exponent: 1.1,
            noise_styles: vec![
                NoiseStyle { typo_rate: 0.04, paraphrase_rate: 0.5 },
                NoiseStyle { typo_rate: 0.01, paraphrase_rate: 0.15 },
            ],
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_pt < 2 {
            return bad("n_pt must be at least 2");
        }
        let [lo, hi] = self.children_range;
        if lo < 1 || lo > hi {
            return bad("children_range must satisfy 1 <= min <= max");
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be positive");
        }
        for s in &self.noise_styles {
            if !(0.0..=1.0).contains(&s.typo_rate) || !(0.0..=1.0).contains(&s.paraphrase_rate) {
                return bad("noise rates must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

pub fn dataset_name(style_index: usize) -> String {
    format!("synth{}", style_index + 1)
}

struct PtSpec {
    qualifier: Option<usize>,
    stem: usize,
    condition: usize,
}

impl PtSpec {
    fn name(&self) -> String {
        let base = format!("{} {}", STEMS[self.stem].0, CONDITIONS[self.condition].0);
        match self.qualifier {
            Some(q) => format!("{} {base}", QUALIFIERS[q].0),
            None => base,
        }
    }

    fn variants(&self) -> Vec<String> {
        let (s, ls) = STEMS[self.stem];
        let (c, lc) = CONDITIONS[self.condition];
        let q = |t: String, lay: bool| match self.qualifier {
            Some(i) => format!("{} {t}", if lay { QUALIFIERS[i].1 } else { QUALIFIERS[i].0 }),
            None => t,
        };
        vec![
            q(format!("{ls} {lc}"), true),
            q(format!("{ls} {c}"), false),
            q(format!("{c} of {s}"), false),
            q(format!("{lc} in {ls}"), true),
            format!("{} nos", self.name()),
            q(format!("{ls} {c} unspecified"), false),
            q(format!("{s} {lc}"), true),
        ]
    }
}

fn pt_specs(n: usize, rng: &mut DetRng) -> Vec<PtSpec> {
    let mut plain: Vec<PtSpec> = Vec::new();
    for stem in 0..STEMS.len() {
        for condition in 0..CONDITIONS.len() {
            plain.push(PtSpec { qualifier: None, stem, condition });
        }
    }
    let mut qualified: Vec<PtSpec> = Vec::new();
    for qualifier in 0..QUALIFIERS.len() {
        for stem in 0..STEMS.len() {
            for condition in 0..CONDITIONS.len() {
                qualified.push(PtSpec { qualifier: Some(qualifier), stem, condition });
            }
        }
    }
    rng.shuffle(&mut plain);
    rng.shuffle(&mut qualified);
    plain.into_iter().chain(qualified).take(n).collect()
}

fn pt_id(i: usize) -> String {
    format!("{}", 10_000_000 + i + 1)
}

fn build_ontology(config: &SynthConfig, rng: &mut DetRng) -> Result<Ontology> {
    let capacity = STEMS.len() * CONDITIONS.len() * (1 + QUALIFIERS.len());
    let specs = pt_specs(config.n_pt.min(capacity), rng);
    let mut names: Vec<String> = specs.iter().map(PtSpec::name).collect();
    let mut variant_pool: Vec<Vec<String>> = specs.iter().map(PtSpec::variants).collect();
    for i in names.len()..config.n_pt {
        let base = format!("{} type {}", names[i % capacity], i / capacity + 1);
        variant_pool.push(vec![format!("{base} nos"), format!("{base} unspecified")]);
        names.push(base);
    }

    let mut used: BTreeSet<String> = names.iter().cloned().collect();
    let mut concepts = Vec::new();
    let mut llts = Vec::new();
    let [lo, hi] = config.children_range;
    for (i, name) in names.iter().enumerate() {
        let pt = pt_id(i);
        let (hlt_id, hlt_text) = if config.n_hlt == 0 {
            (None, None)
        } else {
            let stem = specs.get(i).map(|s| s.stem).unwrap_or(i);
            let j = stem % config.n_hlt;
            let mut text = format!("{} conditions", STEMS[j % STEMS.len()].1);
            if j >= STEMS.len() {
                text = format!("{text} group {}", j / STEMS.len() + 1);
            }
            (Some(format!("{}", 30_000_000 + j + 1)), Some(text))
        };
        concepts.push(Concept {
            pt_id: pt.clone(),
            pt_text: name.clone(),
            hlt_id,
            hlt_text,
        });
        let k = lo + rng.below(hi - lo + 1);
        let mut texts = vec![name.clone()];
        let mut pool = variant_pool[i].clone();
        rng.shuffle(&mut pool);
        for v in pool {
            if texts.len() >= k {
                break;
            }
            if used.insert(v.clone()) {
                texts.push(v);
            }
        }
        let mut extra = 1;
        while texts.len() < k {
            let v = format!("{name} form {extra}");
            extra += 1;
            if used.insert(v.clone()) {
                texts.push(v);
            }
        }
        for text in texts {
            llts.push(LltEntry {
                llt_id: format!("{}", 20_000_000 + llts.len() + 1),
                llt_text: text,
                parent_pt_id: pt.clone(),
            });
        }
    }
    Ontology::from_parts(concepts, llts, format!("synthetic-seed-{}", config.seed))
}

/// Cumulative Zipf weights for ranks `1..=n`.
fn zipf_cdf(n: usize, s: f64) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=n)
        .map(|k| {
            acc += (k as f64).powf(-s);
            acc
        })
        .collect()
}

fn zipf_draw(cdf: &[f64], rng: &mut DetRng) -> usize {
    let total = *cdf.last().unwrap();
    let u = rng.unit() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn apply_typos(text: &str, rate: f64, rng: &mut DetRng) -> String {
    if rate == 0.0 {
        return text.to_string();
    }
    let mut chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphabetic() && rng.chance(rate) {
            if rng.chance(0.5) && i + 1 < chars.len() && chars[i + 1].is_alphabetic() {
                chars.swap(i, i + 1);
                out.push(chars[i]);
            }
            // deletion otherwise
        } else {
            out.push(c);
        }
        i += 1;
    }
    if out.trim().is_empty() {
        text.to_string()
    } else {
        out
    }
}

/// Applies one style's noise to an LLT text.
pub fn render_noisy(text: &str, style: &NoiseStyle, rng: &mut DetRng) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if rng.chance(style.paraphrase_rate) {
        let candidates: Vec<(usize, &str)> = words
            .iter()
            .enumerate()
            .filter_map(|(i, w)| SYNONYMS.iter().find(|(a, _)| a == w).map(|(_, b)| (i, *b)))
            .collect();
        if !candidates.is_empty() {
            let (i, syn) = candidates[rng.below(candidates.len())];
            words[i] = syn.to_string();
        }
    }
    if rng.chance(style.paraphrase_rate) {
        let filler = *rng.pick(FILLERS);
        let at = rng.below(words.len() + 1);
        words.insert(at, filler.to_string());
    }
    apply_typos(&words.join(" "), style.typo_rate, rng)
}

fn build_dataset(onto: &Ontology, config: &SynthConfig, index: usize) -> Dataset {
    let style = &config.noise_styles[index];
    let mut rng = DetRng::new(derive(config.seed, 100 + index as u64));
    let pts = onto.pt_ids();
    let rank_to_pt = {
        let mut v: Vec<&String> = pts.iter().collect();
        rng.shuffle(&mut v);
        v
    };
    let cdf = zipf_cdf(pts.len(), config.zipf_exponent);
    let name = dataset_name(index);
    let samples = (0..config.n_samples)
        .map(|i| {
            let pt = rank_to_pt[zipf_draw(&cdf, &mut rng)];
            let children = onto.children(pt);
            let llt = onto.llt(&children[rng.below(children.len())]).unwrap();
            Sample {
                sample_id: format!("{name}-{:06}", i + 1),
                text: render_noisy(&llt.llt_text, style, &mut rng),
                label_pt_id: pt.clone(),
                group_key: None,
                source_llt_id: Some(llt.llt_id.clone()),
            }
        })
        .collect();
    Dataset::new_unchecked(name, samples)
}

/// Deterministic given `config`; one dataset per noise style.
pub fn gen_synthetic(config: &SynthConfig) -> Result<(Ontology, Vec<Dataset>)> {
    config.validate()?;
    let mut rng = DetRng::new(derive(config.seed, 99));
    let onto = build_ontology(config, &mut rng)?;
    let datasets = (0..config.noise_styles.len())
        .map(|i| build_dataset(&onto, config, i))
        .collect();
    Ok((onto, datasets))
}
