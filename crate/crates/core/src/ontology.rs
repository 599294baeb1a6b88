//! Two-level concept hierarchy (PT with LLT children, optional HLT above PT)
//! and the ontology-pretraining corpus derived from it.
//!
//! File format: UTF-8 TSV, one row per LLT, tab-separated header columns
//! `llt_id llt_text pt_id pt_text hlt_id hlt_text`. PT and HLT columns are
//! repeated on every row and must agree across rows. A row may leave
//! `pt_text` (and the HLT columns) empty to reference a PT defined on another
//! row; a reference that no row defines is a dangling parent. Lines starting
//! with `#` before the header are metadata; `# version_tag: <tag>` sets the
//! ontology version.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};

pub const HEADER: &str = "llt_id\tllt_text\tpt_id\tpt_text\thlt_id\thlt_text";
const VERSION_PREFIX: &str = "# version_tag:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub pt_id: String,
    pub pt_text: String,
    pub hlt_id: Option<String>,
    pub hlt_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LltEntry {
    pub llt_id: String,
    pub llt_text: String,
    pub parent_pt_id: String,
}

/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    concepts: BTreeMap<String, Concept>,
    llts: BTreeMap<String, LltEntry>,
    children: BTreeMap<String, Vec<String>>,
    version_tag: String,
}

fn check_field(what: &str, value: &str) -> std::result::Result<(), String> {
    if value.contains(['\t', '\n', '\r']) {
        return Err(format!("{what} contains a tab or newline: {value:?}"));
    }
    Ok(())
}

impl Ontology {
    pub fn empty(version_tag: impl Into<String>) -> Self {
        Ontology {
            concepts: BTreeMap::new(),
            llts: BTreeMap::new(),
            children: BTreeMap::new(),
            version_tag: version_tag.into(),
        }
    }

    /// Builds and validates an ontology from in-memory parts.
    ///
    /// Every concept must have at least one LLT so that the TSV form can
    /// represent it.
    pub fn from_parts(
        concepts: Vec<Concept>,
        llts: Vec<LltEntry>,
        version_tag: impl Into<String>,
    ) -> Result<Self> {
        let mut onto = Ontology::empty(version_tag);
        for c in concepts {
            let bad = |m: String| Error::InvalidArgument(format!("concept {:?}: {m}", c.pt_id));
            if c.pt_id.is_empty() {
                return Err(bad("empty pt_id".into()));
            }
            if c.pt_text.is_empty() {
                return Err(bad("empty pt_text".into()));
            }
            if c.hlt_id.is_some() != c.hlt_text.is_some() {
                return Err(bad("hlt_id and hlt_text must be both present or both absent".into()));
            }
            for (what, v) in [
                ("pt_id", Some(&c.pt_id)),
                ("pt_text", Some(&c.pt_text)),
                ("hlt_id", c.hlt_id.as_ref()),
                ("hlt_text", c.hlt_text.as_ref()),
            ] {
                if let Some(v) = v {
                    check_field(what, v).map_err(bad)?;
                    if v.is_empty() {
                        return Err(bad(format!("empty {what}")));
                    }
                }
            }
            if onto.concepts.contains_key(&c.pt_id) {
                return Err(bad("duplicate pt_id".into()));
            }
            onto.concepts.insert(c.pt_id.clone(), c);
        }
        for l in llts {
            let bad = |m: String| Error::InvalidArgument(format!("llt {:?}: {m}", l.llt_id));
            if l.llt_id.is_empty() {
                return Err(bad("empty llt_id".into()));
            }
            if l.llt_text.is_empty() {
                return Err(bad("empty llt_text".into()));
            }
            check_field("llt_id", &l.llt_id).map_err(bad)?;
            check_field("llt_text", &l.llt_text).map_err(bad)?;
            if !onto.concepts.contains_key(&l.parent_pt_id) {
                return Err(bad(format!("dangling parent_pt_id {:?}", l.parent_pt_id)));
            }
            if onto.llts.contains_key(&l.llt_id) {
                return Err(bad("duplicate llt_id".into()));
            }
            onto.llts.insert(l.llt_id.clone(), l);
        }
        onto.check_hlt_consistency()
            .map_err(Error::InvalidArgument)?;
        onto.index_children();
        if let Some(pt) = onto.concepts.keys().find(|pt| !onto.children.contains_key(*pt)) {
            return Err(Error::InvalidArgument(format!("concept {pt:?} has no LLT")));
        }
        Ok(onto)
    }

    fn check_hlt_consistency(&self) -> std::result::Result<(), String> {
        let mut hlt_texts: BTreeMap<&str, &str> = BTreeMap::new();
        for c in self.concepts.values() {
            if let (Some(id), Some(text)) = (&c.hlt_id, &c.hlt_text) {
                if let Some(prev) = hlt_texts.insert(id, text) {
                    if prev != text {
                        return Err(format!(
                            "hlt {id:?} has inconsistent texts {prev:?} and {text:?}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn index_children(&mut self) {
        self.children.clear();
        // llts iterate in llt_id order, so child lists come out sorted
        for l in self.llts.values() {
            self.children
                .entry(l.parent_pt_id.clone())
                .or_default()
                .push(l.llt_id.clone());
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the TSV form; `origin` is used only in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut version_tag = String::new();
        let mut header_seen = false;

        struct PtDef {
            concept: Concept,
            line: usize,
        }
        let mut defs: BTreeMap<String, PtDef> = BTreeMap::new();
        let mut refs: Vec<(String, usize)> = Vec::new();
        let mut llts: BTreeMap<String, (LltEntry, usize)> = BTreeMap::new();
        let mut hlts: BTreeMap<String, (String, usize)> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if !header_seen {
                if line.trim().is_empty() {
                    continue;
                }
                if let Some(rest) = line.strip_prefix(VERSION_PREFIX) {
                    version_tag = rest.trim().to_string();
                    continue;
                }
                if line.starts_with('#') {
                    continue;
                }
                if line != HEADER {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("expected header {HEADER:?}, found {line:?}"),
                    ));
                }
                header_seen = true;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected 6 tab-separated columns, found {}", cols.len()),
                ));
            }
            let [llt_id, llt_text, pt_id, pt_text, hlt_id, hlt_text] =
                [cols[0], cols[1], cols[2], cols[3], cols[4], cols[5]];
            let err = |m: String| Error::parse(origin, lineno, m);
            if llt_id.is_empty() || llt_text.is_empty() || pt_id.is_empty() {
                return Err(err("llt_id, llt_text and pt_id must be nonempty".into()));
            }
            if hlt_id.is_empty() != hlt_text.is_empty() {
                return Err(err("hlt_id and hlt_text must be both present or both empty".into()));
            }
            if let Some((_, prev)) = llts.get(llt_id) {
                return Err(err(format!("duplicate llt_id {llt_id:?} (first seen on line {prev})")));
            }
            llts.insert(
                llt_id.to_string(),
                (
                    LltEntry {
                        llt_id: llt_id.to_string(),
                        llt_text: llt_text.to_string(),
                        parent_pt_id: pt_id.to_string(),
                    },
                    lineno,
                ),
            );

            if pt_text.is_empty() {
                if !hlt_id.is_empty() {
                    return Err(err("hlt columns given for a PT reference without pt_text".into()));
                }
                refs.push((pt_id.to_string(), lineno));
                continue;
            }
            let concept = Concept {
                pt_id: pt_id.to_string(),
                pt_text: pt_text.to_string(),
                hlt_id: (!hlt_id.is_empty()).then(|| hlt_id.to_string()),
                hlt_text: (!hlt_text.is_empty()).then(|| hlt_text.to_string()),
            };
            if let Some(h) = &concept.hlt_id {
                let text = concept.hlt_text.clone().unwrap_or_default();
                match hlts.get(h) {
                    Some((prev, at)) if *prev != text => {
                        return Err(err(format!(
                            "hlt {h:?} text {text:?} disagrees with {prev:?} on line {at}"
                        )));
                    }
                    Some(_) => {}
                    None => {
                        hlts.insert(h.clone(), (text, lineno));
                    }
                }
            }
            match defs.get(pt_id) {
                Some(prev) if prev.concept != concept => {
                    return Err(err(format!(
                        "inconsistent data for pt_id {pt_id:?} (differs from line {})",
                        prev.line
                    )));
                }
                Some(_) => {}
                None => {
                    defs.insert(pt_id.to_string(), PtDef { concept, line: lineno });
                }
            }
        }

        if let Some((pt, line)) = refs.iter().find(|(pt, _)| !defs.contains_key(pt)) {
            return Err(Error::parse(
                origin,
                *line,
                format!("dangling parent_pt_id {pt:?}: no row defines this PT"),
            ));
        }

        let mut onto = Ontology::empty(version_tag);
        onto.concepts = defs.into_iter().map(|(k, d)| (k, d.concept)).collect();
        onto.llts = llts.into_iter().map(|(k, (l, _))| (k, l)).collect();
        onto.index_children();
        Ok(onto)
    }

    /// Canonical TSV form, rows sorted by llt_id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if !self.version_tag.is_empty() {
            let _ = writeln!(out, "{VERSION_PREFIX} {}", self.version_tag);
        }
        out.push_str(HEADER);
        out.push('\n');
        for l in self.llts.values() {
            let c = &self.concepts[&l.parent_pt_id];
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                l.llt_id,
                l.llt_text,
                c.pt_id,
                c.pt_text,
                c.hlt_id.as_deref().unwrap_or(""),
                c.hlt_text.as_deref().unwrap_or("")
            );
        }
        out
    }

    pub fn version_tag(&self) -> &str {
        &self.version_tag
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn llt_count(&self) -> usize {
        self.llts.len()
    }

    pub fn concept(&self, pt_id: &str) -> Option<&Concept> {
        self.concepts.get(pt_id)
    }

    pub fn llt(&self, llt_id: &str) -> Option<&LltEntry> {
        self.llts.get(llt_id)
    }

    pub fn has_pt(&self, pt_id: &str) -> bool {
        self.concepts.contains_key(pt_id)
    }

    /// Concepts in pt_id order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    /// LLT entries in llt_id order.
    pub fn llts(&self) -> impl Iterator<Item = &LltEntry> {
        self.llts.values()
    }

    /// Sorted pt_ids; this is the column order of every model.
    pub fn pt_ids(&self) -> Vec<String> {
        self.concepts.keys().cloned().collect()
    }

    /// LLT ids under `pt_id`, sorted. Empty for unknown PTs.
    pub fn children(&self, pt_id: &str) -> &[String] {
        self.children.get(pt_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn parent_of(&self, llt_id: &str) -> Result<&str> {
        self.llts
            .get(llt_id)
            .map(|l| l.parent_pt_id.as_str())
            .ok_or_else(|| Error::UnknownId(format!("llt {llt_id:?}")))
    }

    pub fn hlt_of(&self, pt_id: &str) -> Option<&str> {
        self.concepts.get(pt_id).and_then(|c| c.hlt_id.as_deref())
    }

    pub fn hlt_ids(&self) -> BTreeSet<&str> {
        self.concepts.values().filter_map(|c| c.hlt_id.as_deref()).collect()
    }
}

/// One `(llt_text -> parent PT)` sample per LLT, in llt_id order.
///
/// Sample ids are the llt_ids; LLTs whose text equals their PT's text are kept.
pub fn build_op_corpus(ontology: &Ontology) -> Dataset {
    let samples = ontology
        .llts()
        .map(|l| Sample {
            sample_id: l.llt_id.clone(),
            text: l.llt_text.clone(),
            label_pt_id: l.parent_pt_id.clone(),
            group_key: None,
            source_llt_id: Some(l.llt_id.clone()),
        })
        .collect();
    Dataset::new_unchecked("op_corpus", samples)
}
