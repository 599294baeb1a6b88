//! Dual encoder: `embed(t) = Pᵀx / ‖Pᵀx‖` over raw n-gram counts `x`, and
//! exact-scan cosine retrieval over PT names.

use crate::error::{Error, Result};
use crate::models::{dot, SparseRows};
use crate::ontology::Ontology;
use crate::rng::DetRng;
use crate::text::{FeatureVector, FeaturizerConfig};

pub const DEFAULT_EMBED_DIM: usize = 128;
pub const DEFAULT_TEMPERATURE: f64 = 0.07;
pub const INIT_RANGE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    featurizer: FeaturizerConfig,
    embed_dim: usize,
    temperature: f64,
    /// Also index LLT texts (mapped to their parent PT) at retrieval time.
    pub index_llts: bool,
    pt_order: Vec<String>,
    projection: Vec<f64>,
}

impl DualEncoder {
    /// Seeded uniform(-0.01, 0.01) projection.
    pub fn new(
        featurizer: FeaturizerConfig,
        embed_dim: usize,
        temperature: f64,
        pt_order: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        featurizer.validate()?;
        let mut rng = DetRng::new(seed);
        let projection = (0..featurizer.dim * embed_dim)
            .map(|_| rng.uniform(-INIT_RANGE, INIT_RANGE))
            .collect();
        Self::from_parameters(featurizer, embed_dim, temperature, pt_order, projection)
    }

    /// Identity projection (`embed_dim == dim`).
    pub fn identity(featurizer: FeaturizerConfig, pt_order: Vec<String>) -> Result<Self> {
        let d = featurizer.dim;
        let mut p = vec![0.0; d * d];
        for i in 0..d {
            p[i * d + i] = 1.0;
        }
        Self::from_parameters(featurizer, d, 1.0, pt_order, p)
    }

    pub fn from_parameters(
        featurizer: FeaturizerConfig,
        embed_dim: usize,
        temperature: f64,
        pt_order: Vec<String>,
        projection: Vec<f64>,
    ) -> Result<Self> {
        featurizer.validate()?;
        if embed_dim == 0 {
            return Err(Error::InvalidArgument("embedding size must be positive".into()));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
        }
        if projection.len() != featurizer.dim * embed_dim {
            return Err(Error::DimensionMismatch {
                expected: featurizer.dim * embed_dim,
                got: projection.len(),
            });
        }
        if !projection.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite projection parameter".into()));
        }
        Ok(DualEncoder {
            featurizer,
            embed_dim,
            temperature,
            index_llts: false,
            pt_order,
            projection,
        })
    }

    pub fn featurizer(&self) -> FeaturizerConfig {
        self.featurizer
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn pt_order(&self) -> &[String] {
        &self.pt_order
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn projection_mut(&mut self) -> &mut [f64] {
        &mut self.projection
    }

    fn project(&self, fv: &FeatureVector) -> Vec<f64> {
        let d = self.embed_dim;
        let mut u = vec![0.0; d];
        for &(i, x) in &fv.entries {
            let row = &self.projection[i as usize * d..(i as usize + 1) * d];
            for (u, p) in u.iter_mut().zip(row) {
                *u += x * p;
            }
        }
        u
    }

    /// Unnormalized projection, its norm, and the unit embedding. A zero
    /// projection maps to the first basis vector.
    fn encode(&self, fv: &FeatureVector) -> (Vec<f64>, f64) {
        let mut u = self.project(fv);
        let norm = dot(&u, &u).sqrt();
        if norm == 0.0 {
            u[0] = 1.0;
        } else {
            u.iter_mut().for_each(|v| *v /= norm);
        }
        (u, norm)
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        self.encode(&self.featurizer.featurize(text)).0
    }

    /// InfoNCE loss of `anchor` against one positive and `negatives`, with its
    /// exact gradient with respect to the projection:
    ///
    /// `L = -log( exp(c_p/τ) / (exp(c_p/τ) + Σ_i exp(c_i/τ)) )`, `c = cos(anchor, ·)`.
    pub fn contrastive_loss_grad(
        &self,
        anchor: &str,
        positive: &str,
        negatives: &[String],
        temperature: f64,
    ) -> Result<(f64, SparseRows)> {
        if negatives.is_empty() {
            return Err(Error::InvalidArgument("InfoNCE needs at least one negative".into()));
        }
        if temperature.is_nan() || temperature <= 0.0 {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
        }
        let d = self.embed_dim;
        let texts: Vec<&str> = std::iter::once(anchor)
            .chain(std::iter::once(positive))
            .chain(negatives.iter().map(String::as_str))
            .collect();
        let fvs: Vec<FeatureVector> = texts.iter().map(|t| self.featurizer.featurize(t)).collect();
        let enc: Vec<(Vec<f64>, f64)> = fvs.iter().map(|f| self.encode(f)).collect();

        // candidates are texts[1..]; index 0 of `z` is the positive
        let ea = &enc[0].0;
        let z: Vec<f64> = enc[1..].iter().map(|(e, _)| dot(ea, e) / temperature).collect();
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let loss = max + sum.ln() - z[0];

        // dL/dc_j
        let mut dc: Vec<f64> = exps.iter().map(|e| e / sum / temperature).collect();
        dc[0] -= 1.0 / temperature;

        // dL/de for each text
        let mut de = vec![vec![0.0; d]; texts.len()];
        for (j, g) in dc.iter().enumerate() {
            let ej = &enc[j + 1].0;
            for k in 0..d {
                de[0][k] += g * ej[k];
                de[j + 1][k] += g * ea[k];
            }
        }

        let mut grad = SparseRows::new(d);
        for (t, fv) in fvs.iter().enumerate() {
            let (e, norm) = &enc[t];
            if *norm == 0.0 {
                continue;
            }
            // through e = u/‖u‖:  dL/du = (g - (g·e) e) / ‖u‖
            let ge = dot(&de[t], e);
            let du: Vec<f64> = de[t].iter().zip(e).map(|(g, e)| (g - ge * e) / norm).collect();
            for &(i, x) in &fv.entries {
                grad.add_row(i, x, &du);
            }
        }
        Ok((loss, grad))
    }

    pub fn apply(&mut self, grad: &SparseRows, lr: f64) {
        let d = self.embed_dim;
        for (&i, row) in &grad.rows {
            let p = &mut self.projection[i as usize * d..(i as usize + 1) * d];
            for (p, g) in p.iter_mut().zip(row) {
                *p -= lr * g;
            }
        }
    }
}

/// Unit-norm embeddings of the indexed texts with the pt_id each maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct PtIndex {
    embed_dim: usize,
    row_pt: Vec<String>,
    rows: Vec<f64>,
}

impl PtIndex {
    /// Embeds every PT name (plus every LLT text when `encoder.index_llts`).
    pub fn build(encoder: &DualEncoder, ontology: &Ontology) -> Result<Self> {
        let mut entries: Vec<(&str, &str)> = ontology
            .concepts()
            .map(|c| (c.pt_id.as_str(), c.pt_text.as_str()))
            .collect();
        if encoder.index_llts {
            entries.extend(ontology.llts().map(|l| (l.parent_pt_id.as_str(), l.llt_text.as_str())));
        }
        Ok(Self::from_texts(encoder, entries))
    }

    pub fn from_texts<'a>(encoder: &DualEncoder, entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut row_pt = Vec::new();
        let mut rows = Vec::new();
        for (pt, text) in entries {
            row_pt.push(pt.to_string());
            rows.extend(encoder.embed(text));
        }
        PtIndex {
            embed_dim: encoder.embed_dim,
            row_pt,
            rows,
        }
    }

    /// Index from precomputed unit rows.
    pub fn from_rows(embed_dim: usize, row_pt: Vec<String>, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != row_pt.len() * embed_dim {
            return Err(Error::DimensionMismatch {
                expected: row_pt.len() * embed_dim,
                got: rows.len(),
            });
        }
        Ok(PtIndex { embed_dim, row_pt, rows })
    }

    pub fn len(&self) -> usize {
        self.row_pt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_pt.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.embed_dim..(i + 1) * self.embed_dim]
    }

    pub fn row_pt(&self, i: usize) -> &str {
        &self.row_pt[i]
    }

    /// Best-scoring pt for a query embedding; ties go to the smallest pt_id.
    pub fn nearest(&self, query: &[f64]) -> Result<&str> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty PT index".into()));
        }
        if query.len() != self.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: self.embed_dim,
                got: query.len(),
            });
        }
        let mut best = 0;
        let mut best_score = dot(self.row(0), query);
        for i in 1..self.len() {
            let s = dot(self.row(i), query);
            if s > best_score || (s == best_score && self.row_pt[i] < self.row_pt[best]) {
                best = i;
                best_score = s;
            }
        }
        Ok(&self.row_pt[best])
    }

    pub fn retrieve(&self, encoder: &DualEncoder, text: &str) -> Result<&str> {
        if encoder.embed_dim != self.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: self.embed_dim,
                got: encoder.embed_dim,
            });
        }
        self.nearest(&encoder.embed(text))
    }
}
