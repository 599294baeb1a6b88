//! Softmax classifier over the full PT inventory.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::models::SparseRows;
use crate::rng::DetRng;
use crate::text::{FeatureVector, FeaturizerConfig};

pub const INIT_RANGE: f64 = 0.01;

/// `logits = Wᵀx + b` with `W` stored row-per-feature (`dim × |PT|`).
///
/// Inputs are L2-normalized hashed n-gram counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    featurizer: FeaturizerConfig,
    pt_order: Vec<String>,
    pt_index: HashMap<String, usize>,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrad {
    pub weights: SparseRows,
    pub bias: Vec<f64>,
}

impl ClassifierGrad {
    pub fn zeros(n_classes: usize) -> Self {
        ClassifierGrad {
            weights: SparseRows::new(n_classes),
            bias: vec![0.0; n_classes],
        }
    }

    pub fn merge_scaled(&mut self, other: &ClassifierGrad, scale: f64) {
        self.weights.merge_scaled(&other.weights, scale);
        for (b, o) in self.bias.iter_mut().zip(&other.bias) {
            *b += scale * o;
        }
    }
}

fn index_of(pt_order: &[String]) -> Result<HashMap<String, usize>> {
    let mut m = HashMap::with_capacity(pt_order.len());
    for (i, pt) in pt_order.iter().enumerate() {
        if m.insert(pt.clone(), i).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate pt_id {pt:?} in pt_order")));
        }
    }
    Ok(m)
}

impl ClassifierModel {
    /// Seeded uniform(-0.01, 0.01) weights, zero bias.
    pub fn new(featurizer: FeaturizerConfig, pt_order: Vec<String>, seed: u64) -> Result<Self> {
        featurizer.validate()?;
        if pt_order.is_empty() {
            return Err(Error::InvalidArgument("classifier needs at least one PT".into()));
        }
        let mut rng = DetRng::new(seed);
        let n = featurizer.dim * pt_order.len();
        let weights = (0..n).map(|_| rng.uniform(-INIT_RANGE, INIT_RANGE)).collect();
        let bias = vec![0.0; pt_order.len()];
        Self::from_parameters(featurizer, pt_order, weights, bias)
    }

    pub fn from_parameters(
        featurizer: FeaturizerConfig,
        pt_order: Vec<String>,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        featurizer.validate()?;
        let c = pt_order.len();
        if weights.len() != featurizer.dim * c {
            return Err(Error::DimensionMismatch {
                expected: featurizer.dim * c,
                got: weights.len(),
            });
        }
        if bias.len() != c {
            return Err(Error::DimensionMismatch { expected: c, got: bias.len() });
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite classifier parameter".into()));
        }
        Ok(ClassifierModel {
            featurizer,
            pt_index: index_of(&pt_order)?,
            pt_order,
            weights,
            bias,
        })
    }

    pub fn featurizer(&self) -> FeaturizerConfig {
        self.featurizer
    }

    pub fn pt_order(&self) -> &[String] {
        &self.pt_order
    }

    pub fn n_classes(&self) -> usize {
        self.pt_order.len()
    }

    pub fn class_index(&self, pt_id: &str) -> Option<usize> {
        self.pt_index.get(pt_id).copied()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn input(&self, text: &str) -> FeatureVector {
        self.featurizer.featurize(text).l2_normalized()
    }

    pub fn forward(&self, fv: &FeatureVector) -> Result<Vec<f64>> {
        if fv.dim != self.featurizer.dim {
            return Err(Error::DimensionMismatch {
                expected: self.featurizer.dim,
                got: fv.dim,
            });
        }
        let c = self.n_classes();
        let mut logits = self.bias.clone();
        for &(i, x) in &fv.entries {
            let row = &self.weights[i as usize * c..(i as usize + 1) * c];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += x * w;
            }
        }
        Ok(logits)
    }

    /// Cross-entropy `-log softmax(logits)[label]` and its exact gradient.
    pub fn loss_grad(&self, fv: &FeatureVector, label: usize) -> Result<(f64, ClassifierGrad)> {
        let c = self.n_classes();
        if label >= c {
            return Err(Error::InvalidArgument(format!("label index {label} >= {c} classes")));
        }
        let logits = self.forward(fv)?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let loss = max + sum.ln() - logits[label];

        let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        delta[label] -= 1.0;
        let mut grad = ClassifierGrad {
            weights: SparseRows::new(c),
            bias: delta.clone(),
        };
        for &(i, x) in &fv.entries {
            grad.weights.add_row(i, x, &delta);
        }
        Ok((loss, grad))
    }

    /// `θ -= lr · grad`
    pub fn apply(&mut self, grad: &ClassifierGrad, lr: f64) {
        let c = self.n_classes();
        for (&i, row) in &grad.weights.rows {
            let w = &mut self.weights[i as usize * c..(i as usize + 1) * c];
            for (w, g) in w.iter_mut().zip(row) {
                *w -= lr * g;
            }
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }

    /// Argmax class; ties go to the lowest index (smallest pt_id in sorted order).
    pub fn predict_index(&self, text: &str) -> Result<usize> {
        let logits = self.forward(&self.input(text))?;
        let mut best = 0;
        for (k, l) in logits.iter().enumerate() {
            if *l > logits[best] {
                best = k;
            }
        }
        Ok(best)
    }

    pub fn predict(&self, text: &str) -> Result<&str> {
        Ok(&self.pt_order[self.predict_index(text)?])
    }
}
