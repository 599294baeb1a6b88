//! Text normalization and hashed character n-gram features.
//!
//! Featurization pads the normalized string as `^text$`, enumerates every
//! character n-gram for `n` in the configured range, and hashes each n-gram's
//! UTF-8 bytes with 64-bit FNV-1a:
//!
//! ```text
//! h = 0xcbf29ce484222325
//! for byte in ngram: h = (h ^ byte) * 0x00000100000001b3   (wrapping)
//! index = h & (dim - 1)
//! ```
//!
//! Entries hold raw counts; colliding n-grams add up.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub const PAD_START: char = '^';
pub const PAD_END: char = '$';

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// NFKC, lowercase, collapse whitespace runs to one space, trim.
pub fn normalize_text(s: &str) -> String {
    let folded: String = s.nfkc().collect::<String>().to_lowercase();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub ngram_lo: usize,
    pub ngram_hi: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim: 1 << 16,
            ngram_lo: 2,
            ngram_hi: 4,
        }
    }
}

impl FeaturizerConfig {
    pub fn new(dim: usize, ngram_lo: usize, ngram_hi: usize) -> Result<Self> {
        let cfg = FeaturizerConfig {
            dim,
            ngram_lo,
            ngram_hi,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.dim.is_power_of_two() || self.dim > u32::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "feature dim must be a power of two (got {})",
                self.dim
            )));
        }
        if self.ngram_lo == 0 || self.ngram_lo > self.ngram_hi {
            return Err(Error::InvalidArgument(format!(
                "invalid n-gram range [{}, {}]",
                self.ngram_lo, self.ngram_hi
            )));
        }
        Ok(())
    }

    pub fn featurize(&self, s: &str) -> FeatureVector {
        // validated at construction; unchecked here for the hot path
        featurize_unchecked(s, *self)
    }
}

/// Sparse vector with indices sorted ascending and no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Unit-L2 copy; the zero vector stays zero.
    pub fn l2_normalized(&self) -> FeatureVector {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        FeatureVector {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, w)| (i, w / n)).collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, w) in &self.entries {
            v[i as usize] += w;
        }
        v
    }
}

pub fn featurize(s: &str, dim: usize, ngram_range: [usize; 2]) -> Result<FeatureVector> {
    let cfg = FeaturizerConfig::new(dim, ngram_range[0], ngram_range[1])?;
    Ok(featurize_unchecked(s, cfg))
}

fn featurize_unchecked(s: &str, cfg: FeaturizerConfig) -> FeatureVector {
    let norm = normalize_text(s);
    if norm.is_empty() {
        return FeatureVector::zeros(cfg.dim);
    }
    let mut padded = String::with_capacity(norm.len() + 2);
    padded.push(PAD_START);
    padded.push_str(&norm);
    padded.push(PAD_END);

    // byte offsets of every char boundary, including the end
    let bounds: Vec<usize> = padded
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(padded.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    let mask = (cfg.dim - 1) as u64;

    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for n in cfg.ngram_lo..=cfg.ngram_hi {
        if n > n_chars {
            break;
        }
        for start in 0..=(n_chars - n) {
            let gram = &padded.as_bytes()[bounds[start]..bounds[start + n]];
            let idx = (fnv1a64(gram) & mask) as u32;
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    }
    FeatureVector {
        dim: cfg.dim,
        entries: counts.into_iter().collect(),
    }
}
