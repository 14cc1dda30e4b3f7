//! Hashed bag-of-n-gram features.

use std::collections::BTreeMap;

use crate::error::{invalid, Result};
use crate::rng::fnv1a;
use crate::suite::Input;

pub const DEFAULT_DIM: usize = 4096;

/// Sparse non-negative vector with sorted, unique indices.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// Builds a vector from `(index, value)` entries; duplicate indices are
    /// summed.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in entries {
            if i as usize >= dim {
                return Err(invalid(format!("feature index {i} out of range for dimension {dim}")));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("feature value {v} must be finite and non-negative")));
            }
            *map.entry(i).or_insert(0.0) += v;
        }
        Ok(FeatureVector { dim, entries: map.into_iter().filter(|&(_, v)| v != 0.0).collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: u32) -> f64 {
        self.entries
            .binary_search_by_key(&i, |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            d[i as usize] = v;
        }
        d
    }

    fn l2_normalized(mut self) -> Self {
        let norm = self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut self.entries {
                e.1 /= norm;
            }
        }
        self
    }
}

/// Maps texts to hashed unigram + bigram counts over lowercased whitespace
/// tokens, L2-normalised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Featurizer {
    pub dim: usize,
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer { dim: DEFAULT_DIM }
    }
}

impl Featurizer {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize / 3 {
            return Err(invalid(format!("unsupported feature dimension {dim}")));
        }
        Ok(Featurizer { dim })
    }

    fn bucket(&self, gram: &str) -> u32 {
        (fnv1a(gram.as_bytes()) % self.dim as u64) as u32
    }

    pub fn text(&self, text: &str) -> FeatureVector {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        let mut grams = Vec::with_capacity(tokens.len() * 2);
        for t in &tokens {
            grams.push((self.bucket(&format!("1 {t}")), 1.0));
        }
        for w in tokens.windows(2) {
            grams.push((self.bucket(&format!("2 {} {}", w[0], w[1])), 1.0));
        }
        FeatureVector::new(self.dim, grams).expect("bucket below dim").l2_normalized()
    }

    /// `concat(a, b, |a - b|)` in a space of dimension `3 * dim`.
    pub fn pair(&self, a: &str, b: &str) -> FeatureVector {
        let fa = self.text(a);
        let fb = self.text(b);
        let d = self.dim as u32;
        let mut entries: Vec<(u32, f64)> = fa.entries.clone();
        entries.extend(fb.entries.iter().map(|&(i, v)| (i + d, v)));
        let mut diff: BTreeMap<u32, f64> = BTreeMap::new();
        for &(i, v) in &fa.entries {
            *diff.entry(i).or_insert(0.0) += v;
        }
        for &(i, v) in &fb.entries {
            *diff.entry(i).or_insert(0.0) -= v;
        }
        entries.extend(diff.into_iter().map(|(i, v)| (i + 2 * d, v.abs())));
        FeatureVector::new(3 * self.dim, entries).expect("indices below 3 * dim")
    }

    pub fn input(&self, input: &Input) -> FeatureVector {
        match input {
            Input::Text(t) => self.text(t),
            Input::Pair(a, b) => self.pair(a, b),
        }
    }

    /// Model input dimension for single texts or pairs.
    pub fn input_dim(&self, pairs: bool) -> usize {
        if pairs {
            3 * self.dim
        } else {
            self.dim
        }
    }
}
