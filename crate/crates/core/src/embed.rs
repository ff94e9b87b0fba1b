//! Hashed character n-gram embeddings and cosine scoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::fnv1a64;

pub const DEFAULT_MODEL_ID: &str = "hash3-fnv1a-256-v1";
pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub model_id: String,
    pub dim: usize,
    pub ngram: usize,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL_ID.to_string(),
            dim: DEFAULT_DIM,
            ngram: DEFAULT_NGRAM,
        }
    }
}

impl EmbedderSpec {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < 16 {
            return Err(EmbedError::InvalidSpec(format!("dim {} < 16", self.dim)));
        }
        if self.ngram == 0 {
            return Err(EmbedError::InvalidSpec("ngram must be >= 1".into()));
        }
        if self.model_id.is_empty() {
            return Err(EmbedError::InvalidSpec("empty model_id".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub model_id: String,
    pub dim: usize,
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn zero(model_id: &str, dim: usize) -> Self {
        Self {
            model_id: model_id.to_string(),
            dim,
            values: vec![0.0; dim],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("invalid embedder spec: {0}")]
    InvalidSpec(String),
    #[error("cannot compare {left} (dim {left_dim}) with {right} (dim {right_dim})")]
    Mismatch {
        left: String,
        left_dim: usize,
        right: String,
        right_dim: usize,
    },
}

/// Anything that maps text to vectors tagged with a model id. Sources and the
/// resolver each own one; vectors from different models never get compared.
pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;
    fn embed(&self, text: &str) -> EmbeddingVector;
}

#[derive(Debug, Clone, Default)]
pub struct HashEmbedder {
    spec: EmbedderSpec,
}

impl HashEmbedder {
    pub fn new(spec: EmbedderSpec) -> Result<Self, EmbedError> {
        spec.validate()?;
        Ok(Self { spec })
    }
}

impl Embedder for HashEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, text: &str) -> EmbeddingVector {
        embed(text, &self.spec)
    }
}

/// Lowercase, collapse whitespace runs to one space, trim.
pub fn normalize_for_embedding(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn embed(text: &str, spec: &EmbedderSpec) -> EmbeddingVector {
    let normalized = normalize_for_embedding(text);
    let chars: Vec<char> = normalized.chars().collect();
    let mut vector = EmbeddingVector::zero(&spec.model_id, spec.dim);
    if spec.ngram == 0 || chars.len() < spec.ngram {
        return vector;
    }

    let mut counts = vec![0u32; spec.dim];
    let mut buf = String::with_capacity(spec.ngram * 4);
    for gram in chars.windows(spec.ngram) {
        buf.clear();
        buf.extend(gram.iter());
        let bucket = (fnv1a64(buf.as_bytes()) % spec.dim as u64) as usize;
        counts[bucket] += 1;
    }

    let weights: Vec<f64> = counts.iter().map(|&c| (1.0 + f64::from(c)).ln()).collect();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (v, w) in vector.values.iter_mut().zip(&weights) {
            *v = (w / norm) as f32;
        }
    }
    vector
}

/// Dot product accumulated in f64, in index order.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}

pub fn check_compatible(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), EmbedError> {
    if a.model_id != b.model_id || a.dim != b.dim || a.values.len() != b.values.len() {
        return Err(EmbedError::Mismatch {
            left: a.model_id.clone(),
            left_dim: a.dim,
            right: b.model_id.clone(),
            right_dim: b.dim,
        });
    }
    Ok(())
}

/// Cosine of two unit (or zero) vectors from the same model.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    check_compatible(a, b)?;
    if a.is_zero() || b.is_zero() {
        return Ok(0.0);
    }
    Ok(dot(&a.values, &b.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(values: &[f32], dim: usize) -> EmbeddingVector {
        let norm = values.iter().map(|v| v * v).sum::<f32>().sqrt();
        let mut v = EmbeddingVector::zero(DEFAULT_MODEL_ID, dim);
        for (i, x) in values.iter().enumerate() {
            v.values[i] = x / norm;
        }
        v
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_for_embedding("Hello  World "), "hello world");
        assert_eq!(normalize_for_embedding(""), "");
        assert_eq!(normalize_for_embedding("A\n\tB"), "a b");
    }

    #[test]
    fn short_text_is_zero() {
        let v = embed("ab", &EmbedderSpec::default());
        assert!(v.is_zero());
        assert_eq!(v.values.len(), DEFAULT_DIM);
        assert!(embed("", &EmbedderSpec::default()).is_zero());
    }

    #[test]
    fn cosine_examples() {
        let a = unit(&[3.0, 4.0], 16);
        let b = unit(&[4.0, 3.0], 16);
        assert!((cosine(&a, &b).unwrap() - 0.96).abs() < 1e-6);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        let z = EmbeddingVector::zero(DEFAULT_MODEL_ID, 16);
        assert_eq!(cosine(&z, &a).unwrap(), 0.0);
    }

    #[test]
    fn model_mismatch_names_both() {
        let a = EmbeddingVector::zero("m1", 16);
        let b = EmbeddingVector::zero("m2", 16);
        let err = cosine(&a, &b).unwrap_err().to_string();
        assert!(err.contains("m1") && err.contains("m2"), "{err}");
        let c = EmbeddingVector::zero("m1", 32);
        assert!(cosine(&a, &c).is_err());
    }

    #[test]
    fn spec_validation() {
        let spec = EmbedderSpec { dim: 8, ..EmbedderSpec::default() };
        assert!(HashEmbedder::new(spec).is_err());
        let spec = EmbedderSpec { ngram: 0, ..EmbedderSpec::default() };
        assert!(spec.validate().is_err());
    }

    proptest! {
        #[test]
        fn unit_norm_or_zero(text in "\\PC{0,200}") {
            let v = embed(&text, &EmbedderSpec::default());
            prop_assert!(v.is_zero() || (v.norm() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn whitespace_and_case_insensitive(text in "[a-zA-Z \\t\\n]{0,80}") {
            let spec = EmbedderSpec::default();
            let a = embed(&text, &spec);
            let b = embed(&normalize_for_embedding(&text), &spec);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn cosine_symmetric_and_bounded(x in "\\PC{0,120}", y in "\\PC{0,120}") {
            let spec = EmbedderSpec::default();
            let (a, b) = (embed(&x, &spec), embed(&y, &spec));
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine(&b, &a).unwrap());
            prop_assert!(ab.abs() <= 1.0 + 1e-6);
        }
    }
}
