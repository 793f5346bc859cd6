//! Deterministic concept embeddings standing in for a vision-language encoder.
//!
//! Every token maps to a seeded pseudo-random unit vector, so distinct concepts
//! are nearly orthogonal and synonyms share a vector.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::real::{lit, Real};

pub const DEFAULT_DIM: usize = 64;

pub const DEFAULT_CANONICALS: [&str; 4] = ["object", "things", "stuff", "texture"];

/// Unit-norm semantic vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConceptEmbedding<T> {
    pub vector: Vec<T>,
}

impl<T: Real> ConceptEmbedding<T> {
    /// Normalizes `v`; returns `None` for a zero vector.
    pub fn from_raw(v: Vec<T>) -> Option<Self> {
        let n = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
        if !(n > T::zero()) {
            return None;
        }
        Some(Self {
            vector: v.into_iter().map(|x| x / n).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> T {
        self.vector.iter().map(|x| *x * *x).sum::<T>().sqrt()
    }

    pub fn dot(&self, other: &[T]) -> T {
        dot(&self.vector, other)
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Euclidean distance between two feature vectors.
pub fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt()
}

/// Similarity of two unit embeddings.
pub fn cosine<T: Real>(a: &ConceptEmbedding<T>, b: &ConceptEmbedding<T>) -> T {
    dot(&a.vector, &b.vector)
}

/// Seeded token-to-vector table with a synonym map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub seed: u64,
    pub dim: usize,
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new(7, DEFAULT_DIM)
    }
}

impl Vocabulary {
    /// Vocabulary with the built-in synonym table.
    pub fn new(seed: u64, dim: usize) -> Self {
        let synonyms = [
            ("cup", "mug"),
            ("sofa", "couch"),
            ("notebook", "book"),
            ("carton", "box"),
            ("tv", "television"),
            ("flowerpot", "pot"),
            ("bin", "basket"),
            ("rug", "carpet"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        Self {
            seed,
            dim,
            synonyms,
        }
    }

    /// Lowercased canonical form of a token.
    pub fn resolve(&self, token: &str) -> String {
        let t = token.trim().to_lowercase();
        match self.synonyms.get(&t) {
            Some(c) => c.clone(),
            None => t,
        }
    }

    fn rng(&self, key: &str) -> ChaCha8Rng {
        let digest: [u8; 32] = Sha256::digest(format!("{}:{}", self.seed, key).as_bytes()).into();
        ChaCha8Rng::from_seed(digest)
    }

    fn gaussian_unit<T: Real>(&self, key: &str) -> ConceptEmbedding<T> {
        let mut rng = self.rng(key);
        loop {
            let v: Vec<T> = (0..self.dim)
                .map(|_| lit::<T>(StandardNormal.sample(&mut rng)))
                .collect();
            if let Some(e) = ConceptEmbedding::from_raw(v) {
                return e;
            }
        }
    }

    /// Embedding of a concept token after synonym resolution.
    pub fn embed_concept<T: Real>(&self, token: &str) -> ConceptEmbedding<T> {
        let canonical = self.resolve(token);
        self.gaussian_unit(&format!("concept:{canonical}"))
    }

    /// Per-view image-side feature for an object of `category`: the concept
    /// vector plus a seeded perturbation of norm `noise`, renormalized.
    pub fn mask_embedding<T: Real>(
        &self,
        category: &str,
        view_id: u32,
        noise: T,
    ) -> ConceptEmbedding<T> {
        let base = self.embed_concept::<T>(category);
        if noise == T::zero() {
            return base;
        }
        let canonical = self.resolve(category);
        let u = self.gaussian_unit::<T>(&format!("view:{canonical}:{view_id}"));
        let v = base
            .vector
            .iter()
            .zip(&u.vector)
            .map(|(b, p)| *b + noise * *p)
            .collect();
        ConceptEmbedding::from_raw(v).unwrap_or(base)
    }
}

/// Query embedding plus the canonical distractor phrases.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryContext<T> {
    pub query: ConceptEmbedding<T>,
    pub canonicals: Vec<ConceptEmbedding<T>>,
}

impl<T: Real> QueryContext<T> {
    /// # Panics
    /// If `canonicals` is empty.
    pub fn new(query: ConceptEmbedding<T>, canonicals: Vec<ConceptEmbedding<T>>) -> Self {
        assert!(!canonicals.is_empty(), "at least one canonical phrase");
        Self { query, canonicals }
    }

    pub fn for_token<S: AsRef<str>>(vocab: &Vocabulary, token: &str, canonicals: &[S]) -> Self {
        Self::new(
            vocab.embed_concept(token),
            canonicals
                .iter()
                .map(|c| vocab.embed_concept(c.as_ref()))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit() {
        let v = Vocabulary::default();
        let a: ConceptEmbedding<f64> = v.embed_concept("book");
        let b: ConceptEmbedding<f64> = v.embed_concept("book");
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.dim(), DEFAULT_DIM);
        let c: ConceptEmbedding<f64> = Vocabulary::new(8, 64).embed_concept("book");
        assert_ne!(a, c);
    }

    #[test]
    fn synonyms_share_vectors() {
        let v = Vocabulary::default();
        let a: ConceptEmbedding<f64> = v.embed_concept("cup");
        let b: ConceptEmbedding<f64> = v.embed_concept("Mug");
        assert_eq!(a, b);
    }

    #[test]
    fn unrelated_tokens_nearly_orthogonal() {
        let v = Vocabulary::default();
        let mut total = 0.0;
        for i in 0..1000 {
            let a: ConceptEmbedding<f64> = v.embed_concept(&format!("tok{i}a"));
            let b: ConceptEmbedding<f64> = v.embed_concept(&format!("tok{i}b"));
            total += cosine(&a, &b).abs();
        }
        assert!(total / 1000.0 < 0.15);
    }

    #[test]
    fn cosine_extremes() {
        let a = ConceptEmbedding::from_raw(vec![1.0f64, 0.0]).unwrap();
        let b = ConceptEmbedding::from_raw(vec![-1.0f64, 0.0]).unwrap();
        let c = ConceptEmbedding::from_raw(vec![0.0f64, 2.0]).unwrap();
        assert_eq!(cosine(&a, &a), 1.0);
        assert_eq!(cosine(&a, &b), -1.0);
        assert_eq!(cosine(&a, &c), 0.0);
        assert!(ConceptEmbedding::<f64>::from_raw(vec![0.0, 0.0]).is_none());
    }

    #[test]
    fn mask_embedding_perturbation() {
        let v = Vocabulary::default();
        let base: ConceptEmbedding<f64> = v.embed_concept("chair");
        assert_eq!(v.mask_embedding("chair", 3, 0.0), base);
        for noise in [0.01f64, 0.05, 0.1, 0.3, 0.5] {
            for view in 0..20 {
                let m = v.mask_embedding("chair", view, noise);
                assert!((m.norm() - 1.0).abs() < 1e-9);
                assert!(cosine(&m, &base) >= 1.0 - noise * noise);
            }
        }
        assert_ne!(
            v.mask_embedding::<f64>("chair", 0, 0.1),
            v.mask_embedding::<f64>("chair", 1, 0.1)
        );
    }

    #[test]
    fn f32_embeddings_are_unit() {
        let e: ConceptEmbedding<f32> = Vocabulary::default().embed_concept("lamp");
        assert!((e.norm() - 1.0).abs() < 1e-6);
    }
}
