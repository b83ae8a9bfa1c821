//! Local, deterministic text embedding: hashed unigram and bigram TF-IDF
//! over the tokens of canonical DSL source.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::Color;
use crate::seeds::SEED_TASKS;

pub const DEFAULT_DIMENSION: usize = 256;
pub const TFIDF_PROVIDER_ID: &str = "tfidf-hash-uni-bi-v1";
const COLOR_TOKEN: &str = "<color>";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub provider_id: String,
    pub dimension: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider_id: TFIDF_PROVIDER_ID.into(),
            dimension: DEFAULT_DIMENSION,
        }
    }
}

pub trait Embedder: Send + Sync {
    fn config(&self) -> EmbeddingConfig;
    fn embed(&self, source: &str) -> Vec<f64>;
}

/// Lowercased runs of `[a-z0-9._]`, skipping the `task` line so a renamed
/// copy embeds identically to its original. Identifiers are split at
/// dashes, and every color word becomes the single token `<color>`: which
/// colors a task uses says little about what the task is.
pub fn tokens(source: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in source.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("task ") || trimmed.starts_with('#') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        for word in lower.split(|c: char| !(c.is_ascii_alphanumeric() || c == '.' || c == '_')) {
            let word = word.trim_matches('.');
            if word.parse::<Color>().is_ok() {
                out.push(COLOR_TOKEN.to_string());
            } else if !word.is_empty() {
                out.push(word.to_string());
            }
        }
    }
    out
}

fn features(source: &str) -> Vec<String> {
    let toks = tokens(source);
    let mut out = toks.clone();
    out.extend(toks.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

fn bucket(feature: &str, dim: usize) -> usize {
    let h = Sha256::digest(feature.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&h[..8]);
    (u64::from_le_bytes(head) % dim as u64) as usize
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Document frequencies are frozen on the seed corpus, so embeddings of
/// existing entries never shift as the library grows.
#[derive(Clone, Debug)]
pub struct TfIdfEmbedder {
    dim: usize,
    n_docs: usize,
    df: BTreeMap<String, usize>,
}

impl TfIdfEmbedder {
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a str>, dim: usize) -> Self {
        assert!(dim > 0);
        let mut df = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let unique: HashSet<String> = features(doc).into_iter().collect();
            for f in unique {
                *df.entry(f).or_insert(0) += 1;
            }
        }
        Self { dim, n_docs, df }
    }

    pub fn seeded() -> Self {
        Self::fit(SEED_TASKS.iter().map(|(_, s)| *s), DEFAULT_DIMENSION)
    }

    pub fn idf(&self, feature: &str) -> f64 {
        let df = self.df.get(feature).copied().unwrap_or(0);
        ((1 + self.n_docs) as f64 / (1 + df) as f64).ln() + 1.0
    }
}

impl Embedder for TfIdfEmbedder {
    fn config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            provider_id: TFIDF_PROVIDER_ID.into(),
            dimension: self.dim,
        }
    }

    fn embed(&self, source: &str) -> Vec<f64> {
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for f in features(source) {
            *tf.entry(f).or_insert(0) += 1;
        }
        let mut v = vec![0.0; self.dim];
        for (f, n) in &tf {
            v[bucket(f, self.dim)] += (1.0 + (*n as f64).ln()) * self.idf(f);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}
