//! Deterministic hashed character n-gram TF-IDF vectors, used when no
//! neural sentence embeddings are supplied.

use std::hash::Hasher;

use fnv::FnvHasher;

use super::EmbeddingMatrix;
use crate::corpus::Record;
use crate::error::{Error, Result};

pub const DEFAULT_FALLBACK_DIM: usize = 256;
const MIN_GRAM: usize = 3;
const MAX_GRAM: usize = 5;

fn bucket(gram: &str, dim: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(gram.as_bytes());
    (h.finish() % dim as u64) as usize
}

fn gram_counts(text: &str, dim: usize) -> Vec<f64> {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut counts = vec![0.0; dim];
    let mut gram = String::new();
    for n in MIN_GRAM..=MAX_GRAM {
        for window in padded.windows(n) {
            gram.clear();
            gram.extend(window);
            counts[bucket(&gram, dim)] += 1.0;
        }
    }
    counts
}

/// Character 3- to 5-gram counts hashed into `dim` buckets, weighted by
/// smoothed IDF `ln((1 + n) / (1 + df)) + 1` over `records`, L2-normalized.
/// Texts too short to yield any gram map to the first basis vector.
pub fn fallback_embed(records: &[Record], dim: usize) -> Result<EmbeddingMatrix> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if dim < 2 {
        return Err(Error::InvalidInput(format!(
            "embedding dimension must be >= 2, got {dim}"
        )));
    }
    let counts: Vec<Vec<f64>> = records.iter().map(|r| gram_counts(r.post(), dim)).collect();
    let n = records.len() as f64;
    let mut df = vec![0usize; dim];
    for row in &counts {
        for (d, &c) in df.iter_mut().zip(row) {
            if c > 0.0 {
                *d += 1;
            }
        }
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();

    let rows = counts
        .into_iter()
        .map(|row| {
            let mut weighted: Vec<f64> = row.iter().zip(&idf).map(|(tf, w)| tf * w).collect();
            if weighted.iter().all(|&v| v == 0.0) {
                weighted[0] = 1.0;
            }
            weighted
        })
        .collect();
    let ids = records.iter().map(|r| r.id.clone()).collect();
    EmbeddingMatrix::from_rows(ids, rows, format!("fallback-char-3-5gram-tfidf-{dim}"))
}
