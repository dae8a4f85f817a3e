//! Deterministic feature-hash embeddings.
//!
//! Texts are lowercased, split into alphanumeric token runs, and each token
//! is folded into a fixed-dimension vector: one hash picks the bucket, an
//! independent hash picks the sign (+1/-1), counts accumulate, and the result
//! is L2-normalized. The same text always produces the same unit vector, with
//! no model files and no network — which is what makes every pipeline above
//! it replayable byte-for-byte.
//!
//! The [`EmbeddingProvider`] trait is the seam for substituting a real
//! embedding model; everything else in the engine only sees unit vectors.

use crate::substrate::FragmentId;
use crate::{Error, Result};
use sha2::{Digest, Sha256};

/// Source of fixed-dimension unit vectors for texts.
pub trait EmbeddingProvider {
    /// Vector dimension produced by this provider.
    fn dim(&self) -> usize;

    /// Embed `text` into a unit vector. Errors on token-free input.
    fn embed(&self, text: &str) -> Result<Vec<f64>>;

    /// Stable identifier for the provider + configuration. Stores record it
    /// so that two systems under comparison can assert they share one.
    fn fingerprint(&self) -> String;
}

/// The default deterministic provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.embed_impl(text)
    }

    fn fingerprint(&self) -> String {
        format!("feature-hash-v1-d{}", self.dim)
    }
}

/// Lowercase alphanumeric token runs, in order of appearance.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Bucket index and sign for a token: sha-256, first 8 bytes pick the bucket,
/// the ninth byte's low bit picks the sign. The two decisions come from
/// disjoint bytes of the digest, so they are independent streams.
fn token_slot(token: &str, dim: usize) -> (usize, f64) {
    let digest = Sha256::digest(token.as_bytes());
    let mut h = [0u8; 8];
    h.copy_from_slice(&digest[..8]);
    let bucket = (u64::from_le_bytes(h) % dim as u64) as usize;
    let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

/// Cosine similarity of two equal-length vectors. Unit inputs make this the
/// plain dot product, but zero-norm guards keep it total.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Normalized mean of unit vectors; `None` when `vectors` is empty or the
/// mean degenerates to zero.
pub fn centroid(vectors: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = vectors.first()?;
    let mut mean = vec![0.0; first.len()];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += *x;
        }
    }
    let n = vectors.len() as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    let norm: f64 = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    for m in mean.iter_mut() {
        *m /= norm;
    }
    Some(mean)
}

/// Exact top-k by cosine against `query`: descending similarity, ties broken
/// by ascending [`FragmentId`]. Returns fewer than `k` entries when fewer
/// candidates exist.
pub fn top_k<'a, I>(query: &[f64], candidates: I, k: usize) -> Vec<(FragmentId, f64)>
where
    I: IntoIterator<Item = (FragmentId, &'a [f64])>,
{
    if k == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(FragmentId, f64)> = candidates
        .into_iter()
        .map(|(id, v)| (id, cosine(query, v)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored
}

impl HashEmbedder {
    pub(crate) fn embed_impl(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyEmbedding(format!(
                "no alphanumeric tokens in {text:?}"
            )));
        }
        let mut v = vec![0.0; self.dim];
        for token in &tokens {
            let (bucket, sign) = token_slot(token, self.dim);
            v[bucket] += sign;
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::EmptyEmbedding(format!(
                "tokens of {text:?} cancelled to a zero vector"
            )));
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        Ok(v)
    }
}
