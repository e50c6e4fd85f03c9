use crate::error::ModelError;
use crate::models::Embedder;
use crate::types::fingerprint;

/// Deterministic feature-hashing embedder over lower-cased word unigrams and
/// bigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 256 }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ModelError> {
        hash_embed(text, self.dim)
    }
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

/// Signed feature hashing, L2-normalised. Text without any word maps to the
/// first basis vector.
pub fn hash_embed(text: &str, dim: usize) -> Result<Vec<f64>, ModelError> {
    if dim < 8 {
        return Err(ModelError::Script(format!("embedding dimension {dim} below 8")));
    }
    let words = words(text);
    let mut v = vec![0.0; dim];
    if words.is_empty() {
        v[0] = 1.0;
        return Ok(v);
    }
    let mut add = |feature: String| {
        let h = fingerprint(&feature);
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    };
    for w in &words {
        add(format!("u:{w}"));
    }
    for pair in words.windows(2) {
        add(format!("b:{} {}", pair[0], pair[1]));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every feature cancelled out
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        return Ok(e);
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
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
