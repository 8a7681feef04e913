//! Default text embedder: signed feature hashing of character n-grams and
//! word unigrams, L2-normalized.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("text has no embeddable content")]
    EmptyText,
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedNgramEmbedder {
    dim: usize,
}

impl HashedNgramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedNgramEmbedder { dim }
    }
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        HashedNgramEmbedder::new(DEFAULT_DIM)
    }
}

// 64-bit FNV-1a
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased alphanumeric words.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

impl Embedder for HashedNgramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let ws = words(text);
        if ws.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0f64; self.dim];
        let mut add = |feature: &str| {
            let h = fnv1a(feature.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        };
        for w in &ws {
            add(&format!("w:{w}"));
            let padded: Vec<char> = format!(" {w} ").chars().collect();
            for n in [3usize, 4] {
                for gram in padded.windows(n) {
                    add(&gram.iter().collect::<String>());
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // every feature cancelled out; fall back to a fixed axis
            v[(fnv1a(text.as_bytes()) % self.dim as u64) as usize] = 1.0;
            return Ok(v);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// Dot product; equals cosine similarity for unit vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_rejects_empty() {
        let e = HashedNgramEmbedder::default();
        assert_eq!(e.embed("hello bank").unwrap(), e.embed("hello bank").unwrap());
        assert_eq!(e.embed(""), Err(EmbedError::EmptyText));
        assert_eq!(e.embed(" ?! "), Err(EmbedError::EmptyText));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    proptest! {
        #[test]
        fn unit_norm(text in "[a-zA-Z0-9 ]{1,60}") {
            let e = HashedNgramEmbedder::default();
            if let Ok(v) = e.embed(&text) {
                let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-9);
                prop_assert!(v.iter().all(|x| x.is_finite()));
            }
        }
    }
}
