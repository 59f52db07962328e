/// Deterministic bag-of-tokens text encoder used when no pretrained
/// embedding exists for a node. Each lowercased whitespace token is hashed
/// with 64-bit FNV-1a into one of `dim` buckets; counts are L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEncoder {
    pub dim: usize,
}

impl Default for HashedEncoder {
    fn default() -> Self {
        Self { dim: 768 }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

impl HashedEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "encoder dimension must be positive");
        Self { dim }
    }

    pub fn tokenize(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_lowercase).collect()
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }

    fn counts(&self, tokens: &[String]) -> (Vec<f64>, f64) {
        let mut counts = vec![0.0; self.dim];
        for t in tokens {
            counts[self.bucket(t)] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        (counts, norm)
    }

    /// Unit-norm bucket counts, or zeros for text without tokens.
    pub fn encode(&self, text: &str) -> Vec<f64> {
        let (mut counts, norm) = self.counts(&Self::tokenize(text));
        if norm > 0.0 {
            counts.iter_mut().for_each(|c| *c /= norm);
        }
        counts
    }

    /// Per-token vectors whose arithmetic mean equals [`HashedEncoder::encode`]:
    /// token `t` maps to `n / ‖counts‖` in its bucket.
    pub fn encode_tokens(&self, text: &str) -> Vec<(String, Vec<f64>)> {
        let tokens = Self::tokenize(text);
        let (_, norm) = self.counts(&tokens);
        let scale = tokens.len() as f64 / norm;
        tokens
            .into_iter()
            .map(|t| {
                let mut v = vec![0.0; self.dim];
                v[self.bucket(&t)] = scale;
                (t, v)
            })
            .collect()
    }
}
