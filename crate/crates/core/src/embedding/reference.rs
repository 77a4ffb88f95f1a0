use unicode_segmentation::UnicodeSegmentation;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{validate_text, EmbedError, Embedder, EmbeddingVector};

/// Mixed into the seed for the hash that picks each token's sign.
pub(crate) const SIGN_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Lowercased Unicode words (UAX #29 word boundaries, punctuation dropped).
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.unicode_words().map(str::to_lowercase)
}

/// Signed hashed bag-of-words.
///
/// Each token is hashed with seeded XXH3-64; the hash modulo `dim` picks the
/// coordinate, and the low bit of a second seeded hash picks whether 1.0 is
/// added or subtracted. Texts sharing tokens share coordinates, so cosine
/// overlap is meaningful without a trained model.
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    dim: usize,
    seed: u64,
}

impl ReferenceEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::Config("dim must be at least 1".into()));
        }
        Ok(Self { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Embedder for ReferenceEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("reference:dim={}:seed={}", self.dim, self.seed)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        validate_text(text)?;
        let mut values = vec![0.0f64; self.dim];
        for token in word_tokens(text) {
            let bytes = token.as_bytes();
            let bucket = (xxh3_64_with_seed(bytes, self.seed) % self.dim as u64) as usize;
            let negative = xxh3_64_with_seed(bytes, self.seed ^ SIGN_SEED_SALT) & 1 == 1;
            values[bucket] += if negative { -1.0 } else { 1.0 };
        }
        EmbeddingVector::new(values)
    }
}
