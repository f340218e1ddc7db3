//! Deterministic random streams.
//!
//! Every random decision in a run is drawn from a stream whose seed is a
//! SHA-256 digest of the master seed and a list of labels, so the value of a
//! draw depends only on *which* cell asked for it and never on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Source of uniform draws used by the generators.
///
/// Implemented by [`RngStream`]; tests may substitute a scripted source to
/// force particular indices.
pub trait Draw {
    /// Uniform index in `0..n`. `n` must be positive.
    fn below(&mut self, n: usize) -> usize;
    /// Uniform real in `[0, 1)`.
    fn unit(&mut self) -> f64;
}

/// A seeded ChaCha8 stream that remembers the seed it was built from.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: [u8; 32],
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Stream for `purpose` under `master_seed`, keyed by `labels`.
    pub fn derive(master_seed: u64, purpose: &str, labels: &[&str]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"diversity-harness/stream/v1");
        hasher.update(master_seed.to_le_bytes());
        feed(&mut hasher, purpose);
        for label in labels {
            feed(&mut hasher, label);
        }
        Self::from_seed(hasher.finalize().into())
    }

    /// Seedless stream keyed only by text (used for hash-derived permutations).
    pub fn from_text(purpose: &str, text: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"diversity-harness/text/v1");
        feed(&mut hasher, purpose);
        feed(&mut hasher, text);
        Self::from_seed(hasher.finalize().into())
    }

    /// Short hex tag identifying the seed.
    pub fn fingerprint(&self) -> String {
        hex::encode(&self.seed[..8])
    }
}

// Length-prefixed so ("ab","c") and ("a","bc") hash differently.
fn feed(hasher: &mut Sha256, label: &str) {
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
}

impl Draw for RngStream {
    fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // u64 sampling keeps results identical on 32- and 64-bit targets.
        self.rng.gen_range(0..n as u64) as usize
    }

    fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
