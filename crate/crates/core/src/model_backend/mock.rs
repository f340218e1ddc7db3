//! Deterministic stand-in for a language model.
//!
//! The mock answers every question with `k` distinct labels `item_0001 ..
//! item_VVVV` drawn without replacement. Weights follow a Zipf law over rank:
//! the item at rank `r` (1-based) has weight `r^-s`. Which item holds which
//! rank is a permutation seeded by a hash of the prompt text, so a new random
//! context reshuffles the favored items while a repeated prompt keeps them.
//!
//! Sampling protocol, relied on by replay tests: candidates are kept in
//! vocabulary order; each draw takes `u = unit() * total` where `total` is the
//! sum of the remaining weights in that order, selects the first candidate
//! whose running sum exceeds `u` (the last one if rounding leaves none), and
//! removes it from the candidate list.

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError};
use crate::perturbation::InjectedPrompt;
use crate::rng::{Draw, RngStream};

pub const MAX_VOCAB: usize = 9999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub context_sensitive: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            zipf_exponent: 1.1,
            context_sensitive: true,
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.vocab_size == 0 || self.vocab_size > MAX_VOCAB {
            return Err(BackendError::MockMisconfigured(format!(
                "vocab_size {} outside 1..={MAX_VOCAB}",
                self.vocab_size
            )));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return Err(BackendError::MockMisconfigured(format!(
                "zipf_exponent {} must be positive",
                self.zipf_exponent
            )));
        }
        Ok(())
    }
}

pub fn item_label(index: usize) -> String {
    format!("item_{:04}", index + 1)
}

/// Zipf weight for each 0-based rank.
pub fn rank_weights(vocab_size: usize, exponent: f64) -> Vec<f64> {
    (1..=vocab_size)
        .map(|r| (r as f64).powf(-exponent))
        .collect()
}

/// `perm[rank] = vocabulary index` via Fisher-Yates over a text-keyed stream.
pub fn favored_order(vocab_size: usize, key_text: &str) -> Vec<usize> {
    let mut stream = RngStream::from_text("mock-permutation", key_text);
    let mut perm: Vec<usize> = (0..vocab_size).collect();
    for i in (1..vocab_size).rev() {
        let j = stream.below(i + 1);
        perm.swap(i, j);
    }
    perm
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    model_name: String,
    config: MockConfig,
    weights_by_rank: Vec<f64>,
}

impl MockBackend {
    pub fn new(model_name: &str, config: MockConfig) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(Self {
            model_name: model_name.to_string(),
            weights_by_rank: rank_weights(config.vocab_size, config.zipf_exponent),
            config,
        })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    /// Weight of every vocabulary item for a given prompt.
    pub fn item_weights(&self, prompt: &InjectedPrompt) -> Vec<f64> {
        let key = if self.config.context_sensitive {
            &prompt.full_text
        } else {
            &prompt.base_text
        };
        let order = favored_order(self.config.vocab_size, key);
        let mut weights = vec![0.0; self.config.vocab_size];
        for (rank, &item) in order.iter().enumerate() {
            weights[item] = self.weights_by_rank[rank];
        }
        weights
    }

    pub fn sample_items(
        &self,
        prompt: &InjectedPrompt,
        k: usize,
        stream: &mut RngStream,
    ) -> Result<Vec<String>, BackendError> {
        if k > self.config.vocab_size {
            return Err(BackendError::MockMisconfigured(format!(
                "vocab_size {} is smaller than k={k}",
                self.config.vocab_size
            )));
        }
        let mut candidates: Vec<(usize, f64)> =
            self.item_weights(prompt).into_iter().enumerate().collect();
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k {
            let total: f64 = candidates.iter().map(|&(_, w)| w).sum();
            let u = stream.unit() * total;
            let mut acc = 0.0;
            let mut chosen = candidates.len() - 1;
            for (pos, &(_, w)) in candidates.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = pos;
                    break;
                }
            }
            let (item, _) = candidates.remove(chosen);
            picked.push(item_label(item));
        }
        Ok(picked)
    }
}

impl Backend for MockBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(
        &self,
        prompt: &InjectedPrompt,
        k: usize,
        stream: &mut RngStream,
    ) -> Result<String, BackendError> {
        let items = self.sample_items(prompt, k, stream)?;
        Ok(serde_json::to_string(&items).expect("string list serializes"))
    }
}
