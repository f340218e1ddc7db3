//! Output-diversity benchmark for list-generation prompts.
//!
//! A question such as "Name 10 Hollywood actors." is asked many times, with
//! and without a random word, sentence or string prepended. The answers are
//! tallied per question and compared by number of distinct items, entropy,
//! frequency-rank curves and paired t-tests.

pub mod model_backend;
pub mod perturbation;
pub mod prompt_dataset;
pub mod reporting;
pub mod rng;
pub mod run_orchestrator;
pub mod statistics;
