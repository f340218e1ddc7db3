//! Random context generation and prompt injection.
//!
//! A context is a random word run, a templated random sentence or a random
//! lowercase string. It is prepended to the question on its own line.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Draw;

const BUNDLED_WORDLISTS: &str = include_str!("../data/wordlists.json");

pub const MAX_WORDS: u32 = 100;
pub const MAX_STRING_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum PerturbationError {
    #[error("invalid random string length {0} (expected 1..={MAX_STRING_LEN})")]
    InvalidLength(usize),
    #[error("prompt text is empty")]
    EmptyPrompt,
    #[error("invalid condition {0:?}")]
    InvalidCondition(String),
    #[error("invalid word lists: {0}")]
    InvalidWordLists(String),
    #[error("cannot read word lists: {0}")]
    Io(#[from] std::io::Error),
}

/// Which kind of random context a condition prepends.
///
/// Ordering is the canonical report order: regular, word runs by length,
/// sentence, random string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ContextSpec {
    None,
    Words(u32),
    Sentence,
    RandomString,
}

impl ContextSpec {
    pub fn validate(&self) -> Result<(), PerturbationError> {
        match *self {
            ContextSpec::Words(n) if n == 0 || n > MAX_WORDS => {
                Err(PerturbationError::InvalidCondition(format!("words({n})")))
            }
            _ => Ok(()),
        }
    }

    /// Canonical tag used in response files, reports and on the command line.
    pub fn tag(&self) -> String {
        match *self {
            ContextSpec::None => "regular".to_string(),
            ContextSpec::Words(1) => "word".to_string(),
            ContextSpec::Words(n) => format!("words{n}"),
            ContextSpec::Sentence => "sentence".to_string(),
            ContextSpec::RandomString => "string".to_string(),
        }
    }

    /// Parses a tag, reading a bare `word` as `words(num_words)`.
    pub fn parse_with_words(tag: &str, num_words: u32) -> Result<Self, PerturbationError> {
        let spec = match tag.trim() {
            "regular" | "none" => ContextSpec::None,
            "word" => ContextSpec::Words(num_words),
            "sentence" => ContextSpec::Sentence,
            "string" => ContextSpec::RandomString,
            other => match other.strip_prefix("words").map(str::parse::<u32>) {
                Some(Ok(n)) => ContextSpec::Words(n),
                _ => return Err(PerturbationError::InvalidCondition(other.to_string())),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ContextSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for ContextSpec {
    type Err = PerturbationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_with_words(s, 1)
    }
}

impl TryFrom<String> for ContextSpec {
    type Error = PerturbationError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ContextSpec> for String {
    fn from(spec: ContextSpec) -> String {
        spec.tag()
    }
}

/// Vocabulary for word and sentence contexts. Verbs are stored in base form
/// and conjugated by appending `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordLists {
    pub adjectives: Vec<String>,
    pub nouns: Vec<String>,
    pub verbs: Vec<String>,
}

impl WordLists {
    pub fn new(
        adjectives: Vec<String>,
        nouns: Vec<String>,
        verbs: Vec<String>,
    ) -> Result<Self, PerturbationError> {
        let lists = Self {
            adjectives,
            nouns,
            verbs,
        };
        lists.validate()?;
        Ok(lists)
    }

    /// The word lists shipped with the crate.
    pub fn bundled() -> Self {
        let lists: Self =
            serde_json::from_str(BUNDLED_WORDLISTS).expect("bundled word lists are valid JSON");
        debug_assert!(lists.validate().is_ok());
        lists
    }

    pub fn from_json_file(path: &Path) -> Result<Self, PerturbationError> {
        let text = std::fs::read_to_string(path)?;
        let lists: Self = serde_json::from_str(&text)
            .map_err(|e| PerturbationError::InvalidWordLists(e.to_string()))?;
        lists.validate()?;
        Ok(lists)
    }

    pub fn validate(&self) -> Result<(), PerturbationError> {
        for (name, list) in self.parts() {
            if list.is_empty() {
                return Err(PerturbationError::InvalidWordLists(format!(
                    "{name} is empty"
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for w in list {
                if w.is_empty()
                    || w.chars().any(char::is_whitespace)
                    || w.chars().any(char::is_uppercase)
                {
                    return Err(PerturbationError::InvalidWordLists(format!(
                        "{name} entry {w:?} must be lowercase without whitespace"
                    )));
                }
                if !seen.insert(w.as_str()) {
                    return Err(PerturbationError::InvalidWordLists(format!(
                        "{name} contains {w:?} twice"
                    )));
                }
            }
        }
        Ok(())
    }

    fn parts(&self) -> [(&'static str, &Vec<String>); 3] {
        [
            ("adjectives", &self.adjectives),
            ("nouns", &self.nouns),
            ("verbs", &self.verbs),
        ]
    }

    fn all_entries(&self) -> impl Iterator<Item = &String> {
        self.adjectives
            .iter()
            .chain(self.nouns.iter())
            .chain(self.verbs.iter())
    }
}

fn pick<'a, D: Draw + ?Sized>(list: &'a [String], rng: &mut D) -> &'a str {
    &list[rng.below(list.len())]
}

/// A word from one of the three lists: the list is chosen uniformly, then an
/// entry uniformly within it.
pub fn random_word<D: Draw + ?Sized>(lists: &WordLists, rng: &mut D) -> String {
    let list = match rng.below(3) {
        0 => &lists.adjectives,
        1 => &lists.nouns,
        _ => &lists.verbs,
    };
    pick(list, rng).to_string()
}

/// "The {adjective} {noun} {verb}s {noun}."
pub fn random_sentence<D: Draw + ?Sized>(lists: &WordLists, rng: &mut D) -> String {
    let adjective = pick(&lists.adjectives, rng);
    let subject = pick(&lists.nouns, rng);
    let verb = pick(&lists.verbs, rng);
    let object = pick(&lists.nouns, rng);
    format!("The {adjective} {subject} {verb}s {object}.")
}

/// `length` characters drawn uniformly from `a..=z`.
pub fn random_string<D: Draw + ?Sized>(
    rng: &mut D,
    length: usize,
) -> Result<String, PerturbationError> {
    if length == 0 || length > MAX_STRING_LEN {
        return Err(PerturbationError::InvalidLength(length));
    }
    Ok((0..length)
        .map(|_| char::from(b'a' + rng.below(26) as u8))
        .collect())
}

/// Length of a uniformly chosen entry across all lists, clamped to the
/// random-string bounds.
fn sample_string_length<D: Draw + ?Sized>(lists: &WordLists, rng: &mut D) -> usize {
    let total = lists.adjectives.len() + lists.nouns.len() + lists.verbs.len();
    let idx = rng.below(total);
    let word = lists.all_entries().nth(idx).expect("index within union");
    word.chars().count().clamp(1, MAX_STRING_LEN)
}

pub fn make_context<D: Draw + ?Sized>(spec: ContextSpec, lists: &WordLists, rng: &mut D) -> String {
    match spec {
        ContextSpec::None => String::new(),
        ContextSpec::Words(n) => (0..n)
            .map(|_| random_word(lists, rng))
            .collect::<Vec<_>>()
            .join(" "),
        ContextSpec::Sentence => random_sentence(lists, rng),
        ContextSpec::RandomString => {
            let len = sample_string_length(lists, rng);
            random_string(rng, len).expect("sampled length is in range")
        }
    }
}

/// A question with its (possibly empty) random context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedPrompt {
    pub context_text: String,
    pub base_text: String,
    pub full_text: String,
}

/// Prepends `context` on its own line. An empty context leaves the prompt unchanged.
pub fn inject(context: &str, prompt_text: &str) -> Result<InjectedPrompt, PerturbationError> {
    if prompt_text.is_empty() {
        return Err(PerturbationError::EmptyPrompt);
    }
    let full_text = if context.is_empty() {
        prompt_text.to_string()
    } else {
        format!("{context}\n{prompt_text}")
    };
    Ok(InjectedPrompt {
        context_text: context.to_string(),
        base_text: prompt_text.to_string(),
        full_text,
    })
}
