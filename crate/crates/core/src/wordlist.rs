//! The reaction-card vocabulary: loading, sampling and membership checks.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN: &str = include_str!("data/reaction_cards.txt");

/// Number of entries in the builtin vocabulary.
pub const BUILTIN_SIZE: usize = 118;

#[derive(Debug, Error)]
pub enum WordListError {
    #[error("{source_name}:{line}: malformed line {content:?} (expected `word,polarity`)")]
    MalformedLine {
        source_name: String,
        line: usize,
        content: String,
    },
    #[error("{source_name}:{line}: duplicate word {word:?}")]
    DuplicateWord {
        source_name: String,
        line: usize,
        word: String,
    },
    #[error("word list {0} contains no words")]
    EmptyList(String),
    #[error("cannot sample {k} words from a list of {len}")]
    KTooLarge { k: usize, len: usize },
    #[error("sample size must be at least 1")]
    ZeroSample,
    #[error("failed to read word list {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl FromStr for Polarity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PdtWord {
    pub text: String,
    pub polarity: Polarity,
}

/// Where to load a word list from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordSource {
    Builtin,
    File(PathBuf),
}

impl WordSource {
    /// `None` or the literal `"builtin"` select the shipped list.
    pub fn from_option(path: Option<&Path>) -> Self {
        match path {
            Some(p) if p.as_os_str() != "builtin" => WordSource::File(p.to_path_buf()),
            _ => WordSource::Builtin,
        }
    }
}

/// Result of checking a model-produced word against the list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice<'a> {
    pub valid: bool,
    pub canonical: Option<&'a PdtWord>,
}

/// An immutable, validated vocabulary. Lookups are case-insensitive.
#[derive(Debug, Clone)]
pub struct WordList {
    words: Vec<PdtWord>,
    source: String,
    index: HashMap<String, usize>,
}

impl WordList {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN, "builtin").expect("builtin word list is valid")
    }

    pub fn load(source: &WordSource) -> Result<Self, WordListError> {
        match source {
            WordSource::Builtin => Ok(Self::builtin()),
            WordSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| WordListError::Io {
                    path: path.clone(),
                    source,
                })?;
                Self::parse(&text, &path.display().to_string())
            }
        }
    }

    /// Parses `word,polarity` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, source_name: &str) -> Result<Self, WordListError> {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = || WordListError::MalformedLine {
                source_name: source_name.to_string(),
                line: i + 1,
                content: raw.to_string(),
            };
            let (word, polarity) = line.rsplit_once(',').ok_or_else(malformed)?;
            let word = word.trim();
            if word.is_empty() {
                return Err(malformed());
            }
            let polarity: Polarity = polarity.parse().map_err(|_| malformed())?;
            let key = fold(word);
            if index.contains_key(&key) {
                return Err(WordListError::DuplicateWord {
                    source_name: source_name.to_string(),
                    line: i + 1,
                    word: word.to_string(),
                });
            }
            index.insert(key, words.len());
            words.push(PdtWord {
                text: word.to_string(),
                polarity,
            });
        }
        if words.is_empty() {
            return Err(WordListError::EmptyList(source_name.to_string()));
        }
        Ok(Self {
            words,
            source: source_name.to_string(),
            index,
        })
    }

    pub fn words(&self) -> &[PdtWord] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn polarity_counts(&self) -> HashMap<Polarity, usize> {
        let mut counts = HashMap::new();
        for w in &self.words {
            *counts.entry(w.polarity).or_insert(0) += 1;
        }
        counts
    }

    /// Draws `k` distinct words uniformly without replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<PdtWord>, WordListError> {
        if k == 0 {
            return Err(WordListError::ZeroSample);
        }
        if k > self.words.len() {
            return Err(WordListError::KTooLarge {
                k,
                len: self.words.len(),
            });
        }
        Ok(index::sample(rng, self.words.len(), k)
            .into_iter()
            .map(|i| self.words[i].clone())
            .collect())
    }

    /// Membership test after trimming whitespace and quotes and case-folding.
    pub fn validate_choice(&self, candidate: &str) -> Choice<'_> {
        let canonical = self.index.get(&fold(candidate)).map(|&i| &self.words[i]);
        Choice {
            valid: canonical.is_some(),
            canonical,
        }
    }

    /// Canonical spelling if `candidate` is a member.
    pub fn canonical(&self, candidate: &str) -> Option<&str> {
        self.validate_choice(candidate)
            .canonical
            .map(|w| w.text.as_str())
    }

    /// Comma-separated word list as interpolated into generation prompts.
    pub fn joined(words: &[PdtWord]) -> String {
        words
            .iter()
            .map(|w| w.text.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn fold(s: &str) -> String {
    s.trim_matches(|c: char| {
        c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '“' | '”' | '‘' | '’' | '*' | '.')
    })
    .to_lowercase()
}
