//! Coarse part-of-speech tagging over the universal tag set.

use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    pub const ALL: [Upos; 17] = [
        Upos::Adj,
        Upos::Adp,
        Upos::Adv,
        Upos::Aux,
        Upos::Cconj,
        Upos::Det,
        Upos::Intj,
        Upos::Noun,
        Upos::Num,
        Upos::Part,
        Upos::Pron,
        Upos::Propn,
        Upos::Punct,
        Upos::Sconj,
        Upos::Sym,
        Upos::Verb,
        Upos::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Adj => "ADJ",
            Upos::Adp => "ADP",
            Upos::Adv => "ADV",
            Upos::Aux => "AUX",
            Upos::Cconj => "CCONJ",
            Upos::Det => "DET",
            Upos::Intj => "INTJ",
            Upos::Noun => "NOUN",
            Upos::Num => "NUM",
            Upos::Part => "PART",
            Upos::Pron => "PRON",
            Upos::Propn => "PROPN",
            Upos::Punct => "PUNCT",
            Upos::Sconj => "SCONJ",
            Upos::Sym => "SYM",
            Upos::Verb => "VERB",
            Upos::X => "X",
        }
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Upos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Upos::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown tag {s:?}"))
    }
}

/// Anything that can assign one universal tag per token of a document.
pub trait PosTagger: Sync {
    fn tag(&self, text: &str) -> Vec<Upos>;

    fn name(&self) -> &str;
}

const LEXICON: &str = include_str!("../data/pos_lexicon.txt");

const SUFFIXES: &[(&str, Upos)] = &[
    ("ly", Upos::Adv),
    ("ness", Upos::Noun),
    ("tion", Upos::Noun),
    ("sion", Upos::Noun),
    ("ment", Upos::Noun),
    ("ity", Upos::Noun),
    ("ism", Upos::Noun),
    ("ance", Upos::Noun),
    ("ence", Upos::Noun),
    ("ship", Upos::Noun),
    ("ful", Upos::Adj),
    ("less", Upos::Adj),
    ("ous", Upos::Adj),
    ("ive", Upos::Adj),
    ("able", Upos::Adj),
    ("ible", Upos::Adj),
    ("ical", Upos::Adj),
    ("ic", Upos::Adj),
    ("ish", Upos::Adj),
    ("est", Upos::Adj),
    ("ing", Upos::Verb),
    ("ed", Upos::Verb),
    ("ize", Upos::Verb),
    ("ise", Upos::Verb),
    ("ify", Upos::Verb),
    ("ate", Upos::Verb),
];

/// Lexicon lookup with suffix rules and a noun fallback.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: FxHashMap<String, Upos>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        Self::parse(LEXICON).expect("bundled lexicon is well formed")
    }
}

impl LexiconTagger {
    /// Parses `word TAG` lines; `#` starts a comment and the first entry for
    /// a word wins.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lexicon = FxHashMap::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(word), Some(tag), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(format!("line {}: expected `word TAG`", i + 1));
            };
            let tag = tag.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            lexicon.entry(word.to_lowercase()).or_insert(tag);
        }
        Ok(Self { lexicon })
    }

    pub fn len(&self) -> usize {
        self.lexicon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lexicon.is_empty()
    }

    /// Tag for one token, without sentence context.
    pub fn tag_token(&self, token: &str) -> Upos {
        let lower = token.to_lowercase();
        if let Some(&t) = self.lexicon.get(&lower) {
            return t;
        }
        let mut chars = token.chars();
        let Some(first) = chars.next() else {
            return Upos::X;
        };
        if token.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') && first.is_ascii_digit() {
            return Upos::Num;
        }
        if token.chars().all(|c| !c.is_alphanumeric()) {
            return if token.chars().all(|c| c.is_ascii_punctuation() && !"$%&+=<>#@~^|".contains(c)) || is_unicode_punct(token)
            {
                Upos::Punct
            } else {
                Upos::Sym
            };
        }
        if !token.chars().any(char::is_alphabetic) {
            return Upos::X;
        }
        for (suffix, tag) in SUFFIXES {
            if lower.len() > suffix.len() + 2 && lower.ends_with(suffix) {
                return *tag;
            }
        }
        Upos::Noun
    }
}

fn is_unicode_punct(token: &str) -> bool {
    token
        .chars()
        .all(|c| matches!(c, '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{3001}'..='\u{3003}'))
}

impl PosTagger for LexiconTagger {
    fn tag(&self, text: &str) -> Vec<Upos> {
        let tokens: Vec<&str> = text.split_word_bounds().filter(|t| !t.trim().is_empty()).collect();
        let mut tags: Vec<Upos> = tokens.iter().map(|t| self.tag_token(t)).collect();
        // "to" before a verb is an infinitive marker
        for i in 1..tags.len() {
            if tags[i] == Upos::Verb && tokens[i - 1].eq_ignore_ascii_case("to") {
                tags[i - 1] = Upos::Part;
            }
        }
        tags
    }

    fn name(&self) -> &str {
        "lexicon-suffix"
    }
}
