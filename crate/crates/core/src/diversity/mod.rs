//! Corpus diversity metrics: compression ratio over text and over
//! part-of-speech sequences, mean pairwise ROUGE-L (homogenization), and
//! n-gram diversity.

mod lcs;
pub mod pos;

use std::io::Write;
use std::time::{Duration, Instant};

use flate2::write::DeflateEncoder;
use flate2::Compression;
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

pub use lcs::{lcs_len, Pattern};
pub use pos::{LexiconTagger, PosTagger, Upos};

pub const MAX_NGRAM: usize = 4;
const DEFLATE_LEVEL: u32 = 6;

#[derive(Debug, Error, PartialEq)]
pub enum DiversityError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("pairwise metrics need at least two documents")]
    SingleDocument,
    #[error("document {index} contains no word tokens")]
    EmptyDocument { index: usize },
}

/// Lowercased Unicode word tokens with punctuation dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

/// Documents plus their token ids, interned once per corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<String>,
    tokens: Vec<Vec<u32>>,
    vocab: usize,
}

impl Corpus {
    pub fn new<S: Into<String>>(docs: impl IntoIterator<Item = S>) -> Result<Self, DiversityError> {
        let docs: Vec<String> = docs.into_iter().map(Into::into).collect();
        if docs.is_empty() {
            return Err(DiversityError::EmptyCorpus);
        }
        let mut ids: FxHashMap<String, u32> = FxHashMap::default();
        let mut tokens = Vec::with_capacity(docs.len());
        for (index, doc) in docs.iter().enumerate() {
            let toks: Vec<u32> = tokenize(doc)
                .into_iter()
                .map(|t| {
                    let next = ids.len() as u32;
                    *ids.entry(t).or_insert(next)
                })
                .collect();
            if toks.is_empty() {
                return Err(DiversityError::EmptyDocument { index });
            }
            tokens.push(toks);
        }
        Ok(Self {
            docs,
            tokens,
            vocab: ids.len(),
        })
    }

    /// One document per non-blank line.
    pub fn from_lines(text: &str) -> Result<Self, DiversityError> {
        Self::new(text.lines().filter(|l| !l.trim().is_empty()))
    }

    pub fn documents(&self) -> &[String] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.tokens.iter().map(Vec::len).sum()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocab
    }

    pub fn token_ids(&self) -> &[Vec<u32>] {
        &self.tokens
    }
}

/// Raw DEFLATE (no container) at level 6.
pub fn deflate_len(bytes: &[u8]) -> usize {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::new(DEFLATE_LEVEL));
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail").len()
}

/// Original size over compressed size.
pub fn compression_ratio_bytes(bytes: &[u8]) -> f64 {
    bytes.len() as f64 / deflate_len(bytes) as f64
}

pub fn compression_ratio(corpus: &Corpus) -> f64 {
    compression_ratio_bytes(corpus.docs.join("\n").as_bytes())
}

/// Compression ratio of the documents' tag sequences, one document per line.
pub fn pos_compression_ratio(corpus: &Corpus, tagger: &dyn PosTagger) -> f64 {
    let lines: Vec<String> = corpus
        .docs
        .par_iter()
        .map(|d| {
            let tags: Vec<&str> = tagger.tag(d).into_iter().map(Upos::as_str).collect();
            tags.join(" ")
        })
        .collect();
    compression_ratio_bytes(lines.join("\n").as_bytes())
}

/// ROUGE-L F1 from an LCS length and the two sequence lengths.
///
/// With P = l/m and R = l/n, 2PR/(P+R) reduces to 2l/(m+n).
pub fn rouge_l_f1(l: usize, m: usize, n: usize) -> f64 {
    if l == 0 {
        0.0
    } else {
        (2 * l) as f64 / (m + n) as f64
    }
}

/// Mean ROUGE-L F1 over all unordered document pairs.
///
/// Each row i sums its pairs (i, j>i) in order of j and the row sums are
/// then added in order of i, so the result is independent of thread count.
pub fn homogenization_rouge_l(corpus: &Corpus) -> Result<f64, DiversityError> {
    let n = corpus.len();
    if n < 2 {
        return Err(DiversityError::SingleDocument);
    }
    let docs = &corpus.tokens;
    let rows: Vec<f64> = (0..n - 1)
        .into_par_iter()
        .map_init(
            || (Pattern::new(corpus.vocab), Vec::new()),
            |(pattern, scratch), i| {
                pattern.load(&docs[i]);
                let m = docs[i].len();
                let mut row = 0.0;
                for doc in &docs[i + 1..] {
                    row += rouge_l_f1(pattern.lcs(doc, scratch), m, doc.len());
                }
                row
            },
        )
        .collect();
    let total: f64 = rows.iter().sum();
    let pairs = n * (n - 1) / 2;
    Ok(total / pairs as f64)
}

/// Sum over n = 1..=max_n of distinct n-grams over total n-grams. N-grams
/// never span documents; an order with no n-grams contributes 0.
pub fn ngram_diversity(corpus: &Corpus, max_n: usize) -> f64 {
    (1..=max_n)
        .map(|n| {
            let mut seen: FxHashSet<&[u32]> = FxHashSet::default();
            let mut total = 0usize;
            for doc in &corpus.tokens {
                for gram in doc.windows(n) {
                    seen.insert(gram);
                    total += 1;
                }
            }
            if total == 0 {
                0.0
            } else {
                seen.len() as f64 / total as f64
            }
        })
        .sum()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTimings {
    pub cr_ms: f64,
    pub cr_pos_ms: f64,
    pub hs_ms: Option<f64>,
    pub nds_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub documents: usize,
    pub word_count: usize,
    pub cr: f64,
    pub cr_pos: f64,
    /// `None` when skipped.
    pub hs: Option<f64>,
    pub nds: f64,
    pub tagger: String,
    /// Wall times vary run to run, so they are kept out of the serialized
    /// report.
    #[serde(skip)]
    pub timings: MetricTimings,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, ms(start.elapsed()))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Runs every metric. HS needs two documents unless skipped.
pub fn full_report(corpus: &Corpus, tagger: &dyn PosTagger, skip_hs: bool) -> Result<DiversityReport, DiversityError> {
    let (hs, hs_ms) = if skip_hs {
        (None, None)
    } else {
        let (hs, t) = timed(|| homogenization_rouge_l(corpus));
        (Some(hs?), Some(t))
    };
    let (cr, cr_ms) = timed(|| compression_ratio(corpus));
    let (cr_pos, cr_pos_ms) = timed(|| pos_compression_ratio(corpus, tagger));
    let (nds, nds_ms) = timed(|| ngram_diversity(corpus, MAX_NGRAM));
    Ok(DiversityReport {
        documents: corpus.len(),
        word_count: corpus.word_count(),
        cr,
        cr_pos,
        hs,
        nds,
        tagger: tagger.name().to_string(),
        timings: MetricTimings {
            cr_ms,
            cr_pos_ms,
            hs_ms,
            nds_ms,
        },
    })
}
