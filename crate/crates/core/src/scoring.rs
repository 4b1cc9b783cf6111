//! Re-scoring generated word/review pairs and per-record differences.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use chrono::Utc;
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::RunManifest;
use crate::pool::{self, GiveUp, StallGuard};
use crate::prompts::{self, PromptRecord};
use crate::provider::{ChatRequest, Provider, ProviderError};
use crate::synth::{GenerationRecord, STALL_LIMIT};

/// Resends allowed for a reply without a usable CSV line.
pub const MAX_CSV_RETRIES: u32 = 3;

pub const DEFAULT_FLAG_THRESHOLD: f64 = 0.50;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("record {id}: no usable CSV line after {attempts} attempts: {last:?}")]
    UnparseableCsvReply { id: u64, attempts: u32, last: String },
    #[error("record {0} has an empty review")]
    EmptyReview(u64),
    #[error("record {0} was not scored with Base+Adjust")]
    WrongPromptKind(u64),
    #[error("scoring stalled after {failures} consecutive failures; last: {last}")]
    PipelineStalled { failures: u32, last: String },
}

impl ScoringError {
    fn is_fatal(&self) -> bool {
        match self {
            ScoringError::Provider(e) => e.is_fatal(),
            ScoringError::UnparseableCsvReply { .. } => false,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringPrompt {
    #[default]
    Complete,
    BaseAdjust,
}

impl fmt::Display for ScoringPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoringPrompt::Complete => "complete",
            ScoringPrompt::BaseAdjust => "base-adjust",
        })
    }
}

impl FromStr for ScoringPrompt {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '+', ' '], "-").as_str() {
            "complete" => Ok(ScoringPrompt::Complete),
            "base-adjust" | "baseadjust" => Ok(ScoringPrompt::BaseAdjust),
            _ => Err(format!("unknown scoring prompt {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Confidence::Low => "low",
            Confidence::Medium => "medium",
            Confidence::High => "high",
        })
    }
}

impl FromStr for Confidence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_matches('"').to_ascii_lowercase().as_str() {
            "low" => Ok(Confidence::Low),
            "medium" | "med" | "moderate" => Ok(Confidence::Medium),
            "high" => Ok(Confidence::High),
            other => Err(format!("unknown confidence {other:?}")),
        }
    }
}

/// Scoring outcome attached to a generated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub evaluated_score: f64,
    pub base_score: Option<f64>,
    pub adjusted_score: Option<f64>,
    pub confidence: Confidence,
    pub explanation: String,
    pub abs_diff: f64,
    pub scoring_model: String,
    pub scoring_prompt: ScoringPrompt,
    /// Set when the model's score fell outside [0, 1] and was clamped.
    pub score_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub record: GenerationRecord,
    pub eval: Evaluation,
}

impl ScoredRecord {
    /// |adjusted - base| for Base+Adjust records.
    pub fn adjustment(&self) -> Option<f64> {
        Some((self.eval.adjusted_score? - self.eval.base_score?).abs())
    }
}

/// One parsed CSV reply line.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvScore {
    pub word: String,
    pub scores: Vec<f64>,
    pub confidence: Confidence,
    pub explanation: String,
}

/// Finds the first well-formed CSV line in a model reply.
///
/// Expected columns are the word, `score_columns` numeric scores, the
/// confidence and the explanation. Quoted fields follow RFC 4180; surplus
/// unquoted fields are folded back into the explanation.
pub fn parse_csv_reply(text: &str, score_columns: usize) -> Option<CsvScore> {
    let expected = score_columns + 3;
    for line in text.lines() {
        let line = line.trim().trim_matches('`').trim();
        if line.is_empty() {
            continue;
        }
        let normalized = tighten_quotes(line);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(normalized.as_bytes());
        let Some(Ok(fields)) = reader.records().next() else {
            continue;
        };
        if fields.len() < expected {
            continue;
        }
        let scores: Option<Vec<f64>> = (1..=score_columns)
            .map(|i| fields[i].trim_matches('"').parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let Some(scores) = scores else { continue };
        let Ok(confidence) = fields[score_columns + 1].parse::<Confidence>() else {
            continue;
        };
        let explanation = fields
            .iter()
            .skip(score_columns + 2)
            .collect::<Vec<_>>()
            .join(", ");
        return Some(CsvScore {
            word: fields[0].trim_matches('"').to_string(),
            scores,
            confidence,
            explanation,
        });
    }
    None
}

/// Drops blanks between a separating comma and an opening quote so the CSV
/// reader still sees the field as quoted.
fn tighten_quotes(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        out.push(c);
        match c {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => {
                let mut blanks = String::new();
                while let Some(&b) = chars.peek() {
                    if b == ' ' || b == '\t' {
                        blanks.push(b);
                        chars.next();
                    } else {
                        break;
                    }
                }
                if chars.peek() != Some(&'"') {
                    out.push_str(&blanks);
                }
            }
            _ => {}
        }
    }
    out
}

fn clamp_unit(v: f64) -> (f64, bool) {
    let c = v.clamp(0.0, 1.0);
    (c, c != v)
}

/// Scores records with one model and prompt strategy.
pub struct Scorer<'a, P: Provider + ?Sized> {
    pub provider: &'a P,
    pub model: String,
    pub prompt: ScoringPrompt,
    pub temperature: f64,
    pub max_output_tokens: u32,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl<'a, P: Provider + ?Sized> Scorer<'a, P> {
    pub fn new(provider: &'a P, model: impl Into<String>, prompt: ScoringPrompt) -> Self {
        Self {
            provider,
            model: model.into(),
            prompt,
            temperature: 0.0,
            max_output_tokens: 512,
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
        }
    }

    fn ask(&self, rec: &GenerationRecord, system: &str, user: String, columns: usize) -> Result<CsvScore, ScoringError> {
        if rec.review.trim().is_empty() {
            return Err(ScoringError::EmptyReview(rec.id));
        }
        let req = ChatRequest {
            model: self.model.clone(),
            system_prompt: system.to_string(),
            user_prompt: user,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        };
        let mut attempts = 0;
        loop {
            let resp = self.provider.complete(&req)?;
            attempts += 1;
            self.prompt_tokens.fetch_add(resp.prompt_tokens, Ordering::Relaxed);
            self.completion_tokens.fetch_add(resp.completion_tokens, Ordering::Relaxed);
            if let Some(parsed) = parse_csv_reply(&resp.text, columns) {
                return Ok(parsed);
            }
            if attempts > MAX_CSV_RETRIES {
                return Err(ScoringError::UnparseableCsvReply {
                    id: rec.id,
                    attempts,
                    last: resp.text,
                });
            }
            debug!("record {}: unusable CSV reply, resending", rec.id);
        }
    }

    fn finish(&self, rec: &GenerationRecord, raw: f64, base: Option<f64>, adjusted: Option<f64>, csv: CsvScore) -> ScoredRecord {
        let (evaluated, clamped) = clamp_unit(raw);
        if clamped {
            warn!("record {}: score {raw} clamped to {evaluated}", rec.id);
        }
        ScoredRecord {
            record: rec.clone(),
            eval: Evaluation {
                evaluated_score: evaluated,
                base_score: base,
                adjusted_score: adjusted.map(|_| evaluated),
                confidence: csv.confidence,
                explanation: csv.explanation,
                abs_diff: (rec.target_score - evaluated).abs(),
                scoring_model: self.model.clone(),
                scoring_prompt: self.prompt,
                score_clamped: clamped,
            },
        }
    }

    /// Holistic score of word and review together.
    pub fn score_complete(&self, rec: &GenerationRecord) -> Result<ScoredRecord, ScoringError> {
        let csv = self.ask(rec, prompts::SCORE_COMPLETE, prompts::complete_turn(&rec.word, &rec.review), 1)?;
        let raw = csv.scores[0];
        Ok(self.finish(rec, raw, None, None, csv))
    }

    /// Word score first, then a review-based adjustment; the adjusted score is
    /// the evaluated one.
    pub fn score_base_adjust(&self, rec: &GenerationRecord) -> Result<ScoredRecord, ScoringError> {
        let csv = self.ask(rec, prompts::SCORE_BASE_ADJUST, prompts::base_adjust_turn(&rec.word, &rec.review), 2)?;
        let (base, _) = clamp_unit(csv.scores[0]);
        let raw = csv.scores[1];
        Ok(self.finish(rec, raw, Some(base), Some(raw), csv))
    }

    pub fn score(&self, rec: &GenerationRecord) -> Result<ScoredRecord, ScoringError> {
        match self.prompt {
            ScoringPrompt::Complete => self.score_complete(rec),
            ScoringPrompt::BaseAdjust => self.score_base_adjust(rec),
        }
    }

    /// Prompt and completion tokens spent by this scorer so far.
    pub fn usage(&self) -> (u64, u64) {
        (
            self.prompt_tokens.load(Ordering::Relaxed),
            self.completion_tokens.load(Ordering::Relaxed),
        )
    }

    pub fn prompt_record(&self) -> PromptRecord {
        PromptRecord {
            version: prompts::PROMPTS_VERSION.into(),
            template: match self.prompt {
                ScoringPrompt::Complete => prompts::SCORE_COMPLETE,
                ScoringPrompt::BaseAdjust => prompts::SCORE_BASE_ADJUST,
            }
            .into(),
            format_suffix: None,
        }
    }

    /// Scores every record; output keeps input order.
    pub fn score_all(
        &self,
        records: &[GenerationRecord],
        parallelism: usize,
    ) -> Result<(Vec<ScoredRecord>, RunManifest), ScoringError> {
        let workers = if self.provider.requires_sequential() { 1 } else { parallelism.max(1) };
        let started_at = Utc::now();
        let clock = Instant::now();
        let guard = StallGuard::new(STALL_LIMIT);
        let tokens_before = self.usage();
        info!("scoring {} records with {} ({})", records.len(), self.model, self.prompt);
        let scored = pool::map_ordered(records.len(), workers, |i| {
            guard.run(|| self.score(&records[i]), ScoringError::is_fatal).map_err(|g| match g {
                GiveUp::Fatal(e) => e,
                GiveUp::Stalled { failures, last } => ScoringError::PipelineStalled {
                    failures,
                    last: last.to_string(),
                },
            })
        })?;
        let mut manifest = RunManifest::new("score", started_at);
        manifest.scoring_model = Some(self.model.clone());
        manifest.scoring_prompt = Some(self.prompt);
        manifest.prompts = vec![self.prompt_record()];
        manifest.temperature = Some(self.temperature);
        manifest.provider = Some(self.provider.name().to_string());
        manifest.parallelism = Some(workers);
        manifest.rows = scored.len();
        manifest.method = records.first().map(|r| r.method);
        let tokens_after = self.usage();
        manifest.prompt_tokens = tokens_after.0 - tokens_before.0;
        manifest.completion_tokens = tokens_after.1 - tokens_before.1;
        manifest.finish(clock.elapsed());
        Ok((scored, manifest))
    }
}

/// Records whose Base+Adjust adjustment is at least `threshold`, largest first.
pub fn flag_large_adjustments(records: &[ScoredRecord], threshold: f64) -> Result<Vec<&ScoredRecord>, ScoringError> {
    let mut flagged = Vec::new();
    for r in records {
        if r.eval.scoring_prompt != ScoringPrompt::BaseAdjust {
            return Err(ScoringError::WrongPromptKind(r.record.id));
        }
        let delta = r.adjustment().ok_or(ScoringError::WrongPromptKind(r.record.id))?;
        // adjustments are two-decimal scores; compare at that resolution
        if (delta * 100.0).round() >= (threshold * 100.0).round() {
            flagged.push(r);
        }
    }
    flagged.sort_by(|a, b| {
        b.adjustment()
            .partial_cmp(&a.adjustment())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.record.id.cmp(&b.record.id))
    });
    Ok(flagged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ScriptLine, ScriptedProvider};
    use crate::synth::MethodKind;

    pub(crate) fn gen_record(id: u64, word: &str, target: f64, review: &str) -> GenerationRecord {
        GenerationRecord {
            id,
            method: MethodKind::WordReview,
            target_score: target,
            offered_words: None,
            word: word.into(),
            word_valid: true,
            review: review.into(),
            model_claimed_score: None,
            prompt_tokens: 0,
            completion_tokens: 0,
            latency_ms: 0,
            retries_used: 0,
        }
    }

    const FLEXIBLE_REVIEW: &str = "I found the software to be quite flexible in adapting to my needs. However, sometimes the various options can feel overwhelming.";

    #[test]
    fn complete_scoring() {
        let p = ScriptedProvider::new(vec![ScriptLine::new(
            "Flexible,0.85,high,\"Adaptable and pleasant, with minor friction.\"",
            200,
            40,
        )]);
        let scorer = Scorer::new(&p, "gpt-4o-mini", ScoringPrompt::Complete);
        let s = scorer.score_complete(&gen_record(1, "Flexible", 0.60, FLEXIBLE_REVIEW)).unwrap();
        assert_eq!(s.eval.evaluated_score, 0.85);
        assert_eq!(s.eval.abs_diff, (0.60f64 - 0.85).abs());
        assert!((s.eval.abs_diff - 0.25).abs() < 1e-12);
        assert_eq!(s.eval.confidence, Confidence::High);
        assert_eq!(s.eval.explanation, "Adaptable and pleasant, with minor friction.");
        assert_eq!(s.eval.scoring_model, "gpt-4o-mini");
        assert_eq!(s.eval.base_score, None);
        let req = &p.requests()[0];
        assert_eq!(req.temperature, 0.0);
        assert_eq!(req.system_prompt, prompts::SCORE_COMPLETE);
        assert!(req.user_prompt.starts_with("Word: Flexible\nReview: "));
    }

    #[test]
    fn exact_match_has_zero_diff() {
        let p = ScriptedProvider::new(vec![ScriptLine::new("Dated,0.40,medium,Old but fine", 1, 1)]);
        let s = Scorer::new(&p, "m", ScoringPrompt::Complete)
            .score_complete(&gen_record(1, "Dated", 0.40, "It works."))
            .unwrap();
        assert_eq!(s.eval.abs_diff, 0.0);
    }

    #[test]
    fn clamps_out_of_range_scores() {
        let p = ScriptedProvider::new(vec![ScriptLine::new("word,1.37,high,too keen", 1, 1)]);
        let s = Scorer::new(&p, "m", ScoringPrompt::Complete)
            .score_complete(&gen_record(1, "Fun", 0.9, "Great fun."))
            .unwrap();
        assert_eq!(s.eval.evaluated_score, 1.0);
        assert!(s.eval.score_clamped);
        assert!((s.eval.abs_diff - 0.1).abs() < 1e-12);
    }

    #[test]
    fn base_adjust_scoring() {
        let p = ScriptedProvider::new(vec![
            ScriptLine::new(
                "Undesirable,0.10,0.80,medium,\"The word 'undesirable' has a low original sentiment score, as it typically conveys a negative connotation.\"",
                1,
                1,
            ),
            ScriptLine::new("Fast,0.70,0.70,high,Quick", 1, 1),
        ]);
        let scorer = Scorer::new(&p, "gpt-4o-mini", ScoringPrompt::BaseAdjust);
        let s = scorer
            .score_base_adjust(&gen_record(1, "Undesirable", 0.10, "I found my experience with the product to be quite disappointing."))
            .unwrap();
        assert_eq!(s.eval.base_score, Some(0.10));
        assert_eq!(s.eval.adjusted_score, Some(0.80));
        assert_eq!(s.eval.evaluated_score, 0.80);
        assert!((s.adjustment().unwrap() - 0.70).abs() < 1e-12);
        assert!(p.requests()[0].user_prompt.starts_with("Undesirable: I found"));

        let same = scorer.score_base_adjust(&gen_record(2, "Fast", 0.7, "Quick.")).unwrap();
        assert_eq!(same.adjustment(), Some(0.0));
    }

    #[test]
    fn base_adjust_rejects_four_columns() {
        let p = ScriptedProvider::new((0..4).map(|_| ScriptLine::new("Fast,0.70,high,Quick", 1, 1)).collect());
        let err = Scorer::new(&p, "m", ScoringPrompt::BaseAdjust)
            .score_base_adjust(&gen_record(7, "Fast", 0.7, "Quick."))
            .unwrap_err();
        assert!(matches!(err, ScoringError::UnparseableCsvReply { id: 7, attempts: 4, .. }));
    }

    #[test]
    fn lenient_csv_parsing() {
        let reply = "Here is the csv:\n```csv\nword,sentiment score,confidence,explanation\nDated, 0.30, Medium, \"Feels old, but works\"\n```";
        let c = parse_csv_reply(reply, 1).unwrap();
        assert_eq!(c.word, "Dated");
        assert_eq!(c.scores, vec![0.30]);
        assert_eq!(c.confidence, Confidence::Medium);
        assert_eq!(c.explanation, "Feels old, but works");

        let unquoted = parse_csv_reply("Fast,0.9,high,Quick, light, and clean", 1).unwrap();
        assert_eq!(unquoted.explanation, "Quick, light, and clean");
        assert!(parse_csv_reply("no csv here", 1).is_none());
        assert!(parse_csv_reply("Fast,high,0.9,x", 1).is_none());
    }

    #[test]
    fn flags_are_inclusive_and_sorted() {
        let mk = |id, base: f64, adj: f64| ScoredRecord {
            record: gen_record(id, "w", 0.5, "r"),
            eval: Evaluation {
                evaluated_score: adj,
                base_score: Some(base),
                adjusted_score: Some(adj),
                confidence: Confidence::High,
                explanation: String::new(),
                abs_diff: (0.5 - adj).abs(),
                scoring_model: "m".into(),
                scoring_prompt: ScoringPrompt::BaseAdjust,
                score_clamped: false,
            },
        };
        let recs = vec![mk(1, 0.10, 0.59), mk(2, 0.10, 0.60), mk(3, 0.10, 0.90), mk(4, 0.3, 0.3)];
        let flagged = flag_large_adjustments(&recs, DEFAULT_FLAG_THRESHOLD).unwrap();
        assert_eq!(flagged.iter().map(|r| r.record.id).collect::<Vec<_>>(), vec![3, 2]);

        let zeros = vec![mk(1, 0.2, 0.2), mk(2, 0.9, 0.9)];
        assert!(flag_large_adjustments(&zeros, 0.5).unwrap().is_empty());

        let mut complete = mk(9, 0.1, 0.9);
        complete.eval.scoring_prompt = ScoringPrompt::Complete;
        assert!(matches!(
            flag_large_adjustments(&[complete], 0.5),
            Err(ScoringError::WrongPromptKind(9))
        ));
    }

    #[test]
    fn rescoring_is_deterministic() {
        let script = || {
            ScriptedProvider::new(vec![
                ScriptLine::new("A,0.2,low,x", 1, 1),
                ScriptLine::new("B,0.9,high,y", 1, 1),
            ])
        };
        let recs = vec![gen_record(1, "A", 0.1, "a"), gen_record(2, "B", 0.8, "b")];
        let (p1, p2) = (script(), script());
        let a = Scorer::new(&p1, "m", ScoringPrompt::Complete).score_all(&recs, 4).unwrap().0;
        let b = Scorer::new(&p2, "m", ScoringPrompt::Complete).score_all(&recs, 4).unwrap().0;
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn quoted_explanations_round_trip(expl in "[a-zA-Z ,\"']{0,40}") {
            let mut w = csv::WriterBuilder::new().from_writer(vec![]);
            w.write_record(["Fast", "0.50", "high", expl.as_str()]).unwrap();
            let line = String::from_utf8(w.into_inner().unwrap()).unwrap();
            let parsed = parse_csv_reply(&line, 1).unwrap();
            proptest::prop_assert_eq!(parsed.explanation, expl.trim());
        }
    }
}
