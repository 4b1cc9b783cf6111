//! The three generation methods and batch orchestration.

pub mod parse;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use chrono::Utc;
use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::RunManifest;
use crate::pool::{self, GiveUp, StallGuard};
use crate::prompts::{self, PromptRecord};
use crate::provider::{ChatRequest, ChatResponse, Provider, ProviderError};
use crate::wordlist::{PdtWord, WordList};
use parse::{parse_generation, round2};

/// Words offered per Word+Review request.
pub const OFFERED_WORDS: usize = 10;
/// Resends allowed for an out-of-list word.
pub const MAX_WORD_RETRIES: u32 = 3;
/// Resends allowed for a reply that cannot be parsed.
pub const MAX_PARSE_RETRIES: u32 = 3;
/// Consecutive failed records after which a batch gives up.
pub const STALL_LIMIT: u32 = 10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("reply could not be parsed after {attempts} attempts: {last:?}")]
    UnparseableReply { attempts: u32, last: String },
    #[error("target score {0} outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("pipeline stalled after {failures} consecutive failures; last: {last}")]
    PipelineStalled { failures: u32, last: String },
    #[error(transparent)]
    WordList(#[from] crate::wordlist::WordListError),
}

impl SynthError {
    fn is_fatal(&self) -> bool {
        match self {
            SynthError::Provider(e) => e.is_fatal(),
            SynthError::UnparseableReply { .. } => false,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    WordReview,
    ReviewWord,
    SupplyWord,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [MethodKind::WordReview, MethodKind::ReviewWord, MethodKind::SupplyWord];

    pub fn slug(self) -> &'static str {
        match self {
            MethodKind::WordReview => "word-review",
            MethodKind::ReviewWord => "review-word",
            MethodKind::SupplyWord => "supply-word",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MethodKind::WordReview => "Word+Review",
            MethodKind::ReviewWord => "Review+Word",
            MethodKind::SupplyWord => "Supply-Word",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "wordreview" => Ok(MethodKind::WordReview),
            "reviewword" => Ok(MethodKind::ReviewWord),
            "supplyword" => Ok(MethodKind::SupplyWord),
            _ => Err(format!("unknown method {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: u64,
    pub method: MethodKind,
    pub target_score: f64,
    pub offered_words: Option<Vec<String>>,
    pub word: String,
    pub word_valid: bool,
    pub review: String,
    pub model_claimed_score: Option<f64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub retries_used: u32,
}

impl GenerationRecord {
    /// Checks the per-method shape constraints.
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.target_score) {
            return Err(format!("record {}: target_score {} outside [0,1]", self.id, self.target_score));
        }
        if self.review.trim().is_empty() {
            return Err(format!("record {}: empty review", self.id));
        }
        match self.method {
            MethodKind::WordReview => {
                if self.offered_words.as_ref().map(Vec::len) != Some(OFFERED_WORDS) {
                    return Err(format!("record {}: Word+Review needs {OFFERED_WORDS} offered words", self.id));
                }
            }
            MethodKind::SupplyWord => {
                if self.model_claimed_score != Some(self.target_score) {
                    return Err(format!("record {}: claimed score must equal target", self.id));
                }
            }
            MethodKind::ReviewWord => {}
        }
        Ok(())
    }
}

/// Model settings for generation requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSettings {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub product: String,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            temperature: 1.0,
            max_output_tokens: 1024,
            product: prompts::DEFAULT_PRODUCT.into(),
        }
    }
}

/// Accumulated cost of one record across resends.
#[derive(Debug, Default)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
    latency_ms: u64,
    resends: u32,
}

impl Usage {
    fn add(&mut self, r: &ChatResponse) {
        self.prompt_tokens += r.prompt_tokens;
        self.completion_tokens += r.completion_tokens;
        self.latency_ms += r.latency_ms;
    }
}

struct Outcome {
    word: String,
    word_valid: bool,
    review: String,
    score: Option<f64>,
    usage: Usage,
}

/// Produces records for one word list and provider.
pub struct Generator<'a, P: Provider + ?Sized> {
    pub list: &'a WordList,
    pub provider: &'a P,
    pub settings: GenSettings,
}

impl<'a, P: Provider + ?Sized> Generator<'a, P> {
    pub fn new(list: &'a WordList, provider: &'a P, settings: GenSettings) -> Self {
        Self { list, provider, settings }
    }

    fn request(&self, system: String, user: String) -> ChatRequest {
        ChatRequest {
            model: self.settings.model.clone(),
            system_prompt: system,
            user_prompt: user,
            temperature: self.settings.temperature,
            max_output_tokens: self.settings.max_output_tokens,
        }
    }

    /// Sends `req` until the reply parses and (when checked) names a list
    /// word. The identical request is resent each time.
    fn exchange(&self, req: &ChatRequest, check_word: bool, need_score: bool) -> Result<Outcome, SynthError> {
        let mut usage = Usage::default();
        let mut parse_failures = 0;
        let mut invalid = 0;
        loop {
            let resp = self.provider.complete(req)?;
            usage.add(&resp);
            let parsed = parse_generation(&resp.text, self.list)
                .filter(|p| !check_word || p.word.is_some())
                .filter(|p| !need_score || p.score.is_some());
            let Some(p) = parsed else {
                parse_failures += 1;
                if parse_failures > MAX_PARSE_RETRIES {
                    return Err(SynthError::UnparseableReply {
                        attempts: parse_failures,
                        last: resp.text,
                    });
                }
                debug!("unparseable reply, resending: {:?}", resp.text);
                usage.resends += 1;
                continue;
            };
            let raw_word = p.word.clone().unwrap_or_default();
            if check_word {
                if let Some(canon) = self.list.canonical(&raw_word) {
                    return Ok(Outcome {
                        word: canon.to_string(),
                        word_valid: true,
                        review: p.review,
                        score: p.score,
                        usage,
                    });
                }
                invalid += 1;
                if invalid > MAX_WORD_RETRIES {
                    warn!("word {raw_word:?} still not in list after {MAX_WORD_RETRIES} resends");
                    return Ok(Outcome {
                        word: raw_word.trim().to_string(),
                        word_valid: false,
                        review: p.review,
                        score: p.score,
                        usage,
                    });
                }
                debug!("word {raw_word:?} not in list, resending");
                usage.resends += 1;
                continue;
            }
            return Ok(Outcome {
                word: raw_word,
                word_valid: true,
                review: p.review,
                score: p.score,
                usage,
            });
        }
    }

    /// Offers ten sampled words with the target score; the model picks one and
    /// writes a review.
    pub fn gen_word_review<R: Rng + ?Sized>(&self, target: f64, rng: &mut R) -> Result<GenerationRecord, SynthError> {
        check_target(target)?;
        let offered = self.list.sample(OFFERED_WORDS.min(self.list.len()), rng)?;
        let system = format!(
            "{}\n\n{}",
            prompts::word_review(&self.settings.product, &WordList::joined(&offered)),
            prompts::WORD_REVIEW_FORMAT
        );
        let req = self.request(system, prompts::score_turn(target));
        let out = self.exchange(&req, true, false)?;
        Ok(record(MethodKind::WordReview, target, Some(&offered), out, None))
    }

    /// The model writes a review for the target score, then picks a word from
    /// the full list.
    pub fn gen_review_word(&self, target: f64) -> Result<GenerationRecord, SynthError> {
        check_target(target)?;
        let system = format!(
            "{}\n\n{}",
            prompts::review_word(&self.settings.product, &WordList::joined(self.list.words())),
            prompts::WORD_REVIEW_FORMAT
        );
        let req = self.request(system, prompts::score_turn(target));
        let out = self.exchange(&req, true, false)?;
        Ok(record(MethodKind::ReviewWord, target, None, out, None))
    }

    /// Supplies one random word; the model scores it and writes a matching
    /// review. The self-assigned score becomes the target.
    pub fn gen_supply_word<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GenerationRecord, SynthError> {
        let word = self.list.sample(1, rng)?.remove(0);
        let req = self.request(
            prompts::SUPPLY_WORD_FORMAT.to_string(),
            prompts::supply_word(&self.settings.product, &word.text),
        );
        let mut out = self.exchange(&req, false, true)?;
        let score = out.score.expect("exchange enforces a score");
        out.word = word.text;
        out.word_valid = true;
        Ok(record(MethodKind::SupplyWord, score, None, out, Some(score)))
    }

    fn generate_one(&self, method: MethodKind, seed: u64, id: u64) -> Result<GenerationRecord, SynthError> {
        let mut rng = record_rng(seed, id);
        let mut rec = match method {
            MethodKind::WordReview => {
                let target = draw_target(&mut rng);
                self.gen_word_review(target, &mut rng)?
            }
            MethodKind::ReviewWord => self.gen_review_word(draw_target(&mut rng))?,
            MethodKind::SupplyWord => self.gen_supply_word(&mut rng)?,
        };
        rec.id = id;
        Ok(rec)
    }

    pub fn prompt_record(&self, method: MethodKind) -> PromptRecord {
        let (template, suffix) = match method {
            MethodKind::WordReview => (prompts::word_review(&self.settings.product, "{word-list}"), prompts::WORD_REVIEW_FORMAT),
            MethodKind::ReviewWord => (prompts::review_word(&self.settings.product, "{word-list}"), prompts::WORD_REVIEW_FORMAT),
            MethodKind::SupplyWord => (prompts::supply_word(&self.settings.product, "{word}"), prompts::SUPPLY_WORD_FORMAT),
        };
        PromptRecord {
            version: prompts::PROMPTS_VERSION.into(),
            template,
            format_suffix: Some(suffix.into()),
        }
    }

    /// Generates `n` records with ids `1..=n`.
    ///
    /// Each record draws from its own random stream derived from `seed`, so
    /// the output does not depend on `parallelism`. Failed records are retried
    /// until [`STALL_LIMIT`] consecutive failures.
    pub fn run_batch(
        &self,
        method: MethodKind,
        n: usize,
        seed: u64,
        parallelism: usize,
    ) -> Result<(Vec<GenerationRecord>, RunManifest), SynthError> {
        if n == 0 {
            return Err(SynthError::EmptyBatch);
        }
        let workers = if self.provider.requires_sequential() { 1 } else { parallelism.max(1) };
        let started_at = Utc::now();
        let clock = Instant::now();
        let guard = StallGuard::new(STALL_LIMIT);
        info!("generating {n} {} records with {workers} worker(s)", method.label());

        let records = pool::map_ordered(n, workers, |i| {
            let id = i as u64 + 1;
            guard
                .run(|| self.generate_one(method, seed, id), SynthError::is_fatal)
                .map_err(|g| match g {
                    GiveUp::Fatal(e) => e,
                    GiveUp::Stalled { failures, last } => SynthError::PipelineStalled {
                        failures,
                        last: last.to_string(),
                    },
                })
        })?;

        let mut manifest = RunManifest::new("generate", started_at);
        manifest.method = Some(method);
        manifest.model = Some(self.settings.model.clone());
        manifest.prompts = vec![self.prompt_record(method)];
        manifest.seed = Some(seed);
        manifest.product = Some(self.settings.product.clone());
        manifest.temperature = Some(self.settings.temperature);
        manifest.word_list = Some(self.list.source().to_string());
        manifest.provider = Some(self.provider.name().to_string());
        manifest.parallelism = Some(workers);
        manifest.rows = records.len();
        for r in &records {
            manifest.prompt_tokens += r.prompt_tokens;
            manifest.completion_tokens += r.completion_tokens;
        }
        manifest.finish(clock.elapsed());
        Ok((records, manifest))
    }
}

fn check_target(target: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&target) {
        Ok(())
    } else {
        Err(SynthError::TargetOutOfRange(target))
    }
}

fn record(
    method: MethodKind,
    target: f64,
    offered: Option<&[PdtWord]>,
    out: Outcome,
    claimed: Option<f64>,
) -> GenerationRecord {
    GenerationRecord {
        id: 0,
        method,
        target_score: target,
        offered_words: offered.map(|ws| ws.iter().map(|w| w.text.clone()).collect()),
        word: out.word,
        word_valid: out.word_valid,
        review: out.review,
        model_claimed_score: claimed,
        prompt_tokens: out.usage.prompt_tokens,
        completion_tokens: out.usage.completion_tokens,
        latency_ms: out.usage.latency_ms,
        retries_used: out.usage.resends,
    }
}

/// Independent random stream for record `id` under `seed`.
pub fn record_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform target on [0, 1] at two-decimal resolution.
pub fn draw_target<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    round2(rng.random::<f64>())
}
