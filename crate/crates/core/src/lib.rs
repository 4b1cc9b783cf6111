//! Synthetic product-desirability review datasets: generation through a
//! chat-completion provider, sentiment scoring, and audits of alignment,
//! text diversity, word coverage and cost.

pub mod alignment;
pub mod costing;
pub mod datastore;
pub mod diversity;
pub mod pool;
pub mod prompts;
pub mod provider;
pub mod scoring;
pub mod synth;
pub mod wordlist;

pub use alignment::{compute_alignment, AlignmentReport, WordUsageReport};
pub use costing::{CostReport, PriceSheet};
pub use datastore::{DatasetRow, Format, RunManifest};
pub use diversity::{Corpus, DiversityReport};
pub use provider::{ChatRequest, ChatResponse, Provider, ProviderConfig, ProviderError};
pub use scoring::{Evaluation, ScoredRecord, Scorer, ScoringPrompt};
pub use synth::{GenerationRecord, Generator, MethodKind};
pub use wordlist::WordList;
