//! Run configuration: defaults, then the TOML file, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pdt_synth::datastore::{Format, ReadOptions};
use pdt_synth::prompts::DEFAULT_PRODUCT;
use pdt_synth::synth::GenSettings;
use pdt_synth::{MethodKind, PriceSheet, ProviderConfig, ScoringPrompt};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub method: Option<MethodKind>,
    pub count: usize,
    pub seed: u64,
    pub product: String,
    /// Word list file; the built-in list when unset.
    pub word_list: Option<PathBuf>,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let s = GenSettings::default();
        Self {
            method: None,
            count: 1000,
            seed: 0,
            product: DEFAULT_PRODUCT.into(),
            word_list: None,
            model: s.model,
            temperature: s.temperature,
            max_output_tokens: s.max_output_tokens,
            output: None,
            format: None,
        }
    }
}

impl GenerationConfig {
    pub fn settings(&self) -> GenSettings {
        GenSettings {
            model: self.model.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            product: self.product.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub model: String,
    pub prompt: ScoringPrompt,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub output: Option<PathBuf>,
    /// Base+Adjust adjustments at or above this are reported.
    pub flag_threshold: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            prompt: ScoringPrompt::Complete,
            temperature: 0.0,
            max_output_tokens: 512,
            output: None,
            flag_threshold: pdt_synth::scoring::DEFAULT_FLAG_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessConfig {
    pub out_dir: PathBuf,
    pub skip_hs: bool,
    pub top_k: usize,
    pub prefix_tokens: usize,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("assessment"),
            skip_hs: false,
            top_k: 5,
            prefix_tokens: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub target_rows: u64,
    pub alt_prices: Option<PriceSheet>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            target_rows: 1_000_000,
            alt_prices: Some(PriceSheet::gpt_4o()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scripted provider file; replaces the live endpoint when set.
    pub mock: Option<PathBuf>,
    pub provider: ProviderConfig,
    pub generation: GenerationConfig,
    pub scoring: ScoringConfig,
    pub prices: PriceSheet,
    pub projection: ProjectionConfig,
    pub assess: AssessConfig,
    /// Header aliases for datasets produced elsewhere, as
    /// `"External Name" = "column"`.
    pub columns: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.provider.validate()?;
        self.prices.validate()?;
        if let Some(alt) = &self.projection.alt_prices {
            alt.validate()?;
        }
        if !(0.0..=2.0).contains(&self.generation.temperature) || !(0.0..=2.0).contains(&self.scoring.temperature) {
            return Err(ConfigError("temperatures must lie in [0, 2]".into()).into());
        }
        if !(0.0..=1.0).contains(&self.scoring.flag_threshold) {
            return Err(ConfigError("flag_threshold must lie in [0, 1]".into()).into());
        }
        Ok(())
    }

    pub fn read_options(&self, default_method: Option<MethodKind>) -> ReadOptions {
        ReadOptions {
            aliases: self.columns.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            default_method,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Invalid configuration or flag combination.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}
