//! Token, time and price accounting.
//!
//! Prices are held as whole micro-dollars per million tokens and costs as
//! pico-dollars, so tallies are exact integers and projections are exact
//! rationals. Floating point only appears at the reporting boundary.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::GenerationRecord;

const PICO_PER_DOLLAR: u128 = 1_000_000_000_000;
const PICO_PER_CENT: u128 = PICO_PER_DOLLAR / 100;
const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("record {id} has no token usage")]
    MissingUsage { id: u64 },
    #[error("cannot project from a report with zero rows")]
    ZeroRows,
    #[error("invalid price {value} for {model}: prices must be finite and non-negative")]
    InvalidPrice { model: String, value: f64 },
    #[error("unknown price preset {0:?}")]
    UnknownPreset(String),
}

/// Dollar prices per million input and output tokens for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSheet {
    pub model: String,
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl PriceSheet {
    pub fn new(model: impl Into<String>, input_per_million: f64, output_per_million: f64) -> Result<Self, CostError> {
        let sheet = Self {
            model: model.into(),
            input_per_million,
            output_per_million,
        };
        sheet.validate()?;
        Ok(sheet)
    }

    /// October 2024 list prices.
    pub fn gpt_4o_mini() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            input_per_million: 0.15,
            output_per_million: 0.60,
        }
    }

    pub fn gpt_4o() -> Self {
        Self {
            model: "gpt-4o".into(),
            input_per_million: 2.50,
            output_per_million: 10.00,
        }
    }

    pub fn preset(name: &str) -> Result<Self, CostError> {
        match name.trim().to_ascii_lowercase().as_str() {
            "gpt-4o-mini" | "mini" => Ok(Self::gpt_4o_mini()),
            "gpt-4o" | "4o" => Ok(Self::gpt_4o()),
            _ => Err(CostError::UnknownPreset(name.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        for value in [self.input_per_million, self.output_per_million] {
            if !value.is_finite() || value < 0.0 {
                return Err(CostError::InvalidPrice {
                    model: self.model.clone(),
                    value,
                });
            }
        }
        Ok(())
    }

    fn micro(v: f64) -> u128 {
        (v * 1e6).round() as u128
    }

    /// Exact cost in pico-dollars.
    pub fn cost_pico(&self, input_tokens: u64, output_tokens: u64) -> u128 {
        input_tokens as u128 * Self::micro(self.input_per_million)
            + output_tokens as u128 * Self::micro(self.output_per_million)
    }
}

impl Default for PriceSheet {
    fn default() -> Self {
        Self::gpt_4o_mini()
    }
}

fn pico_to_dollars(pico: Ratio<u128>) -> f64 {
    *pico.numer() as f64 / *pico.denom() as f64 / PICO_PER_DOLLAR as f64
}

/// Rounds half up to whole cents.
fn round_to_cents(pico: Ratio<u128>) -> u128 {
    let cents = pico / PICO_PER_CENT;
    (cents + Ratio::new(1, 2)).floor().to_integer()
}

/// "$1,234.56"-style display of a pico-dollar amount.
pub fn display_dollars(pico: Ratio<u128>) -> String {
    let cents = round_to_cents(pico);
    let whole = (cents / 100).to_string();
    let mut grouped = String::new();
    for (i, c) in whole.chars().enumerate() {
        if i > 0 && (whole.len() - i).is_multiple_of(3) {
            grouped.push(',');
        }
        grouped.push(c);
    }
    format!("${grouped}.{:02}", cents % 100)
}

/// Usage and price of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model: String,
    pub rows: u64,
    pub wall_time_ms: u64,
    pub wall_time_s: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_tokens: u64,
    pub price_pico: u128,
    /// Price rounded to four decimals.
    pub price_dollars: f64,
    pub price_display: String,
    pub per_row_time_s: f64,
    pub per_row_price: f64,
    pub prices: PriceSheet,
}

impl CostReport {
    pub fn from_counts(rows: u64, wall_time_ms: u64, input_tokens: u64, output_tokens: u64, prices: &PriceSheet) -> Self {
        let price_pico = prices.cost_pico(input_tokens, output_tokens);
        let exact = Ratio::from_integer(price_pico);
        let per_row = |v: f64| if rows == 0 { 0.0 } else { v / rows as f64 };
        let dollars = pico_to_dollars(exact);
        Self {
            model: prices.model.clone(),
            rows,
            wall_time_ms,
            wall_time_s: wall_time_ms as f64 / 1000.0,
            input_tokens,
            output_tokens,
            total_tokens: input_tokens + output_tokens,
            price_pico,
            price_dollars: (dollars * 1e4).round() / 1e4,
            price_display: display_dollars(exact),
            per_row_time_s: per_row(wall_time_ms as f64 / 1000.0),
            per_row_price: per_row(dollars),
            prices: prices.clone(),
        }
    }

    /// Same usage under a different price sheet.
    pub fn repriced(&self, prices: &PriceSheet) -> Self {
        Self::from_counts(self.rows, self.wall_time_ms, self.input_tokens, self.output_tokens, prices)
    }

    pub fn price_exact(&self) -> Ratio<u128> {
        Ratio::from_integer(self.price_pico)
    }
}

/// Sums usage over `records`. Wall time is the sum of per-record latencies.
pub fn tally(records: &[GenerationRecord], prices: &PriceSheet) -> Result<CostReport, CostError> {
    prices.validate()?;
    let (mut input, mut output, mut wall) = (0u64, 0u64, 0u64);
    for r in records {
        if r.prompt_tokens == 0 && r.completion_tokens == 0 {
            return Err(CostError::MissingUsage { id: r.id });
        }
        input += r.prompt_tokens;
        output += r.completion_tokens;
        wall += r.latency_ms;
    }
    Ok(CostReport::from_counts(records.len() as u64, wall, input, output, prices))
}

/// Linear extrapolation of a report to another row count.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub base_rows: u64,
    pub target_rows: u64,
    /// Exact token-derived price in pico-dollars.
    pub token_basis: Ratio<u128>,
    /// Price from the cents-rounded per-report price, in pico-dollars.
    pub rounded_basis: Ratio<u128>,
    pub wall_time_ms: Ratio<u128>,
    pub alt: Option<(PriceSheet, Ratio<u128>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub base_rows: u64,
    pub target_rows: u64,
    pub token_basis_dollars: f64,
    pub token_basis_display: String,
    pub rounded_basis_dollars: f64,
    pub rounded_basis_display: String,
    pub wall_time_s: f64,
    pub wall_time_days: f64,
    pub alt_model: Option<String>,
    pub alt_token_basis_dollars: Option<f64>,
    pub alt_token_basis_display: Option<String>,
}

impl Projection {
    pub fn summary(&self) -> ProjectionSummary {
        let wall_s = *self.wall_time_ms.numer() as f64 / *self.wall_time_ms.denom() as f64 / 1000.0;
        ProjectionSummary {
            base_rows: self.base_rows,
            target_rows: self.target_rows,
            token_basis_dollars: pico_to_dollars(self.token_basis),
            token_basis_display: display_dollars(self.token_basis),
            rounded_basis_dollars: pico_to_dollars(self.rounded_basis),
            rounded_basis_display: display_dollars(self.rounded_basis),
            wall_time_s: wall_s,
            wall_time_days: wall_s / SECONDS_PER_DAY,
            alt_model: self.alt.as_ref().map(|(s, _)| s.model.clone()),
            alt_token_basis_dollars: self.alt.as_ref().map(|(_, p)| pico_to_dollars(*p)),
            alt_token_basis_display: self.alt.as_ref().map(|(_, p)| display_dollars(*p)),
        }
    }
}

pub fn project(report: &CostReport, target_rows: u64, alt_prices: Option<&PriceSheet>) -> Result<Projection, CostError> {
    if report.rows == 0 {
        return Err(CostError::ZeroRows);
    }
    if let Some(alt) = alt_prices {
        alt.validate()?;
    }
    let scale = Ratio::new(target_rows as u128, report.rows as u128);
    let rounded = round_to_cents(report.price_exact()) * PICO_PER_CENT;
    Ok(Projection {
        base_rows: report.rows,
        target_rows,
        token_basis: report.price_exact() * scale,
        rounded_basis: Ratio::from_integer(rounded) * scale,
        wall_time_ms: Ratio::from_integer(report.wall_time_ms as u128) * scale,
        alt: alt_prices.map(|s| (s.clone(), report.repriced(s).price_exact() * scale)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn published_rows_display_to_cents() {
        let mini = PriceSheet::gpt_4o_mini();
        let wr = CostReport::from_counts(1000, 1_531_000, 126_814, 62_462, &mini);
        assert_eq!(wr.price_pico, 56_499_300_000);
        assert_eq!(wr.price_dollars, 0.0565);
        assert_eq!(wr.price_display, "$0.06");
        let sw = CostReport::from_counts(1000, 3_084_000, 96_824, 161_074, &mini);
        assert_eq!(sw.price_dollars, 0.1112);
        assert_eq!(sw.price_display, "$0.11");
        assert_eq!(sw.total_tokens, 96_824 + 161_074);
    }

    #[test]
    fn zero_tokens_cost_nothing() {
        let r = CostReport::from_counts(1, 0, 0, 0, &PriceSheet::default());
        assert_eq!(r.price_pico, 0);
        assert_eq!(r.price_display, "$0.00");
    }

    #[test]
    fn million_row_projection() {
        let wr = CostReport::from_counts(1000, 1_531_000, 126_814, 62_462, &PriceSheet::gpt_4o_mini());
        let p = project(&wr, 1_000_000, Some(&PriceSheet::gpt_4o())).unwrap().summary();
        assert!(close(p.token_basis_dollars, 56.4993, 1e-9));
        assert_eq!(p.rounded_basis_display, "$60.00");
        assert!(close(p.wall_time_days, 17.7199, 1e-4));
        let alt = p.alt_token_basis_dollars.unwrap();
        assert!((900.0..1000.0).contains(&alt), "{alt}");
    }

    #[test]
    fn identity_projection() {
        let r = CostReport::from_counts(1000, 2000, 5, 7, &PriceSheet::gpt_4o());
        let p = project(&r, 1000, None).unwrap();
        assert_eq!(p.token_basis, r.price_exact());
        assert_eq!(p.wall_time_ms, Ratio::from_integer(2000));
        assert_eq!(project(&CostReport::from_counts(0, 0, 0, 0, &PriceSheet::default()), 5, None), Err(CostError::ZeroRows));
    }

    #[test]
    fn mini_is_six_percent_of_large() {
        let mini = PriceSheet::gpt_4o_mini();
        let large = PriceSheet::gpt_4o();
        let input_only = Ratio::new(mini.cost_pico(1_000_000, 0), large.cost_pico(1_000_000, 0));
        let output_only = Ratio::new(mini.cost_pico(0, 1_000_000), large.cost_pico(0, 1_000_000));
        assert_eq!(input_only, Ratio::new(6, 100));
        assert_eq!(output_only, Ratio::new(6, 100));
    }

    #[test]
    fn tally_requires_usage() {
        use crate::synth::MethodKind;
        let mut rec = GenerationRecord {
            id: 4,
            method: MethodKind::ReviewWord,
            target_score: 0.5,
            offered_words: None,
            word: "Fast".into(),
            word_valid: true,
            review: "Quick.".into(),
            model_claimed_score: None,
            prompt_tokens: 0,
            completion_tokens: 0,
            latency_ms: 10,
            retries_used: 0,
        };
        assert_eq!(tally(&[rec.clone()], &PriceSheet::default()), Err(CostError::MissingUsage { id: 4 }));
        rec.prompt_tokens = 100;
        rec.completion_tokens = 50;
        let r = tally(&[rec.clone(), rec], &PriceSheet::default()).unwrap();
        assert_eq!((r.input_tokens, r.output_tokens, r.wall_time_ms), (200, 100, 20));
    }

    #[test]
    fn rejects_negative_prices() {
        assert!(PriceSheet::new("x", -0.1, 1.0).is_err());
        assert!(PriceSheet::new("x", f64::NAN, 1.0).is_err());
        assert!(PriceSheet::preset("gpt-5").is_err());
    }

    #[test]
    fn dollar_grouping() {
        assert_eq!(display_dollars(Ratio::from_integer(1_234_567 * PICO_PER_CENT)), "$12,345.67");
        assert_eq!(display_dollars(Ratio::from_integer(PICO_PER_CENT / 2)), "$0.01");
    }

    proptest! {
        #[test]
        fn projection_is_linear(rows in 1u64..5000, input in 0u64..10_000_000, output in 0u64..10_000_000,
                                wall in 0u64..10_000_000, target in 0u64..2_000_000, k in 1u64..1000) {
            let r = CostReport::from_counts(rows, wall, input, output, &PriceSheet::gpt_4o_mini());
            let one = project(&r, target, Some(&PriceSheet::gpt_4o())).unwrap();
            let many = project(&r, target * k, Some(&PriceSheet::gpt_4o())).unwrap();
            let k = Ratio::from_integer(k as u128);
            prop_assert_eq!(many.token_basis, one.token_basis * k);
            prop_assert_eq!(many.rounded_basis, one.rounded_basis * k);
            prop_assert_eq!(many.wall_time_ms, one.wall_time_ms * k);
            prop_assert_eq!(many.alt.unwrap().1, one.alt.unwrap().1 * k);
        }

        #[test]
        fn price_follows_formula(input in 0u64..1_000_000_000, output in 0u64..1_000_000_000) {
            let r = CostReport::from_counts(1, 0, input, output, &PriceSheet::gpt_4o());
            let expected = input as f64 * 2.5 / 1e6 + output as f64 * 10.0 / 1e6;
            prop_assert!((pico_to_dollars(r.price_exact()) - expected).abs() <= 1e-9 * expected.max(1.0));
        }
    }
}
