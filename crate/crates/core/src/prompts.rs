//! Prompt text for generation and scoring.
//!
//! The instruction templates are kept verbatim; the output-format suffixes
//! that make replies machine-parseable are stored separately so both can be
//! recorded in run manifests.

use serde::{Deserialize, Serialize};

/// Bumped whenever any template or suffix below changes.
pub const PROMPTS_VERSION: &str = "1";

pub const DEFAULT_PRODUCT: &str = "software product";

pub fn word_review(product: &str, words: &str) -> String {
    format!(
        "For a hypothetical {product}, you will produce hypothetical survey data that will be \
         comprised of the respondent picking a word from the following comma separated list that \
         describes their experience with the product, and then providing an explanation for the \
         word choice. I will give you a sentiment score between 0.0-1.0 and for that sentiment \
         number, you will select a word and produce a human like comment. Words: {words}"
    )
}

pub fn review_word(product: &str, words: &str) -> String {
    format!(
        "I will give you a sentiment score between 0.0-1.0. For that sentiment number, you will \
         produce a hypothetical product review for a hypothetical {product} that matches the \
         sentiment, and then pick a word from the following comma separated list that best matches \
         the meaning of the review. Words: {words}"
    )
}

pub fn supply_word(product: &str, word: &str) -> String {
    format!(
        "A hypothetical {product} has been described as: {word}. Provide a sentiment score for the \
         word between 0.00-1.00 (two decimal places) based on your implicit understanding of \
         sentiment. For the sentiment score, produce a hypothetical product review that captures \
         that sentiment and is appropriate for the chosen word. The review doesn't necessarily need \
         to include the chosen word and should capture the complex nuance of sentiment produced by \
         a human."
    )
}

pub const WORD_REVIEW_FORMAT: &str = "Respond on one line as: WORD: <word> ||| REVIEW: <review>";

pub const SUPPLY_WORD_FORMAT: &str =
    "Respond on one line as: SCORE: <0.00-1.00> ||| WORD: <word> ||| REVIEW: <review>";

/// User turn carrying the target score for the score-driven methods.
pub fn score_turn(target: f64) -> String {
    format!("Sentiment score: {target:.2}")
}

pub const SCORE_BASE_ADJUST: &str = "I will give a line containing a word choice followed by an \
explanation for the choice. For this line, provide a sentiment analysis score for each word between \
0.00-1.00 (to two decimal places) where is 0.00 is a completely negative sentiment and 1.00 is a \
completely positive sentiment, and then an adjusted score for the word based on the explanation. \
Include your confidence in the accuracy of that score (low, medium, high). Additionally, provide a \
carefully crafted contextual explanation for the sentiment score that is related to the meaning of \
the text. Please provide your response in a text-based csv format on one line, with columns for the \
word, original score, adjusted score, confidence, and explanation. Please do not provide any other \
response aside from the csv formatted data.";

pub const SCORE_COMPLETE: &str = "I will give a word describing a user's experience with a product \
followed by a full review. Based on your implicit understanding of sentiment, provide a sentiment \
score for the word and review between 0.00-1.00 inclusive (to two decimal places) where is 0.00 is a \
completely negative sentiment and 1.00 is a completely positive sentiment. Include your confidence \
in the accuracy of that score (low, medium, high). Additionally, provide a carefully crafted \
contextual explanation for the sentiment score that is related to the meaning of the text. Please \
provide your response in a text-based csv format on one line, with columns for the word, sentiment \
score, confidence, and explanation. Please do not provide any other response aside from the csv \
formatted data.";

/// Word and review as sent to the `Complete` scorer.
pub fn complete_turn(word: &str, review: &str) -> String {
    format!("Word: {word}\nReview: {review}")
}

/// Word and explanation on a single line, as the `Base+Adjust` prompt expects.
pub fn base_adjust_turn(word: &str, review: &str) -> String {
    let flat: Vec<&str> = review.split_whitespace().collect();
    format!("{word}: {}", flat.join(" "))
}

/// Prompt texts recorded in a run manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub version: String,
    pub template: String,
    pub format_suffix: Option<String>,
}
