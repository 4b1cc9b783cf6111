//! Parsing of generation replies.

use crate::wordlist::WordList;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    pub word: Option<String>,
    pub review: String,
    pub score: Option<f64>,
}

/// Parses a generation reply.
///
/// A reply using the `|||`-delimited format requested by the prompt suffix
/// must parse in that format. Otherwise labelled lines are tried, then a
/// single `|` delimiter, and finally a heuristic (first list member found in
/// the text, longest remaining line as review).
pub fn parse_generation(text: &str, list: &WordList) -> Option<ParsedReply> {
    let text = strip_fences(text.trim());
    if text.is_empty() {
        return None;
    }
    if text.contains("|||") {
        return labelled(text.split("|||"));
    }
    if let Some(p) = labelled(text.lines()) {
        return Some(p);
    }
    if let Some((word, review)) = text.split_once('|') {
        let word = clean(word);
        let review = clean(review);
        if !word.is_empty() && !review.is_empty() && !review.contains('|') {
            return Some(ParsedReply {
                word: Some(strip_label(&word).to_string()),
                review: strip_label(&review).to_string(),
                score: None,
            });
        }
    }
    heuristic(text, list)
}

fn labelled<'a>(parts: impl Iterator<Item = &'a str>) -> Option<ParsedReply> {
    let mut word = None;
    let mut review = None;
    let mut score = None;
    for part in parts {
        let part = clean(part);
        let Some((label, value)) = part.split_once(':') else {
            continue;
        };
        let value = clean(value);
        match clean(label).to_ascii_lowercase().as_str() {
            "word" | "chosen word" => word = Some(value),
            "review" | "comment" | "explanation" => review = Some(value),
            "score" | "sentiment score" | "sentiment" => score = first_unit_number(&value),
            _ => {}
        }
    }
    let review = review.filter(|r| !r.is_empty())?;
    Some(ParsedReply {
        word: word.filter(|w| !w.is_empty()),
        review,
        score,
    })
}

fn heuristic(text: &str, list: &WordList) -> Option<ParsedReply> {
    let lower = text.to_lowercase();
    let mut best: Option<(usize, usize, &str)> = None;
    for w in list.words() {
        let needle = w.text.to_lowercase();
        if let Some(pos) = find_word(&lower, &needle) {
            let better = match best {
                None => true,
                Some((p, len, _)) => pos < p || (pos == p && needle.len() > len),
            };
            if better {
                best = Some((pos, needle.len(), &w.text));
            }
        }
    }
    let word = best.map(|(_, _, w)| w.to_string());
    let review = text
        .lines()
        .map(|l| strip_label(&clean(l)).to_string())
        .filter(|l| word.as_deref().is_none_or(|w| !l.eq_ignore_ascii_case(w)))
        .max_by_key(|l| l.chars().count())
        .filter(|l| !l.is_empty())?;
    Some(ParsedReply {
        word,
        score: first_unit_number(text),
        review,
    })
}

/// Byte offset of `needle` in `hay` at word boundaries.
fn find_word(hay: &str, needle: &str) -> Option<usize> {
    let mut start = 0;
    while let Some(off) = hay[start..].find(needle) {
        let pos = start + off;
        let end = pos + needle.len();
        let before_ok = hay[..pos].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = hay[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return Some(pos);
        }
        start = pos + needle.chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// First decimal number in `s` lying in `[0, 1]`, rounded to two places.
pub fn first_unit_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let starts_number = bytes[i].is_ascii_digit()
            || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        let glued = i > 0 && (bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'.');
        if starts_number && !glued {
            let mut j = i;
            let mut seen_dot = false;
            while j < bytes.len() && (bytes[j].is_ascii_digit() || (bytes[j] == b'.' && !seen_dot)) {
                seen_dot |= bytes[j] == b'.';
                j += 1;
            }
            let lit = s[i..j].trim_end_matches('.');
            if let Ok(v) = lit.parse::<f64>() {
                if (0.0..=1.0).contains(&v) {
                    return Some(round2(v));
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn strip_fences(s: &str) -> &str {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("```") {
        let rest = rest.split_once('\n').map_or("", |(_, r)| r);
        return rest.trim_end().trim_end_matches("```").trim();
    }
    s
}

fn strip_label(s: &str) -> &str {
    for label in ["word:", "review:", "comment:"] {
        if s.len() >= label.len() && s[..label.len()].eq_ignore_ascii_case(label) {
            return s[label.len()..].trim();
        }
    }
    s
}

fn clean(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c == '*' || c == '"' || c == '“' || c == '”' || c == '`')
        .trim()
        .to_string()
}
