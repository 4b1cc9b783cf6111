//! Agreement between target and evaluated scores, plus word and phrasing
//! usage over a dataset.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diversity::tokenize;
use crate::synth::GenerationRecord;
use crate::wordlist::WordList;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("length mismatch: {targets} targets vs {evaluated} evaluated scores")]
    LengthMismatch { targets: usize, evaluated: usize },
    #[error("no scores to compare")]
    Empty,
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub n: usize,
    pub bins: Vec<Bin>,
}

impl Histogram {
    fn from_counts(counts: Vec<usize>, label: impl Fn(usize) -> (String, f64, f64)) -> Self {
        let n = counts.iter().sum();
        let bins = counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| {
                let (label, lower, upper) = label(i);
                Bin {
                    label,
                    lower,
                    upper,
                    count,
                    percentage: if n == 0 { 0.0 } else { count as f64 * 100.0 / n as f64 },
                }
            })
            .collect();
        Self { n, bins }
    }

    /// Plot-ready `bin,percentage` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,percentage\n");
        for b in &self.bins {
            let _ = writeln!(out, "{},{}", b.label, b.percentage);
        }
        out
    }
}

/// Hundredths of a unit-interval value, rejecting anything outside [0, 1].
fn hundredths(values: &[f64]) -> Result<Vec<u32>, AlignmentError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if (0.0..=1.0).contains(&value) {
                Ok((value * 100.0).round() as u32)
            } else {
                Err(AlignmentError::OutOfRange { index, value })
            }
        })
        .collect()
}

const DIFF_BINS: usize = 21;

/// Bins absolute differences as 0, 0.01-0.05, 0.06-0.10, ..., 0.96-1.00
/// after rounding to two decimals. Upper bounds are inclusive.
pub fn diff_histogram(abs_diffs: &[f64]) -> Result<Histogram, AlignmentError> {
    let mut counts = vec![0; DIFF_BINS];
    for h in hundredths(abs_diffs)? {
        let bin = if h == 0 { 0 } else { (h as usize - 1) / 5 + 1 };
        counts[bin] += 1;
    }
    Ok(Histogram::from_counts(counts, |i| {
        if i == 0 {
            ("0".into(), 0.0, 0.0)
        } else {
            let lo = (i - 1) * 5 + 1;
            let hi = i * 5;
            (format!("{}-{}", cents(lo), cents(hi)), lo as f64 / 100.0, hi as f64 / 100.0)
        }
    }))
}

const SCORE_BINS: usize = 20;

/// Bins scores into 0.05-wide bins, the last one closed at 1.00.
pub fn score_histogram(scores: &[f64]) -> Result<Histogram, AlignmentError> {
    let mut counts = vec![0; SCORE_BINS];
    for h in hundredths(scores)? {
        counts[(h as usize / 5).min(SCORE_BINS - 1)] += 1;
    }
    Ok(Histogram::from_counts(counts, |i| {
        let lo = i * 5;
        let hi = lo + 5;
        (format!("{}-{}", cents(lo), cents(hi)), lo as f64 / 100.0, hi as f64 / 100.0)
    }))
}

fn cents(h: usize) -> String {
    format!("{}.{:02}", h / 100, h % 100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub n: usize,
    pub mean_target: f64,
    pub mean_evaluated: f64,
    /// Sample variances; `None` with fewer than two scores.
    pub var_target: Option<f64>,
    pub var_evaluated: Option<f64>,
    pub mad: f64,
    pub msd: f64,
    /// `None` when either series is constant.
    pub pearson: Option<f64>,
    /// Paired t over d = target - evaluated; `None` when d has no spread.
    pub t_stat: Option<f64>,
    pub diff_histogram: Histogram,
    pub score_histogram: Histogram,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sum of squared deviations from `m`.
fn ss(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Sample correlation; `None` for mismatched lengths or a constant series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx = ss(xs, mx);
    let syy = ss(ys, my);
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn compute_alignment(targets: &[f64], evaluated: &[f64]) -> Result<AlignmentReport, AlignmentError> {
    if targets.len() != evaluated.len() {
        return Err(AlignmentError::LengthMismatch {
            targets: targets.len(),
            evaluated: evaluated.len(),
        });
    }
    if targets.is_empty() {
        return Err(AlignmentError::Empty);
    }
    hundredths(targets)?;
    hundredths(evaluated)?;

    let n = targets.len();
    let nf = n as f64;
    let d: Vec<f64> = targets.iter().zip(evaluated).map(|(t, e)| t - e).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let mt = mean(targets);
    let me = mean(evaluated);
    let md = mean(&d);
    let sst = ss(targets, mt);
    let sse = ss(evaluated, me);
    let sample_var = |s: f64| (n > 1).then(|| s / (nf - 1.0));

    let pearson = pearson(targets, evaluated);
    let t_stat = sample_var(ss(&d, md))
        .map(f64::sqrt)
        .filter(|sd| *sd > 0.0)
        .map(|sd| md / (sd / nf.sqrt()));

    Ok(AlignmentReport {
        n,
        mean_target: mt,
        mean_evaluated: me,
        var_target: sample_var(sst),
        var_evaluated: sample_var(sse),
        mad: mean(&abs),
        msd: d.iter().map(|x| x * x).sum::<f64>() / nf,
        pearson,
        t_stat,
        diff_histogram: diff_histogram(&abs)?,
        score_histogram: score_histogram(evaluated)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordUsageReport {
    pub n: usize,
    pub list_size: usize,
    pub distinct_used: usize,
    pub coverage_fraction: f64,
    /// Every valid word used, most frequent first.
    pub counts: Vec<(String, usize)>,
    pub top_k: Vec<(String, usize)>,
    /// Words flagged invalid or not on the list, most frequent first.
    pub invalid_words: Vec<(String, usize)>,
    /// List words never chosen, in list order.
    pub unused: Vec<String>,
}

fn ranked(map: BTreeMap<String, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<_> = map.into_iter().collect();
    // BTreeMap order is alphabetical and the sort is stable
    v.sort_by_key(|e| std::cmp::Reverse(e.1));
    v
}

pub fn word_usage(records: &[GenerationRecord], list: &WordList, top_k: usize) -> WordUsageReport {
    let mut valid: BTreeMap<String, usize> = BTreeMap::new();
    let mut invalid: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        match list.canonical(&r.word).filter(|_| r.word_valid) {
            Some(w) => *valid.entry(w.to_string()).or_default() += 1,
            None => *invalid.entry(r.word.trim().to_string()).or_default() += 1,
        }
    }
    let unused = list
        .words()
        .iter()
        .filter(|w| !valid.contains_key(&w.text))
        .map(|w| w.text.clone())
        .collect();
    let counts = ranked(valid);
    WordUsageReport {
        n: records.len(),
        list_size: list.len(),
        distinct_used: counts.len(),
        coverage_fraction: if list.is_empty() { 0.0 } else { counts.len() as f64 / list.len() as f64 },
        top_k: counts.iter().take(top_k).cloned().collect(),
        counts,
        invalid_words: ranked(invalid),
        unused,
    }
}

/// Share of reviews opening with each leading token sequence, most shared
/// first. Reviews shorter than `prefix_token_count` use all their tokens.
pub fn prefix_redundancy<S: AsRef<str>>(reviews: &[S], prefix_token_count: usize) -> Vec<(String, f64)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in reviews {
        let tokens = tokenize(r.as_ref());
        let prefix = tokens[..tokens.len().min(prefix_token_count)].join(" ");
        *counts.entry(prefix).or_default() += 1;
    }
    let n = reviews.len() as f64;
    ranked(counts).into_iter().map(|(p, c)| (p, c as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::MethodKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identical_series() {
        let x = [0.1, 0.5, 0.9];
        let r = compute_alignment(&x, &x).unwrap();
        assert_eq!(r.mad, 0.0);
        assert_eq!(r.msd, 0.0);
        assert!(approx(r.pearson.unwrap(), 1.0, 1e-12));
        assert_eq!(r.t_stat, None);
    }

    #[test]
    fn paired_t_by_hand() {
        let t = [0.4, 0.5, 0.6];
        let e = [0.3, 0.3, 0.3];
        let r = compute_alignment(&t, &e).unwrap();
        assert!(approx(r.t_stat.unwrap(), 0.2 / (0.1 / 3f64.sqrt()), 1e-9));
        assert!(approx(r.t_stat.unwrap(), 3.4641, 1e-4));
        assert_eq!(r.pearson, None, "constant evaluated series");
        assert_eq!(r.var_evaluated, Some(0.0));
    }

    #[test]
    fn errors() {
        assert_eq!(
            compute_alignment(&[0.1], &[0.1, 0.2]),
            Err(AlignmentError::LengthMismatch { targets: 1, evaluated: 2 })
        );
        assert_eq!(compute_alignment(&[], &[]), Err(AlignmentError::Empty));
        assert!(matches!(compute_alignment(&[1.2], &[0.1]), Err(AlignmentError::OutOfRange { index: 0, .. })));
    }

    #[test]
    fn single_pair_has_no_variance() {
        let r = compute_alignment(&[0.2], &[0.3]).unwrap();
        assert_eq!((r.var_target, r.t_stat, r.pearson), (None, None, None));
        assert!(approx(r.mad, 0.1, 1e-12));
    }

    #[test]
    fn diff_bins() {
        let h = diff_histogram(&[0.0, 0.03, 0.07]).unwrap();
        assert_eq!(h.bins.len(), 21);
        assert_eq!([h.bins[0].count, h.bins[1].count, h.bins[2].count], [1, 1, 1]);
        assert_eq!(h.bins[1].label, "0.01-0.05");
        assert_eq!(h.bins[20].label, "0.96-1.00");

        let h = diff_histogram(&[0.05, 0.06]).unwrap();
        assert_eq!((h.bins[1].count, h.bins[2].count), (1, 1));

        let h = diff_histogram(&[0.0; 7]).unwrap();
        assert_eq!(h.bins[0].percentage, 100.0);

        // 0.1 - 0.05 is 0.05000000000000000277 in binary and must still bin as 0.05
        let h = diff_histogram(&[(0.1f64 - 0.05).abs(), 0.3 - 0.2]).unwrap();
        assert_eq!((h.bins[1].count, h.bins[2].count), (1, 1));
        assert!(diff_histogram(&[1.01]).is_err());
    }

    #[test]
    fn score_bins_close_at_one() {
        let h = score_histogram(&[0.0, 0.04, 0.05, 0.95, 1.0]).unwrap();
        assert_eq!(h.bins[0].count, 2);
        assert_eq!(h.bins[1].count, 1);
        assert_eq!(h.bins[19].count, 2);
        assert!(h.to_csv().starts_with("bin,percentage\n0.00-0.05,40\n"));
    }

    fn rec(word: &str, valid: bool) -> GenerationRecord {
        GenerationRecord {
            id: 1,
            method: MethodKind::ReviewWord,
            target_score: 0.5,
            offered_words: None,
            word: word.into(),
            word_valid: valid,
            review: "r".into(),
            model_claimed_score: None,
            prompt_tokens: 1,
            completion_tokens: 1,
            latency_ms: 0,
            retries_used: 0,
        }
    }

    #[test]
    fn usage_counts() {
        let list = WordList::builtin();
        let recs = vec![rec("Dated", true), rec("dated", true), rec("**Dated**", true)];
        let u = word_usage(&recs, &list, 5);
        assert_eq!(u.distinct_used, 1);
        assert_eq!(u.top_k, vec![("Dated".to_string(), 3)]);
        assert_eq!(u.unused.len(), 117);

        let recs = vec![
            rec("Slow", true),
            rec("Fast", true),
            rec("Slow", true),
            rec("Fast", true),
            rec("Busy", true),
            rec("Awesome", false),
        ];
        let u = word_usage(&recs, &list, 2);
        assert_eq!(u.top_k, vec![("Fast".to_string(), 2), ("Slow".to_string(), 2)]);
        assert_eq!(u.invalid_words, vec![("Awesome".to_string(), 1)]);
        let total: usize = u.counts.iter().chain(&u.invalid_words).map(|(_, c)| c).sum();
        assert_eq!(total, recs.len());
    }

    #[test]
    fn prefixes() {
        let reviews = ["I recently tried it.", "i recently bought it", "Great tool!", "Slow."];
        let p = prefix_redundancy(&reviews, 2);
        assert_eq!(p[0], ("i recently".to_string(), 0.5));
        let distinct = ["a b", "c d", "e f"];
        let p = prefix_redundancy(&distinct, 2);
        assert!(p.iter().all(|(_, f)| approx(*f, 1.0 / 3.0, 1e-12)));
    }

    /// Independent implementation: reverse order, compensated sums, textbook
    /// single-pass formulas.
    mod oracle {
        pub fn sum(xs: impl DoubleEndedIterator<Item = f64>) -> f64 {
            let (mut s, mut c) = (0.0f64, 0.0f64);
            for x in xs.rev() {
                let t = s + x;
                c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
                s = t;
            }
            s + c
        }

        pub fn stats(t: &[f64], e: &[f64]) -> (f64, f64, f64, f64, f64, f64, f64, f64) {
            let n = t.len() as f64;
            let st = sum(t.iter().copied());
            let se = sum(e.iter().copied());
            let stt = sum(t.iter().map(|x| x * x));
            let see = sum(e.iter().map(|x| x * x));
            let ste = sum(t.iter().zip(e).map(|(a, b)| a * b));
            let mad = sum(t.iter().zip(e).map(|(a, b)| (a - b).abs())) / n;
            let msd = sum(t.iter().zip(e).map(|(a, b)| (a - b) * (a - b))) / n;
            let vt = (stt - st * st / n) / (n - 1.0);
            let ve = (see - se * se / n) / (n - 1.0);
            let cov = (ste - st * se / n) / (n - 1.0);
            let r = cov / (vt * ve).sqrt();
            let dm = (st - se) / n;
            let dv = (msd * n - n * dm * dm) / (n - 1.0);
            let tstat = dm / (dv.sqrt() / n.sqrt());
            (st / n, se / n, vt, ve, mad, msd, r, tstat)
        }
    }

    fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 100.0).round() / 100.0).collect();
        let e = t
            .iter()
            .map(|x| ((x + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0) * 100.0).round() / 100.0)
            .collect();
        (t, e)
    }

    #[test]
    fn matches_oracle_on_long_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let (t, e) = random_pair(&mut rng, 10_000);
            let r = compute_alignment(&t, &e).unwrap();
            let (mt, me, vt, ve, mad, msd, p, ts) = oracle::stats(&t, &e);
            for (a, b) in [
                (r.mean_target, mt),
                (r.mean_evaluated, me),
                (r.var_target.unwrap(), vt),
                (r.var_evaluated.unwrap(), ve),
                (r.mad, mad),
                (r.msd, msd),
                (r.pearson.unwrap(), p),
            ] {
                assert!(approx(a, b, 1e-9), "{a} vs {b}");
            }
            assert!(approx(r.t_stat.unwrap(), ts, 1e-9 * ts.abs().max(1.0)));
        }
    }

    #[test]
    fn pearson_affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (t, e) = random_pair(&mut rng, 2000);
        let base = compute_alignment(&t, &e).unwrap().pearson.unwrap();
        let mapped: Vec<f64> = t.iter().map(|x| 2.0 * x + 0.1).collect();
        assert!(approx(base, pearson(&mapped, &e).unwrap(), 1e-12));
        let mapped: Vec<f64> = e.iter().map(|x| 2.0 * x + 0.1).collect();
        assert!(approx(base, pearson(&t, &mapped).unwrap(), 1e-12));
        assert_eq!(pearson(&[0.5, 0.5], &[0.1, 0.9]), None);
    }

    proptest! {
        #[test]
        fn invariants(pairs in prop::collection::vec((0u32..=100, 0u32..=100), 1..200)) {
            let t: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 100.0).collect();
            let e: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 100.0).collect();
            let r = compute_alignment(&t, &e).unwrap();
            prop_assert!(r.mad >= 0.0 && r.msd >= 0.0);
            prop_assert!(r.msd <= r.mad + 1e-15);
            prop_assert_eq!(r.diff_histogram.bins.iter().map(|b| b.count).sum::<usize>(), r.n);
            prop_assert_eq!(r.score_histogram.bins.iter().map(|b| b.count).sum::<usize>(), r.n);
            let pct: f64 = r.diff_histogram.bins.iter().map(|b| b.percentage).sum();
            prop_assert!((pct - 100.0).abs() <= 0.01);
            if let Some(p) = r.pearson {
                prop_assert!((-1.0..=1.0).contains(&p));
            }
        }
    }
}
