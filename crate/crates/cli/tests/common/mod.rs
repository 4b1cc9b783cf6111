#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdt_synth::provider::ScriptLine;
use pdt_synth::{MethodKind, WordList};

const OPENINGS: [&str; 5] = [
    "I recently tried this tool and",
    "After a week of use",
    "Honestly,",
    "The setup was quick, and",
    "My team noticed that",
];

const BODIES: [&str; 6] = [
    "the dashboard felt {w} in daily work.",
    "every report came out {w} without extra effort.",
    "it seemed {w} compared with the tools we had before.",
    "the menus were {w}, which shaped how I used it.",
    "support answered fast, though the product still felt {w}.",
    "I would call the whole experience {w} overall.",
];

pub fn review(i: usize, word: &str) -> String {
    let w = word.to_lowercase();
    format!("{} {}", OPENINGS[i % OPENINGS.len()], BODIES[(i / 2) % BODIES.len()].replace("{w}", &w))
}

/// One scripted generation reply per row, in request order.
pub fn generation_lines(method: MethodKind, rows: usize) -> Vec<ScriptLine> {
    let list = WordList::builtin();
    (0..rows)
        .map(|i| {
            let word = &list.words()[(i * 7 + method as usize) % list.len()].text;
            let text = match method {
                MethodKind::SupplyWord => format!(
                    "SCORE: {:.2} ||| WORD: {word} ||| REVIEW: {}",
                    ((i * 29) % 101) as f64 / 100.0,
                    review(i, word)
                ),
                _ => format!("WORD: {word} ||| REVIEW: {}", review(i + method as usize, word)),
            };
            let mut line = ScriptLine::new(text, 120 + (i as u64 % 9), 40 + (i as u64 % 13));
            line.latency_ms = 1200 + (i as u64 * 37) % 900;
            line
        })
        .collect()
}

/// One scripted `Complete` scoring reply per row.
pub fn scoring_lines(rows: usize) -> Vec<ScriptLine> {
    (0..rows)
        .map(|i| {
            ScriptLine::new(
                format!(
                    "Word, {:.2}, high, \"The review mostly matches the word, item {i}.\"",
                    ((i * 37) % 101) as f64 / 100.0
                ),
                200,
                30,
            )
        })
        .collect()
}

pub fn write_script(path: &Path, lines: &[ScriptLine]) -> PathBuf {
    let text: String = lines
        .iter()
        .map(|l| serde_json::to_string(l).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

pub fn pdtsynth(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdtsynth"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Error kind printed on stderr by a failed run.
pub fn error_kind(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr not JSON: {stderr}"));
    v["error"].as_str().unwrap().to_string()
}
