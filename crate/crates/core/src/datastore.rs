//! Dataset and manifest persistence.
//!
//! Datasets are CSV (RFC 4180, LF, header row) or JSON lines. Both use the
//! same column order and the same number formatting, so a write/read/write
//! cycle reproduces the file byte for byte. Each dataset has a sidecar
//! `<file>.manifest.jsonl` log; every write appends one [`RunManifest`]
//! carrying the SHA-256 of the dataset it describes.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

use crate::costing::PriceSheet;
use crate::prompts::PromptRecord;
use crate::scoring::{Confidence, Evaluation, ScoredRecord, ScoringPrompt};
use crate::synth::{GenerationRecord, MethodKind};

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    SchemaMismatch {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatastoreError + '_ {
    move |source| DatastoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" | "json" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            _ => Err(format!("unknown format {s:?}")),
        }
    }
}

/// One dataset row: a generated record, its evaluation once scored, and any
/// columns this tool does not know about.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub record: GenerationRecord,
    pub eval: Option<Evaluation>,
    pub annotations: Vec<(String, String)>,
}

impl From<GenerationRecord> for DatasetRow {
    fn from(record: GenerationRecord) -> Self {
        Self {
            record,
            eval: None,
            annotations: Vec::new(),
        }
    }
}

impl From<ScoredRecord> for DatasetRow {
    fn from(s: ScoredRecord) -> Self {
        Self {
            record: s.record,
            eval: Some(s.eval),
            annotations: Vec::new(),
        }
    }
}

impl DatasetRow {
    pub fn scored(&self) -> Option<ScoredRecord> {
        Some(ScoredRecord {
            record: self.record.clone(),
            eval: self.eval.clone()?,
        })
    }
}

/// Column order shared by both formats.
pub const COLUMNS: &[&str] = &[
    "id",
    "method",
    "target_score",
    "word",
    "word_valid",
    "review",
    "model_claimed_score",
    "evaluated_score",
    "confidence",
    "abs_diff",
    "prompt_tokens",
    "completion_tokens",
    "latency_ms",
    "offered_words",
    "retries_used",
    "base_score",
    "adjusted_score",
    "explanation",
    "scoring_model",
    "scoring_prompt",
    "score_clamped",
];

const OFFERED_SEP: &str = "; ";

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Null,
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
    List(Vec<String>),
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Null => String::new(),
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_float(*v),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::List(v) => v.join(OFFERED_SEP),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Null => Value::Null,
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Bool(v) => Value::Bool(*v),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::List(v) => Value::Array(v.iter().cloned().map(Value::String).collect()),
        }
    }
}

/// Shortest representation that parses back to the same value.
fn fmt_float(v: f64) -> String {
    let s = v.to_string();
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn opt_f(v: Option<f64>) -> Cell {
    v.map_or(Cell::Null, Cell::Float)
}

fn cells(row: &DatasetRow) -> Vec<Cell> {
    let r = &row.record;
    let e = row.eval.as_ref();
    vec![
        Cell::Int(r.id),
        Cell::Text(r.method.slug().into()),
        Cell::Float(r.target_score),
        Cell::Text(r.word.clone()),
        Cell::Bool(r.word_valid),
        Cell::Text(r.review.clone()),
        opt_f(r.model_claimed_score),
        opt_f(e.map(|e| e.evaluated_score)),
        e.map_or(Cell::Null, |e| Cell::Text(e.confidence.to_string())),
        opt_f(e.map(|e| e.abs_diff)),
        Cell::Int(r.prompt_tokens),
        Cell::Int(r.completion_tokens),
        Cell::Int(r.latency_ms),
        r.offered_words.clone().map_or(Cell::Null, Cell::List),
        Cell::Int(r.retries_used as u64),
        opt_f(e.and_then(|e| e.base_score)),
        opt_f(e.and_then(|e| e.adjusted_score)),
        e.map_or(Cell::Null, |e| Cell::Text(e.explanation.clone())),
        e.map_or(Cell::Null, |e| Cell::Text(e.scoring_model.clone())),
        e.map_or(Cell::Null, |e| Cell::Text(e.scoring_prompt.to_string())),
        e.map_or(Cell::Null, |e| Cell::Bool(e.score_clamped)),
    ]
}

/// Writes `rows` to `path` in the given format.
pub fn write_dataset(rows: &[DatasetRow], path: &Path, format: Format) -> Result<(), DatastoreError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(rows, &mut out).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DatastoreError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => DatastoreError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(format!("{other:?}")),
            },
        })?,
        Format::Jsonl => write_jsonl(rows, &mut out).map_err(io_err(path))?,
    }
    out.flush().map_err(io_err(path))
}

fn annotation_columns(rows: &[DatasetRow]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for row in rows {
        for (k, _) in &row.annotations {
            if !cols.contains(k) {
                cols.push(k.clone());
            }
        }
    }
    cols
}

fn annotation<'a>(row: &'a DatasetRow, key: &str) -> Option<&'a str> {
    row.annotations.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn write_csv<W: Write>(rows: &[DatasetRow], out: W) -> Result<(), csv::Error> {
    let extra = annotation_columns(rows);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(COLUMNS.iter().copied().chain(extra.iter().map(String::as_str)))?;
    for row in rows {
        let mut fields: Vec<String> = cells(row).iter().map(Cell::to_csv).collect();
        fields.extend(extra.iter().map(|k| annotation(row, k).unwrap_or_default().to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

fn write_jsonl<W: Write>(rows: &[DatasetRow], mut out: W) -> std::io::Result<()> {
    for row in rows {
        let mut obj = Map::new();
        for (name, cell) in COLUMNS.iter().zip(cells(row)) {
            obj.insert((*name).to_string(), cell.to_json());
        }
        for (k, v) in &row.annotations {
            obj.insert(k.clone(), Value::String(v.clone()));
        }
        serde_json::to_writer(&mut out, &Value::Object(obj))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Options for reading datasets produced elsewhere.
#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    /// Extra `(external name, column)` header aliases, checked before the
    /// built-in ones. Matching is case-insensitive.
    pub aliases: Vec<(String, String)>,
    /// Method assumed when the file has no `method` column.
    pub default_method: Option<MethodKind>,
}

const BUILTIN_ALIASES: &[(&str, &str)] = &[
    ("score", "target_score"),
    ("target", "target_score"),
    ("target score", "target_score"),
    ("sentiment", "target_score"),
    ("sentiment score", "target_score"),
    ("pdt word", "word"),
    ("comment", "review"),
    ("explanation of choice", "review"),
    ("evaluated", "evaluated_score"),
    ("evaluated score", "evaluated_score"),
];

impl ReadOptions {
    fn resolve(&self, header: &str) -> String {
        let h = header.trim().to_lowercase();
        if COLUMNS.contains(&h.as_str()) {
            return h;
        }
        self.aliases
            .iter()
            .map(|(a, c)| (a.as_str(), c.as_str()))
            .chain(BUILTIN_ALIASES.iter().copied())
            .find(|(alias, _)| alias.to_lowercase() == h)
            .map_or_else(|| header.trim().to_string(), |(_, col)| col.to_string())
    }
}

/// Reads a dataset, choosing the format by extension and then by content.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRow>, DatastoreError> {
    read_dataset_with(path, &ReadOptions::default())
}

pub fn read_dataset_with(path: &Path, opts: &ReadOptions) -> Result<Vec<DatasetRow>, DatastoreError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let schema = |line: usize, reason: String| DatastoreError::SchemaMismatch {
        path: path.to_path_buf(),
        line,
        reason,
    };
    if text.trim().is_empty() {
        return Err(schema(0, "empty file".into()));
    }
    let format = Format::from_extension(path).unwrap_or(if text.trim_start().starts_with('{') {
        Format::Jsonl
    } else {
        Format::Csv
    });
    let rows = match format {
        Format::Csv => read_csv(&text, opts).map_err(|(line, reason)| schema(line, reason))?,
        Format::Jsonl => read_jsonl(&text, opts).map_err(|(line, reason)| schema(line, reason))?,
    };
    if rows.is_empty() {
        return Err(schema(0, "no records".into()));
    }
    Ok(rows)
}

type RowResult<T> = Result<T, (usize, String)>;

fn read_csv(text: &str, opts: &ReadOptions) -> RowResult<Vec<DatasetRow>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| (1, e.to_string()))?
        .iter()
        .map(|h| opts.resolve(h))
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| (line, e.to_string()))?;
        let fields: Vec<(String, Value)> = headers
            .iter()
            .cloned()
            .zip(rec.iter().map(|v| Value::String(v.to_string())))
            .collect();
        rows.push(row_from_fields(fields, i, opts).map_err(|r| (line, r))?);
    }
    Ok(rows)
}

fn read_jsonl(text: &str, opts: &ReadOptions) -> RowResult<Vec<DatasetRow>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let value: Value = serde_json::from_str(raw).map_err(|e| (line, format!("malformed JSON: {e}")))?;
        let Value::Object(obj) = value else {
            return Err((line, "expected a JSON object".into()));
        };
        let fields = obj.into_iter().map(|(k, v)| (opts.resolve(&k), v)).collect();
        rows.push(row_from_fields(fields, rows.len(), opts).map_err(|r| (line, r))?);
    }
    Ok(rows)
}

/// Typed access to one row's fields; empty strings and nulls read as absent.
struct Fields(Vec<(String, Value)>);

impl Fields {
    fn take(&mut self, name: &str) -> Option<Value> {
        let i = self.0.iter().position(|(k, _)| k == name)?;
        match self.0.remove(i).1 {
            Value::Null => None,
            Value::String(s) if s.is_empty() => None,
            v => Some(v),
        }
    }

    fn string(&mut self, name: &str) -> Option<String> {
        self.take(name).map(|v| match v {
            Value::String(s) => s,
            other => other.to_string(),
        })
    }

    fn parse<T: FromStr>(&mut self, name: &str) -> Result<Option<T>, String> {
        match self.string(name) {
            None => Ok(None),
            Some(s) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| format!("column {name}: cannot parse {s:?}")),
        }
    }

    fn list(&mut self, name: &str) -> Option<Vec<String>> {
        match self.take(name)? {
            Value::Array(items) => Some(
                items
                    .into_iter()
                    .map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string))
                    .collect(),
            ),
            Value::String(s) => Some(s.split(OFFERED_SEP.trim()).map(|w| w.trim().to_string()).collect()),
            other => Some(vec![other.to_string()]),
        }
    }
}

fn row_from_fields(fields: Vec<(String, Value)>, index: usize, opts: &ReadOptions) -> Result<DatasetRow, String> {
    let mut f = Fields(fields);
    let required = |name: &str| format!("missing required column {name}");
    let method = match f.string("method") {
        Some(m) => m.parse::<MethodKind>()?,
        None => opts.default_method.ok_or_else(|| required("method"))?,
    };
    let target_score: f64 = f.parse("target_score")?.ok_or_else(|| required("target_score"))?;
    if !(0.0..=1.0).contains(&target_score) {
        return Err(format!("target_score {target_score} outside [0,1]"));
    }
    let record = GenerationRecord {
        id: f.parse("id")?.unwrap_or(index as u64 + 1),
        method,
        target_score,
        word: f.string("word").ok_or_else(|| required("word"))?,
        word_valid: f.parse("word_valid")?.unwrap_or(true),
        review: f.string("review").ok_or_else(|| required("review"))?,
        model_claimed_score: f.parse("model_claimed_score")?,
        prompt_tokens: f.parse("prompt_tokens")?.unwrap_or(0),
        completion_tokens: f.parse("completion_tokens")?.unwrap_or(0),
        latency_ms: f.parse("latency_ms")?.unwrap_or(0),
        offered_words: f.list("offered_words"),
        retries_used: f.parse("retries_used")?.unwrap_or(0),
    };
    let evaluated: Option<f64> = f.parse("evaluated_score")?;
    let confidence: Option<Confidence> = f.parse("confidence")?;
    let abs_diff: Option<f64> = f.parse("abs_diff")?;
    let base_score: Option<f64> = f.parse("base_score")?;
    let adjusted_score: Option<f64> = f.parse("adjusted_score")?;
    let explanation = f.string("explanation");
    let scoring_model = f.string("scoring_model");
    let scoring_prompt: Option<ScoringPrompt> = f.parse("scoring_prompt")?;
    let score_clamped: Option<bool> = f.parse("score_clamped")?;
    let eval = match evaluated {
        None => None,
        Some(ev) => {
            if !(0.0..=1.0).contains(&ev) {
                return Err(format!("evaluated_score {ev} outside [0,1]"));
            }
            Some(Evaluation {
                evaluated_score: ev,
                base_score,
                adjusted_score,
                confidence: confidence.ok_or_else(|| required("confidence"))?,
                explanation: explanation.unwrap_or_default(),
                abs_diff: abs_diff.unwrap_or_else(|| (record.target_score - ev).abs()),
                scoring_model: scoring_model.unwrap_or_default(),
                scoring_prompt: scoring_prompt.unwrap_or_default(),
                score_clamped: score_clamped.unwrap_or(false),
            })
        }
    };
    let annotations = f
        .0
        .into_iter()
        .filter(|(k, _)| !COLUMNS.contains(&k.as_str()))
        .map(|(k, v)| {
            let v = match v {
                Value::String(s) => s,
                Value::Null => String::new(),
                other => other.to_string(),
            };
            (k, v)
        })
        .collect();
    Ok(DatasetRow {
        record,
        eval,
        annotations,
    })
}

/// Reproducibility record for one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: Uuid,
    pub stage: String,
    pub parent_run_id: Option<Uuid>,
    pub dataset: Option<String>,
    pub dataset_sha256: Option<String>,
    pub method: Option<MethodKind>,
    pub model: Option<String>,
    pub scoring_model: Option<String>,
    pub scoring_prompt: Option<ScoringPrompt>,
    pub prompts: Vec<PromptRecord>,
    pub seed: Option<u64>,
    pub product: Option<String>,
    pub temperature: Option<f64>,
    pub word_list: Option<String>,
    pub provider: Option<String>,
    pub parallelism: Option<usize>,
    pub prices: Option<PriceSheet>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub wall_time_ms: u64,
    pub rows: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(stage: &str, started_at: DateTime<Utc>) -> Self {
        Self {
            run_id: Uuid::new_v4(),
            stage: stage.to_string(),
            parent_run_id: None,
            dataset: None,
            dataset_sha256: None,
            method: None,
            model: None,
            scoring_model: None,
            scoring_prompt: None,
            prompts: Vec::new(),
            seed: None,
            product: None,
            temperature: None,
            word_list: None,
            provider: None,
            parallelism: None,
            prices: None,
            started_at,
            finished_at: started_at,
            wall_time_ms: 0,
            rows: 0,
            prompt_tokens: 0,
            completion_tokens: 0,
            total_tokens: 0,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn finish(&mut self, elapsed: Duration) {
        self.finished_at = Utc::now();
        self.wall_time_ms = elapsed.as_millis() as u64;
        self.total_tokens = self.prompt_tokens + self.completion_tokens;
    }
}

/// Sidecar manifest log for a dataset file.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.jsonl");
    dataset.with_file_name(name)
}

pub fn sha256_file(path: &Path) -> Result<String, DatastoreError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Stamps `manifest` with the dataset's path and digest and appends it to the
/// dataset's manifest log.
pub fn append_manifest(dataset: &Path, manifest: &mut RunManifest) -> Result<PathBuf, DatastoreError> {
    manifest.dataset = Some(dataset.display().to_string());
    manifest.dataset_sha256 = Some(sha256_file(dataset)?);
    let log = manifest_path(dataset);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log)
        .map_err(io_err(&log))?;
    let line = serde_json::to_string(manifest).expect("manifest serializes");
    writeln!(file, "{line}").map_err(io_err(&log))?;
    Ok(log)
}

/// The manifest describing the dataset's current contents, if any.
pub fn current_manifest(dataset: &Path) -> Result<Option<RunManifest>, DatastoreError> {
    let log = manifest_path(dataset);
    if !log.exists() {
        return Ok(None);
    }
    let digest = sha256_file(dataset)?;
    let file = File::open(&log).map_err(io_err(&log))?;
    let mut found = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&log))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: RunManifest = serde_json::from_str(&line).map_err(|e| DatastoreError::SchemaMismatch {
            path: log.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if m.dataset_sha256.as_deref() == Some(digest.as_str()) {
            found = Some(m);
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: u64, review: &str) -> GenerationRecord {
        GenerationRecord {
            id,
            method: MethodKind::WordReview,
            target_score: 0.3,
            offered_words: Some((0..10).map(|i| format!("W{i}")).collect()),
            word: "Overwhelming".into(),
            word_valid: true,
            review: review.into(),
            model_claimed_score: None,
            prompt_tokens: 120,
            completion_tokens: 60,
            latency_ms: 1500,
            retries_used: 0,
        }
    }

    fn scored(id: u64) -> DatasetRow {
        DatasetRow {
            record: rec(id, "Too much, too \"busy\"."),
            eval: Some(Evaluation {
                evaluated_score: 0.35,
                base_score: None,
                adjusted_score: None,
                confidence: Confidence::High,
                explanation: "Mostly negative, some nuance".into(),
                abs_diff: (0.3f64 - 0.35).abs(),
                scoring_model: "gpt-4o-mini".into(),
                scoring_prompt: ScoringPrompt::Complete,
                score_clamped: false,
            }),
            annotations: vec![],
        }
    }

    #[test]
    fn csv_has_header_plus_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rows: Vec<DatasetRow> = vec![rec(1, "a").into(), rec(2, "b").into()];
        write_dataset(&rows, &path, Format::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("id,method,target_score,word,word_valid,review,model_claimed_score,evaluated_score,confidence,abs_diff,prompt_tokens,completion_tokens,latency_ms,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn quotes_and_commas_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for (name, fmt) in [("d.csv", Format::Csv), ("d.jsonl", Format::Jsonl)] {
            let path = dir.path().join(name);
            let rows = vec![scored(1), scored(2)];
            write_dataset(&rows, &path, fmt).unwrap();
            let back = read_dataset(&path).unwrap();
            assert_eq!(back, rows);
        }
    }

    #[test]
    fn empty_file_is_schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_dataset(&path), Err(DatastoreError::SchemaMismatch { .. })));
    }

    #[test]
    fn malformed_jsonl_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_dataset(&[rec(1, "a").into()], &path, Format::Jsonl).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n");
        std::fs::write(&path, text).unwrap();
        match read_dataset(&path) {
            Err(DatastoreError::SchemaMismatch { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_review_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "id,method,target_score,word\n1,word-review,0.5,Fast\n").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("review"), "{err}");
    }

    #[test]
    fn external_columns_are_mapped_and_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.csv");
        std::fs::write(&path, "Score,Word,Review,Batch\n0.6,High quality,\"Polished, professional.\",b1\n").unwrap();
        let opts = ReadOptions {
            default_method: Some(MethodKind::WordReview),
            ..Default::default()
        };
        let rows = read_dataset_with(&path, &opts).unwrap();
        assert_eq!(rows[0].record.target_score, 0.6);
        assert_eq!(rows[0].record.word, "High quality");
        assert_eq!(rows[0].record.id, 1);
        assert_eq!(rows[0].annotations, vec![("Batch".to_string(), "b1".to_string())]);
        assert!(read_dataset(&path).is_err(), "method is required without a default");

        let custom = ReadOptions {
            aliases: vec![("Batch".into(), "scoring_model".into())],
            default_method: Some(MethodKind::ReviewWord),
        };
        let rows = read_dataset_with(&path, &custom).unwrap();
        assert!(rows[0].annotations.is_empty());
    }

    #[test]
    fn manifest_log_tracks_dataset_digest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&[rec(1, "a").into()], &path, Format::Jsonl).unwrap();
        let mut m1 = RunManifest::new("generate", Utc::now());
        append_manifest(&path, &mut m1).unwrap();
        write_dataset(&[rec(1, "b").into()], &path, Format::Jsonl).unwrap();
        let mut m2 = RunManifest::new("generate", Utc::now());
        append_manifest(&path, &mut m2).unwrap();
        let log = std::fs::read_to_string(manifest_path(&path)).unwrap();
        assert_eq!(log.lines().count(), 2);
        assert_eq!(current_manifest(&path).unwrap().unwrap().run_id, m2.run_id);
    }

    fn arb_row() -> impl Strategy<Value = DatasetRow> {
        (
            1u64..100_000,
            prop::sample::select(MethodKind::ALL.to_vec()),
            0u32..=100,
            "[A-Za-z ]{1,12}",
            any::<bool>(),
            "[ -~\n\t\u{e9}\u{2014}]{1,80}",
            proptest::option::of(0u32..=100),
            proptest::option::of((0u32..=100, "[ -~]{0,40}", proptest::option::of(0u32..=100))),
            (0u64..10_000, 0u64..10_000, 0u64..100_000, 0u32..4),
        )
            .prop_map(|(id, method, t, word, valid, review, claimed, eval, (pt, ct, lat, retries))| {
                let target = t as f64 / 100.0;
                let record = GenerationRecord {
                    id,
                    method,
                    target_score: target,
                    offered_words: (method == MethodKind::WordReview)
                        .then(|| (0..10).map(|i| format!("Word{i}")).collect()),
                    word: word.trim().to_string() + "x",
                    word_valid: valid,
                    review: review.trim().to_string() + ".",
                    model_claimed_score: claimed.map(|c| c as f64 / 100.0),
                    prompt_tokens: pt,
                    completion_tokens: ct,
                    latency_ms: lat,
                    retries_used: retries,
                };
                let eval = eval.map(|(e, expl, base)| {
                    let ev = e as f64 / 100.0;
                    Evaluation {
                        evaluated_score: ev,
                        base_score: base.map(|b| b as f64 / 100.0),
                        adjusted_score: base.map(|_| ev),
                        confidence: Confidence::Medium,
                        explanation: expl.trim().to_string(),
                        abs_diff: (target - ev).abs(),
                        scoring_model: "m".into(),
                        scoring_prompt: if base.is_some() { ScoringPrompt::BaseAdjust } else { ScoringPrompt::Complete },
                        score_clamped: false,
                    }
                });
                DatasetRow {
                    record,
                    eval,
                    annotations: vec![],
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn write_read_write_is_byte_identical(rows in prop::collection::vec(arb_row(), 1..40), csv in any::<bool>()) {
            let dir = tempfile::tempdir().unwrap();
            let (name, fmt) = if csv { ("a.csv", Format::Csv) } else { ("a.jsonl", Format::Jsonl) };
            let a = dir.path().join(name);
            let b = dir.path().join(format!("b_{name}"));
            write_dataset(&rows, &a, fmt).unwrap();
            let back = read_dataset(&a).unwrap();
            prop_assert_eq!(&back, &rows);
            write_dataset(&back, &b, fmt).unwrap();
            prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]
        #[test]
        fn thousand_row_files_round_trip(rows in prop::collection::vec(arb_row(), 1000), csv in any::<bool>()) {
            let dir = tempfile::tempdir().unwrap();
            let (fmt, ext) = if csv { (Format::Csv, "csv") } else { (Format::Jsonl, "jsonl") };
            let a = dir.path().join(format!("a.{ext}"));
            let b = dir.path().join(format!("b.{ext}"));
            write_dataset(&rows, &a, fmt).unwrap();
            let back = read_dataset_with(&a, &ReadOptions::default()).unwrap();
            prop_assert_eq!(&back, &rows);
            write_dataset(&back, &b, fmt).unwrap();
            prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }
}
