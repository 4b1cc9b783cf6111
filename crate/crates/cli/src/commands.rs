//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use pdt_synth::alignment::{prefix_redundancy, word_usage};
use pdt_synth::costing::{self, CostError, ProjectionSummary};
use pdt_synth::datastore::{self, DatasetRow, Format};
use pdt_synth::diversity::{full_report, LexiconTagger};
use pdt_synth::provider::{HttpProvider, ScriptedProvider};
use pdt_synth::scoring::flag_large_adjustments;
use pdt_synth::wordlist::WordSource;
use pdt_synth::{
    compute_alignment, AlignmentReport, CostReport, Corpus, DiversityReport, GenerationRecord, Generator, MethodKind, PriceSheet,
    Provider, ScoredRecord, Scorer, ScoringPrompt, WordList, WordUsageReport,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::tables;
use crate::{AssessArgs, GenerateArgs, PriceArgs, ProjectCostArgs, ProviderArgs, ScoreArgs};

const PREFIX_ROWS: usize = 10;

fn apply_provider_args(cfg: &mut RunConfig, a: &ProviderArgs) {
    if let Some(m) = &a.mock {
        cfg.mock = Some(m.clone());
    }
    if let Some(v) = &a.base_url {
        cfg.provider.base_url = v.clone();
    }
    if let Some(v) = &a.api_key_env {
        cfg.provider.api_key_env = v.clone();
    }
    if let Some(v) = a.parallelism {
        cfg.provider.parallelism = v;
    }
    if let Some(v) = a.max_retries {
        cfg.provider.max_retries = v;
    }
    if let Some(v) = a.request_timeout {
        cfg.provider.request_timeout_s = v;
    }
}

fn apply_price_args(cfg: &mut RunConfig, a: &PriceArgs) -> Result<()> {
    if let Some(name) = &a.price_preset {
        cfg.prices = PriceSheet::preset(name)?;
    }
    if a.input_price.is_some() || a.output_price.is_some() {
        cfg.prices.model = format!("{} (custom)", cfg.prices.model);
    }
    if let Some(v) = a.input_price {
        cfg.prices.input_per_million = v;
    }
    if let Some(v) = a.output_price {
        cfg.prices.output_per_million = v;
    }
    Ok(())
}

fn open_provider(cfg: &RunConfig) -> Result<Box<dyn Provider>> {
    Ok(match &cfg.mock {
        Some(script) => Box::new(ScriptedProvider::from_path(script)?),
        None => Box::new(HttpProvider::from_env(cfg.provider.clone())?),
    })
}

fn format_for(path: &Path, explicit: Option<Format>) -> Format {
    explicit.or_else(|| Format::from_extension(path)).unwrap_or(Format::Csv)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_word_list(path: Option<&Path>) -> Result<WordList> {
    Ok(WordList::load(&WordSource::from_option(path))?)
}

pub fn generate(mut cfg: RunConfig, a: GenerateArgs) -> Result<()> {
    apply_provider_args(&mut cfg, &a.provider);
    let g = &mut cfg.generation;
    if let Some(v) = a.method {
        g.method = Some(v);
    }
    if let Some(v) = a.count {
        g.count = v;
    }
    if let Some(v) = a.seed {
        g.seed = v;
    }
    if let Some(v) = a.product {
        g.product = v;
    }
    if let Some(v) = a.word_list {
        g.word_list = Some(v);
    }
    if let Some(v) = a.model {
        g.model = v;
    }
    if let Some(v) = a.temperature {
        g.temperature = v;
    }
    if let Some(v) = a.output {
        g.output = Some(v);
    }
    if let Some(v) = a.format {
        g.format = Some(v);
    }
    cfg.validate()?;
    let g = &cfg.generation;
    let method = g.method.unwrap_or(MethodKind::WordReview);
    let output = g.output.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", method.slug())));
    let format = format_for(&output, g.format);

    let list = load_word_list(g.word_list.as_deref())?;
    let provider = open_provider(&cfg)?;
    let generator = Generator::new(&list, &*provider, g.settings());
    let (records, mut manifest) = generator.run_batch(method, g.count, g.seed, cfg.provider.parallelism)?;

    let rows: Vec<DatasetRow> = records.into_iter().map(DatasetRow::from).collect();
    datastore::write_dataset(&rows, &output, format)?;
    manifest.prices = Some(cfg.prices.clone());
    let log = datastore::append_manifest(&output, &mut manifest)?;
    let invalid = rows.iter().filter(|r| !r.record.word_valid).count();
    println!(
        "generated {} {} rows -> {} ({} invalid words, {} tokens); manifest {}",
        rows.len(),
        method.label(),
        output.display(),
        invalid,
        manifest.total_tokens,
        log.display()
    );
    Ok(())
}

fn scored_path(input: &Path) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let ext = input.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    input.with_file_name(format!("{stem}.scored.{ext}"))
}

#[derive(Serialize)]
struct Flag<'a> {
    id: u64,
    word: &'a str,
    base_score: Option<f64>,
    adjusted_score: Option<f64>,
    adjustment: Option<f64>,
    review: &'a str,
}

pub fn score(mut cfg: RunConfig, a: ScoreArgs) -> Result<()> {
    apply_provider_args(&mut cfg, &a.provider);
    let s = &mut cfg.scoring;
    if let Some(v) = a.scoring_model {
        s.model = v;
    }
    if let Some(v) = a.scoring_prompt {
        s.prompt = v;
    }
    if let Some(v) = a.flag_threshold {
        s.flag_threshold = v;
    }
    if let Some(v) = a.output {
        s.output = Some(v);
    }
    cfg.validate()?;

    let input_rows = datastore::read_dataset_with(&a.input, &cfg.read_options(a.method))
        .with_context(|| format!("reading {}", a.input.display()))?;
    let records: Vec<GenerationRecord> = input_rows.iter().map(|r| r.record.clone()).collect();
    let provider = open_provider(&cfg)?;
    let s = &cfg.scoring;
    let mut scorer = Scorer::new(&*provider, s.model.clone(), s.prompt);
    scorer.temperature = s.temperature;
    scorer.max_output_tokens = s.max_output_tokens;
    let (scored, mut manifest) = scorer.score_all(&records, cfg.provider.parallelism)?;

    let output = s.output.clone().unwrap_or_else(|| scored_path(&a.input));
    let format = format_for(&output, a.format);
    let rows: Vec<DatasetRow> = scored
        .iter()
        .zip(&input_rows)
        .map(|(sc, input)| DatasetRow {
            record: sc.record.clone(),
            eval: Some(sc.eval.clone()),
            annotations: input.annotations.clone(),
        })
        .collect();
    datastore::write_dataset(&rows, &output, format)?;
    manifest.parent_run_id = datastore::current_manifest(&a.input)?.map(|m| m.run_id);
    manifest.prices = Some(cfg.prices.clone());
    let log = datastore::append_manifest(&output, &mut manifest)?;

    if s.prompt == ScoringPrompt::BaseAdjust {
        let flagged = flag_large_adjustments(&scored, s.flag_threshold)?;
        let flags: Vec<Flag> = flagged
            .iter()
            .map(|r| Flag {
                id: r.record.id,
                word: &r.record.word,
                base_score: r.eval.base_score,
                adjusted_score: r.eval.adjusted_score,
                adjustment: r.adjustment(),
                review: &r.record.review,
            })
            .collect();
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".flags.json");
        let flag_path = output.with_file_name(name);
        write_json(&flag_path, &flags)?;
        println!(
            "{} of {} adjustments >= {:.2} -> {}",
            flags.len(),
            scored.len(),
            s.flag_threshold,
            flag_path.display()
        );
    }
    println!(
        "scored {} rows with {} ({}) -> {}; manifest {}",
        rows.len(),
        s.model,
        s.prompt,
        output.display(),
        log.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DatasetReport {
    dataset: String,
    rows: usize,
    methods: Vec<String>,
    alignment: Option<AlignmentReport>,
    diversity: DiversityReport,
    word_usage: WordUsageReport,
    prefix_redundancy: Vec<(String, f64)>,
    cost: Option<CostReport>,
    cost_unavailable: Option<String>,
    large_adjustments: Option<usize>,
}

fn label_for(path: &Path, taken: &mut BTreeMap<String, usize>) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    let n = taken.entry(stem.clone()).or_default();
    *n += 1;
    if *n == 1 {
        stem
    } else {
        format!("{stem}-{n}")
    }
}

fn alignment_of(label: &str, rows: &[DatasetRow]) -> Result<Option<AlignmentReport>> {
    let scored = rows.iter().filter(|r| r.eval.is_some()).count();
    if scored == 0 {
        warn!("{label}: no evaluated scores; alignment skipped");
        return Ok(None);
    }
    if scored != rows.len() {
        bail!("{label}: {} of {} rows are unscored", rows.len() - scored, rows.len());
    }
    let targets: Vec<f64> = rows.iter().map(|r| r.record.target_score).collect();
    let evaluated: Vec<f64> = rows.iter().filter_map(|r| r.eval.as_ref()).map(|e| e.evaluated_score).collect();
    Ok(Some(compute_alignment(&targets, &evaluated).with_context(|| label.to_string())?))
}

pub fn assess(mut cfg: RunConfig, a: AssessArgs) -> Result<()> {
    apply_price_args(&mut cfg, &a.prices)?;
    let ac = &mut cfg.assess;
    if let Some(v) = a.out_dir {
        ac.out_dir = v;
    }
    ac.skip_hs |= a.skip_hs;
    if let Some(v) = a.top_k {
        ac.top_k = v;
    }
    if let Some(v) = a.prefix_tokens {
        ac.prefix_tokens = v;
    }
    if let Some(v) = a.word_list {
        cfg.generation.word_list = Some(v);
    }
    if let Some(v) = a.parallelism {
        cfg.provider.parallelism = v;
    }
    cfg.validate()?;
    let ac = &cfg.assess;
    std::fs::create_dir_all(&ac.out_dir).with_context(|| format!("creating {}", ac.out_dir.display()))?;
    let list = load_word_list(cfg.generation.word_list.as_deref())?;
    let tagger = LexiconTagger::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.provider.parallelism)
        .build()
        .context("starting diversity workers")?;

    let mut taken = BTreeMap::new();
    let mut reports = Vec::new();
    let mut timings = serde_json::Map::new();
    for path in &a.inputs {
        let label = label_for(path, &mut taken);
        let rows = datastore::read_dataset_with(path, &cfg.read_options(a.method))
            .with_context(|| format!("reading {}", path.display()))?;
        info!("assessing {label} ({} rows)", rows.len());
        let records: Vec<GenerationRecord> = rows.iter().map(|r| r.record.clone()).collect();
        let reviews: Vec<&str> = records.iter().map(|r| r.review.as_str()).collect();

        let alignment = alignment_of(&label, &rows)?;
        let corpus = Corpus::new(reviews.iter().copied()).with_context(|| format!("{label}: building corpus"))?;
        let diversity = pool
            .install(|| full_report(&corpus, &tagger, ac.skip_hs))
            .with_context(|| format!("{label}: diversity"))?;
        timings.insert(label.clone(), serde_json::to_value(&diversity.timings)?);
        let (cost, cost_unavailable) = match costing::tally(&records, &cfg.prices) {
            Ok(c) => (Some(c), None),
            Err(e @ CostError::MissingUsage { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        let scored: Vec<ScoredRecord> = rows.iter().filter_map(DatasetRow::scored).collect();
        let large_adjustments = (!scored.is_empty()
            && scored.iter().all(|r| r.eval.scoring_prompt == ScoringPrompt::BaseAdjust))
        .then(|| flag_large_adjustments(&scored, cfg.scoring.flag_threshold).map(|f| f.len()))
        .transpose()?;
        let mut methods: Vec<String> = records.iter().map(|r| r.method.label().to_string()).collect();
        methods.sort();
        methods.dedup();

        let mut prefixes = prefix_redundancy(&reviews, ac.prefix_tokens);
        prefixes.truncate(PREFIX_ROWS);
        let report = DatasetReport {
            dataset: label.clone(),
            rows: rows.len(),
            methods,
            alignment,
            diversity,
            word_usage: word_usage(&records, &list, ac.top_k),
            prefix_redundancy: prefixes,
            cost,
            cost_unavailable,
            large_adjustments,
        };
        write_json(&ac.out_dir.join(format!("{label}.report.json")), &report)?;
        if let Some(al) = &report.alignment {
            std::fs::write(ac.out_dir.join(format!("{label}.diff_histogram.csv")), al.diff_histogram.to_csv())?;
            std::fs::write(ac.out_dir.join(format!("{label}.score_histogram.csv")), al.score_histogram.to_csv())?;
        }
        reports.push(report);
    }

    let al: Vec<(&str, Option<&AlignmentReport>)> =
        reports.iter().map(|r| (r.dataset.as_str(), r.alignment.as_ref())).collect();
    let dv: Vec<(&str, &DiversityReport)> = reports.iter().map(|r| (r.dataset.as_str(), &r.diversity)).collect();
    let co: Vec<(&str, Option<&CostReport>)> = reports.iter().map(|r| (r.dataset.as_str(), r.cost.as_ref())).collect();
    let tables = [
        ("alignment", tables::alignment(&al)),
        ("diversity", tables::diversity(&dv)),
        ("cost", tables::cost(&co)),
    ];
    let mut md = String::new();
    for (name, t) in &tables {
        std::fs::write(ac.out_dir.join(format!("{name}_table.csv")), t.to_csv()?)?;
        md.push_str(&t.to_markdown());
        md.push('\n');
    }
    std::fs::write(ac.out_dir.join("comparison.md"), &md)?;
    write_json(&ac.out_dir.join("timings.json"), &timings)?;
    print!("{md}");
    Ok(())
}

#[derive(Serialize)]
struct CostOutput {
    report: CostReport,
    projection: ProjectionSummary,
}

pub fn project_cost(mut cfg: RunConfig, a: ProjectCostArgs) -> Result<()> {
    apply_price_args(&mut cfg, &a.prices)?;
    if let Some(v) = a.target_rows {
        cfg.projection.target_rows = v;
    }
    if let Some(name) = &a.alt_price_preset {
        cfg.projection.alt_prices = Some(PriceSheet::preset(name)?);
    }
    cfg.validate()?;

    let report = match (&a.input, a.rows) {
        (Some(path), _) => {
            let rows = datastore::read_dataset_with(path, &cfg.read_options(a.method))
                .with_context(|| format!("reading {}", path.display()))?;
            let records: Vec<GenerationRecord> = rows.into_iter().map(|r| r.record).collect();
            costing::tally(&records, &cfg.prices)?
        }
        (None, Some(rows)) => {
            let wall = a.wall_time.unwrap_or(0.0);
            if !(wall >= 0.0 && wall.is_finite()) {
                return Err(ConfigError("--wall-time must be a non-negative number".into()).into());
            }
            CostReport::from_counts(
                rows,
                (wall * 1000.0).round() as u64,
                a.input_tokens.unwrap_or(0),
                a.output_tokens.unwrap_or(0),
                &cfg.prices,
            )
        }
        (None, None) => return Err(ConfigError("give --input or --rows with token counts".into()).into()),
    };
    let projection = costing::project(&report, cfg.projection.target_rows, cfg.projection.alt_prices.as_ref())?.summary();

    println!(
        "{} rows, {} input + {} output = {} tokens, {:.0} s, {} ({:.4}) at {}",
        report.rows,
        report.input_tokens,
        report.output_tokens,
        report.total_tokens,
        report.wall_time_s,
        report.price_display,
        report.price_dollars,
        report.model
    );
    println!(
        "{} rows: token-basis {} ({:.4}), rounded-basis {}, {:.2} days",
        projection.target_rows,
        projection.token_basis_display,
        projection.token_basis_dollars,
        projection.rounded_basis_display,
        projection.wall_time_days
    );
    if let (Some(model), Some(display)) = (&projection.alt_model, &projection.alt_token_basis_display) {
        println!("{} rows at {model} prices: {display}", projection.target_rows);
    }
    let out = CostOutput { report, projection };
    match &a.output {
        Some(path) => write_json(path, &out)?,
        None => println!("{}", json!(out)),
    }
    Ok(())
}
