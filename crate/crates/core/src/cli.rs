//! Command-line front end. Every stage reads and writes files so any step
//! can be rerun on its own.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cleaning::{clean_records, dedupe_cross_split, DedupOptions, RepetitionMode};
use crate::cluster::{
    fallback_embed, hdbscan, load_embeddings, prototypes, HdbscanParams, DEFAULT_FALLBACK_DIM,
};
use crate::corpus::{
    load_corpus_with, read_jsonl, read_jsonl_as, split_counts, word_count_stats, write_jsonl,
    CorpusFormat, CsvColumns, Language, Record, Split, TextField,
};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, GenerationRequest, ModelEndpoint, ResponseCache};
use crate::meteor::{Meteor, MeteorParams};
use crate::prompting::PromptTemplate;
use crate::report::{
    emit_hparam_grid, leaderboard_table, score_run, LanguageResult, Prediction, RunLabels,
    TableFormat,
};
use crate::shots::{
    select_shots, self_difficulty, DifficultySource, SelectionInputs, ShotSet, Strategy,
    DEFAULT_EASY_QUANTILE, DEFAULT_HARD_QUANTILE, STANDARD_SHOT_COUNTS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NETWORK: i32 = 3;

/// Exit status for an error: network failures 3, configuration problems 1,
/// everything about the data 2.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_network() {
        EXIT_NETWORK
    } else if matches!(err, Error::Config(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub meteor: MeteorParams,
    pub cleaning: CleaningConfig,
    pub shots: ShotsConfig,
    pub cluster: ClusterConfig,
    pub csv_columns: CsvColumns,
    pub inference: InferenceConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub repetition_mode: RepetitionMode,
    pub dedupe_within_split: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotsConfig {
    pub hard_quantile: f64,
    pub easy_quantile: f64,
    pub difficulty_source: DifficultySource,
}

impl Default for ShotsConfig {
    fn default() -> Self {
        ShotsConfig {
            hard_quantile: DEFAULT_HARD_QUANTILE,
            easy_quantile: DEFAULT_EASY_QUANTILE,
            difficulty_source: DifficultySource::CleanedPost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub min_cluster_size: usize,
    pub min_samples: Option<usize>,
    pub fallback_dim: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            min_cluster_size: 5,
            min_samples: None,
            fallback_dim: DEFAULT_FALLBACK_DIM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub concurrency: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            concurrency: 4,
            temperature: 0.0,
            max_tokens: GenerationRequest::DEFAULT_MAX_TOKENS,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.meteor.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "claimpipe",
    version,
    about = "Claim-normalization pipeline stages"
)]
pub struct Cli {
    /// TOML file with defaults for every stage.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Strip trailing placeholders and collapse repeated posts.
    Clean(CleanArgs),
    /// Remove posts repeated across splits, keeping the test copy.
    Dedupe(DedupeArgs),
    /// Word-count statistics and split sizes.
    Stats(StatsArgs),
    /// Choose few-shot examples from a training pool.
    Select(SelectArgs),
    /// Build prompts for each record.
    Render(RenderArgs),
    /// Run prompts through a chat-completion endpoint.
    Infer(InferArgs),
    /// Per-language METEOR of predictions against references.
    Score(ScoreArgs),
    /// Leaderboard table from predictions or saved scores.
    Report(ReportArgs),
    /// Write the fine-tuning hyperparameter grid.
    Hparams(HparamsArgs),
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Input format; csv needs --language and --split.
    #[arg(long, default_value = "jsonl")]
    pub format: String,
    #[arg(long)]
    pub language: Option<Language>,
    #[arg(long)]
    pub split: Option<Split>,
    /// full_coverage or prefix_only.
    #[arg(long, conflicts_with = "faithful_pseudocode")]
    pub mode: Option<String>,
    /// Same as `--mode prefix_only`.
    #[arg(long)]
    pub faithful_pseudocode: bool,
    /// Per-record cleaning report (JSONL).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DedupeArgs {
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub within_split: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// post, cleaned_post or normalized_claim.
    #[arg(long, default_value = "cleaned_post")]
    pub field: String,
    #[arg(long)]
    pub language: Option<Language>,
    /// Repeatable; defaults to all splits.
    #[arg(long)]
    pub split: Vec<Split>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub strategy: Strategy,
    #[arg(long, value_parser = parse_shot_count)]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub language: Option<Language>,
    /// Precomputed sentence embeddings; the hashed n-gram fallback is used otherwise.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    /// cleaned_post or raw_post.
    #[arg(long)]
    pub difficulty_source: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_shot_count(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if STANDARD_SHOT_COUNTS.contains(&n) {
        Ok(n)
    } else {
        Err(format!(
            "shot count must be one of {STANDARD_SHOT_COUNTS:?}"
        ))
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub lang: Language,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Only render records of this split.
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out: PathBuf,
    /// ShotSet JSON from `select`; omit for zero-shot prompts.
    #[arg(long)]
    pub shots_file: Option<PathBuf>,
    /// Pool the shot ids refer to; required with --shots-file.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Directory of `<lang>.txt` templates overriding the bundled ones.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub endpoint: PathBuf,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Reference split to score against.
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, default_value = "LLM inference")]
    pub strategy_label: String,
    #[arg(long, default_value = "unknown")]
    pub model_label: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, requires = "reference", conflicts_with = "results")]
    pub pred: Option<PathBuf>,
    #[arg(long = "ref", requires = "pred")]
    pub reference: Option<PathBuf>,
    /// Output of `score`, or a JSON list of per-language results.
    #[arg(long, required_unless_present = "pred")]
    pub results: Vec<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, default_value = "LLM inference")]
    pub strategy_label: String,
    #[arg(long, default_value = "unknown")]
    pub model_label: String,
    #[arg(long, default_value = "tsv")]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HparamsArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Rendered prompt handed from `render` to `infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRow {
    pub id: String,
    pub language: Language,
    pub prompt: String,
}

/// One `infer` output line. Failed items carry `error` and no prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRow {
    pub id: String,
    pub language: Language,
    #[serde(default)]
    pub prediction: Option<String>,
    #[serde(default)]
    pub from_cache: bool,
    #[serde(default)]
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    let done = |r: Result<()>| r.map(|()| EXIT_OK);
    match cli.command {
        Command::Clean(a) => done(cmd_clean(&cfg, a)),
        Command::Dedupe(a) => done(cmd_dedupe(&cfg, a)),
        Command::Stats(a) => done(cmd_stats(a)),
        Command::Select(a) => done(cmd_select(&cfg, a)),
        Command::Render(a) => done(cmd_render(a)),
        Command::Infer(a) => cmd_infer(&cfg, a),
        Command::Score(a) => done(cmd_score(&cfg, a)),
        Command::Report(a) => done(cmd_report(&cfg, a)),
        Command::Hparams(a) => done(cmd_hparams(a)),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn parse_mode(s: &str) -> Result<RepetitionMode> {
    match s.replace('-', "_").as_str() {
        "full_coverage" | "full" => Ok(RepetitionMode::FullCoverage),
        "prefix_only" | "prefix" => Ok(RepetitionMode::PrefixOnly),
        _ => Err(Error::Config(format!("unknown repetition mode `{s}`"))),
    }
}

fn cmd_clean(cfg: &PipelineConfig, a: CleanArgs) -> Result<()> {
    let format: CorpusFormat = a
        .format
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let mut records = match (format, a.language, a.split) {
        (CorpusFormat::Jsonl, None, None) => read_jsonl(&a.input)?,
        (_, Some(l), Some(s)) => load_corpus_with(&a.input, format, l, s, &cfg.csv_columns)?,
        _ => {
            return Err(Error::Config(
                "--language and --split must be given together (required for csv)".into(),
            ))
        }
    };
    let mode = match (a.mode.as_deref(), a.faithful_pseudocode) {
        (_, true) => RepetitionMode::PrefixOnly,
        (Some(m), false) => parse_mode(m)?,
        (None, false) => cfg.cleaning.repetition_mode,
    };
    let reports = clean_records(&mut records, mode);
    let condensed = reports
        .iter()
        .filter(|r| r.repetition_period_tokens.is_some())
        .count();
    let stripped = reports
        .iter()
        .filter(|r| r.trailing_placeholder_removed)
        .count();
    log::info!(
        "cleaned {} records: {stripped} placeholders removed, {condensed} repetitions collapsed",
        records.len()
    );
    write_jsonl(&a.out, &records)?;
    if let Some(p) = &a.report {
        write_jsonl(p, &reports)?;
    }
    Ok(())
}

fn cmd_dedupe(cfg: &PipelineConfig, a: DedupeArgs) -> Result<()> {
    let mut records = Vec::new();
    for p in &a.inputs {
        records.extend(read_jsonl(p)?);
    }
    let options = DedupOptions {
        within_split: a.within_split || cfg.cleaning.dedupe_within_split,
    };
    let (kept, reports) = dedupe_cross_split(&records, options)?;
    log::info!(
        "kept {} of {} records ({} duplicate groups)",
        kept.len(),
        records.len(),
        reports.len()
    );
    write_jsonl(&a.out, &kept)?;
    if let Some(p) = &a.report {
        write_jsonl(p, &reports)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StatsOutput {
    field: TextField,
    counts: Vec<SplitCountRow>,
    stats: crate::corpus::CorpusStats,
}

#[derive(Serialize)]
struct SplitCountRow {
    language: Language,
    split: Split,
    n: usize,
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let field: TextField = a
        .field
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let records: Vec<Record> = read_jsonl(&a.input)?
        .into_iter()
        .filter(|r| a.language.is_none_or(|l| r.language == l))
        .filter(|r| a.split.is_empty() || a.split.contains(&r.split))
        .collect();
    let stats = word_count_stats(&records, field)?;
    let counts = split_counts(&records)
        .iter()
        .map(|(language, split, n)| SplitCountRow { language, split, n })
        .collect();
    emit(
        a.out.as_deref(),
        &to_json(&StatsOutput {
            field,
            counts,
            stats,
        })?,
    )
}

/// Train records of one language, optionally restricted to `language`.
fn train_pool(path: &Path, language: Option<Language>) -> Result<Vec<Record>> {
    let pool: Vec<Record> = read_jsonl(path)?
        .into_iter()
        .filter(|r| r.split == Split::Train && language.is_none_or(|l| r.language == l))
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(pool)
}

fn cmd_select(cfg: &PipelineConfig, a: SelectArgs) -> Result<()> {
    let pool = train_pool(&a.train, a.language)?;
    let source = match a.difficulty_source.as_deref() {
        None => cfg.shots.difficulty_source,
        Some("cleaned_post") => DifficultySource::CleanedPost,
        Some("raw_post") | Some("post") => DifficultySource::RawPost,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown difficulty source `{other}`"
            )))
        }
    };
    let mut difficulty = None;
    let mut thresholds = None;
    let mut protos = None;
    match a.strategy {
        Strategy::HardOnly | Strategy::MixedDifficulty => {
            let meteor = Meteor::new(cfg.meteor.clone())?;
            let (d, t) = self_difficulty(
                &pool,
                &meteor,
                cfg.shots.hard_quantile,
                cfg.shots.easy_quantile,
                source,
            )?;
            difficulty = Some(d);
            thresholds = Some(t);
        }
        Strategy::TopKPrototypes => {
            let ids: Vec<String> = pool.iter().map(|r| r.id.clone()).collect();
            let matrix = match &a.embeddings {
                Some(p) => load_embeddings(p)?.select(&ids)?,
                None => fallback_embed(&pool, cfg.cluster.fallback_dim)?,
            };
            let mcs = a.min_cluster_size.unwrap_or(cfg.cluster.min_cluster_size);
            let params = HdbscanParams {
                min_samples: cfg.cluster.min_samples.unwrap_or(mcs),
                ..HdbscanParams::new(mcs)
            };
            let assignment = hdbscan(&matrix, &params)?;
            log::info!(
                "{} clusters over {} posts (embeddings: {})",
                assignment.n_clusters(),
                matrix.len(),
                matrix.source()
            );
            protos = Some(prototypes(&matrix, &assignment, a.shots)?);
        }
        Strategy::Random => {}
    }
    let inputs = SelectionInputs {
        difficulty: difficulty.as_deref(),
        prototypes: protos.as_deref(),
        thresholds,
    };
    let set = select_shots(&pool, a.strategy, a.shots, a.seed, inputs)?;
    for w in &set.warnings {
        log::warn!("{w}");
    }
    emit(Some(&a.out), &to_json(&set)?)
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let template = match &a.templates {
        Some(dir) => PromptTemplate::from_dir(dir, a.lang)?,
        None => PromptTemplate::bundled(a.lang)?,
    };
    let shots: Option<Vec<(String, String)>> = match &a.shots_file {
        None => None,
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let set: ShotSet = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            if set.language != a.lang {
                return Err(Error::InvalidInput(format!(
                    "shot set is for {} but --lang is {}",
                    set.language, a.lang
                )));
            }
            let train = a
                .train
                .as_ref()
                .ok_or_else(|| Error::Config("--train is required with --shots-file".into()))?;
            let pool = train_pool(train, Some(a.lang))?;
            let pairs = set
                .record_ids
                .iter()
                .map(|id| {
                    let r = pool.iter().find(|r| &r.id == id).ok_or_else(|| {
                        Error::InvalidInput(format!("shot `{id}` is not in the training pool"))
                    })?;
                    let claim = r
                        .reference_claim
                        .clone()
                        .ok_or_else(|| Error::MissingField {
                            id: id.clone(),
                            field: "normalized_claim",
                        })?;
                    Ok((r.post().to_string(), claim))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(pairs)
        }
    };
    let records = read_jsonl(&a.input)?;
    let mut rows = Vec::new();
    for r in records
        .iter()
        .filter(|r| r.language == a.lang && a.split.is_none_or(|s| r.split == s))
    {
        let prompt = match &shots {
            Some(s) => template.render_few_shot(s, r.post()),
            None => template.render_zero_shot(r.post()),
        }
        .map_err(|e| Error::InvalidInput(format!("record `{}`: {e}", r.id)))?;
        rows.push(PromptRow {
            id: r.id.clone(),
            language: r.language,
            prompt,
        });
    }
    let skipped = records.len() - rows.len();
    if skipped > 0 {
        log::info!("skipped {skipped} records in other languages or splits");
    }
    if rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    write_jsonl(&a.out, &rows)
}

/// Writes every row even when some requests fail; failures turn the exit
/// status to the network code.
fn cmd_infer(cfg: &PipelineConfig, a: InferArgs) -> Result<i32> {
    let endpoint = ModelEndpoint::from_file(&a.endpoint)?;
    let prompts: Vec<PromptRow> = read_jsonl_as(&a.prompts)?;
    if prompts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let concurrency = a.concurrency.unwrap_or(cfg.inference.concurrency);
    if concurrency == 0 {
        return Err(Error::Config("--concurrency must be at least 1".into()));
    }
    let requests: Vec<GenerationRequest> = prompts
        .iter()
        .map(|p| GenerationRequest {
            prompt: p.prompt.clone(),
            temperature: a.temperature.unwrap_or(cfg.inference.temperature),
            max_tokens: a.max_tokens.unwrap_or(cfg.inference.max_tokens),
        })
        .collect();
    for (p, r) in prompts.iter().zip(&requests) {
        r.validate()
            .map_err(|e| Error::InvalidInput(format!("prompt `{}`: {e}", p.id)))?;
    }
    let gateway = Gateway::from_env(endpoint)?;
    let cache = ResponseCache::open(&a.cache)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let results = runtime.block_on(gateway.batch_generate(&requests, concurrency, Some(&cache)))?;

    let mut failed = 0usize;
    let rows: Vec<InferenceRow> = prompts
        .iter()
        .zip(results)
        .map(|(p, r)| match r {
            Ok(g) => InferenceRow {
                id: p.id.clone(),
                language: p.language,
                prediction: Some(g.text),
                from_cache: g.from_cache,
                attempt_count: g.attempt_count,
                latency_ms: g.latency_ms,
                error: None,
            },
            Err(e) => {
                failed += 1;
                log::error!("{}: {e}", p.id);
                InferenceRow {
                    id: p.id.clone(),
                    language: p.language,
                    prediction: None,
                    from_cache: false,
                    attempt_count: 0,
                    latency_ms: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    write_jsonl(&a.out, &rows)?;
    let cached = rows.iter().filter(|r| r.from_cache).count();
    log::info!(
        "{} prompts: {cached} from cache, {} network calls, {failed} failed",
        rows.len(),
        gateway.network_calls()
    );
    if failed > 0 {
        eprintln!(
            "error: {failed} of {} requests failed; see `error` fields in {}",
            rows.len(),
            a.out.display()
        );
        return Ok(EXIT_NETWORK);
    }
    Ok(EXIT_OK)
}

/// Reads predictions; rows without a prediction (failed requests) are
/// dropped and later scored as missing.
fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let rows: Vec<InferenceRow> = read_jsonl_as(path)?;
    let total = rows.len();
    let preds: Vec<Prediction> = rows
        .into_iter()
        .filter_map(|r| {
            r.prediction.map(|prediction| Prediction {
                id: r.id,
                language: r.language,
                prediction,
            })
        })
        .collect();
    if preds.len() < total {
        log::warn!("{} rows without a prediction", total - preds.len());
    }
    Ok(preds)
}

fn run_scoring(
    cfg: &PipelineConfig,
    pred: &Path,
    reference: &Path,
    split: Split,
    labels: RunLabels,
) -> Result<crate::report::ScoreReport> {
    let preds = read_predictions(pred)?;
    let refs: Vec<Record> = read_jsonl(reference)?
        .into_iter()
        .filter(|r| r.split == split)
        .collect();
    if refs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no {split} records in {}",
            reference.display()
        )));
    }
    let meteor = Meteor::new(cfg.meteor.clone())?;
    let report = score_run(&preds, &refs, &meteor, &labels)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

fn cmd_score(cfg: &PipelineConfig, a: ScoreArgs) -> Result<()> {
    let labels = RunLabels {
        strategy: a.strategy_label,
        model: a.model_label,
    };
    let report = run_scoring(cfg, &a.pred, &a.reference, a.split, labels)?;
    emit(a.out.as_deref(), &to_json(&report)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ResultsFile {
    Report { results: Vec<LanguageResult> },
    List(Vec<LanguageResult>),
}

fn cmd_report(cfg: &PipelineConfig, a: ReportArgs) -> Result<()> {
    let mut results = Vec::new();
    if let (Some(pred), Some(reference)) = (&a.pred, &a.reference) {
        let labels = RunLabels {
            strategy: a.strategy_label.clone(),
            model: a.model_label.clone(),
        };
        results.extend(run_scoring(cfg, pred, reference, a.split, labels)?.results);
    }
    for path in &a.results {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: ResultsFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        results.extend(match parsed {
            ResultsFile::Report { results } => results,
            ResultsFile::List(list) => list,
        });
    }
    emit(a.out.as_deref(), &leaderboard_table(&results, a.format)?)
}

fn cmd_hparams(a: HparamsArgs) -> Result<()> {
    let grid = emit_hparam_grid();
    match &a.out {
        Some(p) => write_jsonl(p, &grid),
        None => {
            let mut text = String::new();
            for c in &grid {
                text.push_str(&serde_json::to_string(c)?);
                text.push('\n');
            }
            emit(None, &text)
        }
    }
}
