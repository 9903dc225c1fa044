//! `xproject`: corpus statistics, splitting, annotation projection, marker
//! trials, evaluation and chatbot scaffold generation.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 backend or network error.

mod config;

use std::collections::{BTreeSet, HashSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use xproject_core::botgen::{self, PipelineTemplate};
use xproject_core::corpus::{self, Dataset, SplitSpec, WOLOF_BOT_INTENTS};
use xproject_core::eval::{self, ClassReport};
use xproject_core::markerlab::{self, MarkerError, WrapMode};
use xproject_core::projection::{self, AllocatorMode, ProjectionError, ProjectionOptions, QuarantineReason};
use xproject_core::translator::{
    FaultBackend, FaultProfile, IdentityBackend, PseudoBackend, RemoteBackend, RemoteConfig, ReverseBackend,
    TranslationBackend, TranslationCache, Translator,
};

#[derive(Parser)]
#[command(name = "xproject", version, about = "Cross-lingual annotation projection toolkit")]
struct Cli {
    /// TOML file of default flag values (keys are long flag names)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More logging on stderr (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-domain and per-intent example counts as JSON
    Stats(StatsArgs),
    /// Seeded train/test split into two corpus files
    Split(SplitArgs),
    /// Project annotations through a translation backend
    Project(ProjectArgs),
    /// Measure which marker schemes survive a backend
    Markers(MarkersArgs),
    /// Score prediction files
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Generate a chatbot project from an ontology
    Generate(GenerateArgs),
    /// Check a generated project for cross-file consistency
    ValidateScaffold(ValidateArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// MASSIVE-style JSONL corpus
    corpus: PathBuf,
    /// Keep only this locale (default: locale of the first record)
    #[arg(long)]
    locale: Option<String>,
    /// Comma-separated intent filter
    #[arg(long, value_delimiter = ',', conflicts_with = "bot_intents")]
    intents: Vec<String>,
    /// Filter to the 27 intents of the Wolof bot
    #[arg(long)]
    bot_intents: bool,
    /// Fail on the first malformed record instead of skipping it
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: CorpusArgs,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    input: CorpusArgs,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep per-intent proportions in both halves
    #[arg(long)]
    stratified: bool,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Remote,
    Identity,
    Reverse,
    Pseudo,
    Fault,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaseKind {
    Identity,
    Reverse,
    Pseudo,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "identity")]
    backend: BackendKind,
    /// Remote endpoint (overrides XPROJECT_MT_URL)
    #[arg(long)]
    mt_url: Option<String>,
    /// Backend wrapped by the fault injector
    #[arg(long, value_enum)]
    fault_base: Option<BaseKind>,
    #[arg(long)]
    fault_seed: Option<u64>,
    #[arg(long)]
    drop_prob: Option<f64>,
    #[arg(long)]
    mutate_prob: Option<f64>,
    #[arg(long)]
    content_prob: Option<f64>,
    #[arg(long)]
    dup_prob: Option<f64>,
    /// Strip every catalog delimiter except this scheme's
    #[arg(long, value_name = "SCHEME")]
    strip_all_but: Option<String>,
    #[arg(long)]
    strip_prob: Option<f64>,
    /// Persistent translation cache (JSONL)
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Maximum concurrent backend requests
    #[arg(long, default_value_t = 4)]
    parallel: usize,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    input: CorpusArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    src: String,
    #[arg(long)]
    tgt: String,
    /// Locale written into projected records (default: the target code)
    #[arg(long)]
    tgt_locale: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quarantine: PathBuf,
    /// Also write the run report here
    #[arg(long)]
    report: Option<PathBuf>,
    /// Skip examples already present in --out
    #[arg(long)]
    resume: bool,
    #[arg(long, value_enum, default_value = "global")]
    allocator: AllocatorArg,
    /// Exit 2 when the quarantined fraction exceeds this
    #[arg(long, default_value_t = 1.0)]
    max_quarantine_rate: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum AllocatorArg {
    Global,
    PerExample,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Identifier,
    Surface,
}

#[derive(Args)]
struct MarkersArgs {
    #[command(flatten)]
    input: CorpusArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    src: String,
    #[arg(long)]
    tgt: String,
    /// Comma-separated catalog scheme names (default: all)
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,
    #[arg(long, value_enum, default_value = "identifier")]
    mode: ModeArg,
    /// Use only the first N examples
    #[arg(long)]
    sample: Option<usize>,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Intent classification reports (one column per file)
    Intents(EvalArgs),
    /// Slot filling reports (one column per file)
    Slots(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// JSONL files with gold and predicted labels
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Column names, one per file (default: file stems)
    #[arg(long, value_delimiter = ',')]
    names: Vec<String>,
    /// Write confusion and histogram CSVs here (intents only)
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Directory of domain folders / workbooks, or a single .xlsx
    ontology: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML pipeline template replacing the default stages
    #[arg(long)]
    pipeline_template: Option<PathBuf>,
    #[arg(long)]
    language: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    dir: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Backend(anyhow::Error),
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn emit_json(value: &serde_json::Value) -> Outcome {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(data)
        .and_then(|_| writeln!(out).map_err(data))
}

fn load(input: &CorpusArgs) -> Outcome<Dataset> {
    let filter: Option<BTreeSet<String>> = if input.bot_intents {
        Some(WOLOF_BOT_INTENTS.iter().map(|s| s.to_string()).collect())
    } else if !input.intents.is_empty() {
        Some(input.intents.iter().cloned().collect())
    } else {
        None
    };
    let outcome = corpus::load_corpus(&input.corpus, input.locale.as_deref(), filter.as_ref()).map_err(data)?;
    if input.strict {
        return outcome.into_strict().map_err(data);
    }
    for d in &outcome.diagnostics {
        log::warn!("{}:{}: {} (skipped)", input.corpus.display(), d.line, d.message);
    }
    Ok(outcome.dataset)
}

fn cmd_stats(a: StatsArgs) -> Outcome {
    let ds = load(&a.input)?;
    let stats = corpus::stats(&ds);
    let mut table = String::new();
    for (intent, n) in &stats.per_intent {
        table.push_str(&format!("{intent:<28} {n:>6}\n"));
    }
    table.push_str(&format!("{:<28} {:>6}\n", "total", stats.total));
    eprint!("{table}");
    emit_json(&serde_json::to_value(&stats).map_err(data)?)
}

fn cmd_split(a: SplitArgs) -> Outcome {
    let ds = load(&a.input)?;
    let spec = SplitSpec {
        train_ratio: a.ratio,
        seed: a.seed,
        stratified: a.stratified,
    };
    let (train, test) = corpus::split(&ds, spec).map_err(|e| match e {
        corpus::CorpusError::InvalidRatio(_) => usage(e),
        e => data(e),
    })?;
    corpus::save_corpus(&train, &a.train_out).map_err(data)?;
    corpus::save_corpus(&test, &a.test_out).map_err(data)?;
    emit_json(&json!({
        "train": {"path": a.train_out, "examples": train.len()},
        "test": {"path": a.test_out, "examples": test.len()},
        "ratio": a.ratio,
        "seed": a.seed,
        "stratified": a.stratified,
    }))
}

fn base_backend(kind: BaseKind) -> Arc<dyn TranslationBackend> {
    match kind {
        BaseKind::Identity => Arc::new(IdentityBackend),
        BaseKind::Reverse => Arc::new(ReverseBackend),
        BaseKind::Pseudo => Arc::new(PseudoBackend),
    }
}

fn build_translator(b: &BackendArgs) -> Outcome<Translator> {
    if b.parallel == 0 {
        return Err(usage(anyhow!("--parallel must be at least 1")));
    }
    let fault_flags = b.fault_base.is_some()
        || b.fault_seed.is_some()
        || b.drop_prob.is_some()
        || b.mutate_prob.is_some()
        || b.content_prob.is_some()
        || b.dup_prob.is_some()
        || b.strip_all_but.is_some()
        || b.strip_prob.is_some();
    if fault_flags && b.backend != BackendKind::Fault {
        return Err(usage(anyhow!("fault options require --backend fault")));
    }
    if b.mt_url.is_some() && b.backend != BackendKind::Remote {
        return Err(usage(anyhow!("--mt-url requires --backend remote")));
    }
    let backend: Arc<dyn TranslationBackend> = match b.backend {
        BackendKind::Identity => Arc::new(IdentityBackend),
        BackendKind::Reverse => Arc::new(ReverseBackend),
        BackendKind::Pseudo => Arc::new(PseudoBackend),
        BackendKind::Remote => {
            let mut cfg = RemoteConfig::from_env();
            if let Some(url) = &b.mt_url {
                let token = cfg.and_then(|c| c.token);
                cfg = Some(RemoteConfig {
                    token,
                    ..RemoteConfig::new(url.clone())
                });
            }
            let cfg = cfg.ok_or_else(|| usage(anyhow!("remote backend needs --mt-url or XPROJECT_MT_URL")))?;
            Arc::new(RemoteBackend::new(cfg).map_err(usage)?)
        }
        BackendKind::Fault => {
            let strip_delimiters = match &b.strip_all_but {
                Some(keep) => {
                    if !markerlab::builtin_schemes(WrapMode::WrapIdentifier)
                        .iter()
                        .any(|s| &s.name == keep)
                    {
                        return Err(usage(anyhow!("unknown scheme {keep:?}")));
                    }
                    markerlab::catalog_delimiters_except(keep)
                }
                None => Vec::new(),
            };
            let profile = FaultProfile {
                drop_identifier_prob: b.drop_prob.unwrap_or(0.0),
                mutate_digit_to_letter_prob: b.mutate_prob.unwrap_or(0.0),
                translate_marker_content_prob: b.content_prob.unwrap_or(0.0),
                duplicate_identifier_prob: b.dup_prob.unwrap_or(0.0),
                seed: b.fault_seed.unwrap_or(0),
                strip_delimiter_prob: b
                    .strip_prob
                    .unwrap_or(if strip_delimiters.is_empty() { 0.0 } else { 1.0 }),
                strip_delimiters,
            };
            let base = base_backend(b.fault_base.unwrap_or(BaseKind::Identity));
            Arc::new(FaultBackend::new(base, profile).map_err(usage)?)
        }
    };
    let mut translator = Translator::new(backend);
    if let Some(path) = &b.cache {
        let cache = TranslationCache::open(path)
            .with_context(|| format!("cannot open cache {}", path.display()))
            .map_err(data)?;
        translator = translator.with_cache(Arc::new(cache));
    }
    Ok(translator)
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Outcome {
    let mut body = String::new();
    for l in lines {
        body.push_str(&l);
        body.push('\n');
    }
    fs::write(path, body)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(data)
}

fn cmd_project(a: ProjectArgs) -> Outcome {
    if !(0.0..=1.0).contains(&a.max_quarantine_rate) {
        return Err(usage(anyhow!("--max-quarantine-rate must be within [0, 1]")));
    }
    let ds = load(&a.input)?;
    let translator = build_translator(&a.backend)?;
    let tgt_locale = a.tgt_locale.clone().unwrap_or_else(|| a.tgt.clone());
    let mut options = ProjectionOptions::new(&a.src, &a.tgt, &tgt_locale);
    options.max_in_flight = a.backend.parallel;
    options.allocator = match a.allocator {
        AllocatorArg::Global => AllocatorMode::Global,
        AllocatorArg::PerExample => AllocatorMode::PerExample,
    };

    let mut previous = Vec::new();
    if a.resume && a.out.exists() {
        match corpus::load_corpus(&a.out, None, None) {
            Ok(o) => previous = o.dataset.examples,
            Err(corpus::CorpusError::EmptyResult { .. }) => {}
            Err(e) => return Err(data(e)),
        }
        let source_ids: HashSet<&str> = ds.examples.iter().map(|e| e.id.as_str()).collect();
        previous.retain(|e| source_ids.contains(e.id.as_str()));
        options.skip_ids = previous.iter().map(|e| e.id.clone()).collect();
        log::info!("resuming: {} example(s) already projected", previous.len());
    }

    let outcome = projection::project_dataset(&ds, &translator, &options).map_err(|e| match e {
        ProjectionError::Config(e) => usage(e),
        e => data(e),
    })?;

    let mut merged = outcome.projected.clone();
    if !previous.is_empty() {
        let mut by_id: std::collections::HashMap<String, corpus::Example> = previous
            .into_iter()
            .chain(outcome.projected.examples.clone())
            .map(|e| (e.id.clone(), e))
            .collect();
        merged.examples = ds.examples.iter().filter_map(|e| by_id.remove(&e.id)).collect();
    }
    corpus::save_corpus(&merged, &a.out).map_err(data)?;
    write_lines(
        &a.quarantine,
        outcome.quarantine.iter().map(|r| r.quarantine_line().to_string()),
    )?;

    let summary = &outcome.summary;
    let report = json!({
        "summary": summary,
        "output": {"path": a.out, "examples": merged.len()},
        "quarantine": {"path": a.quarantine, "examples": outcome.quarantine.len()},
        "backend_calls": translator.backend_calls(),
    });
    if let Some(path) = &a.report {
        let text = serde_json::to_string_pretty(&report).map_err(data)?;
        fs::write(path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(data)?;
    }
    emit_json(&report)?;

    let translation_errors = summary.quarantined_by_reason[QuarantineReason::TranslationError.as_str()];
    if summary.total > 0 && translation_errors == summary.total {
        let detail = outcome
            .quarantine
            .first()
            .and_then(|r| r.detail.clone())
            .unwrap_or_default();
        return Err(Failure::Backend(anyhow!(
            "every example failed to translate (first error: {detail})"
        )));
    }
    if summary.quarantined() > 0 {
        log::warn!(
            "{} of {} example(s) quarantined ({:.1}%)",
            summary.quarantined(),
            summary.total,
            100.0 * summary.quarantine_rate()
        );
    }
    if summary.quarantine_rate() > a.max_quarantine_rate {
        return Err(data(anyhow!(
            "quarantine rate {:.4} exceeds --max-quarantine-rate {}",
            summary.quarantine_rate(),
            a.max_quarantine_rate
        )));
    }
    Ok(())
}

fn cmd_markers(a: MarkersArgs) -> Outcome {
    let ds = load(&a.input)?;
    let translator = build_translator(&a.backend)?;
    let mode = match a.mode {
        ModeArg::Identifier => WrapMode::WrapIdentifier,
        ModeArg::Surface => WrapMode::WrapSurface,
    };
    let catalog = markerlab::builtin_schemes(mode);
    let schemes = if a.schemes.is_empty() {
        catalog
    } else {
        a.schemes
            .iter()
            .map(|name| {
                catalog
                    .iter()
                    .find(|s| &s.name == name)
                    .cloned()
                    .ok_or_else(|| usage(anyhow!("unknown scheme {name:?}")))
            })
            .collect::<Outcome<Vec<_>>>()?
    };
    let take = a.sample.unwrap_or(ds.len());
    let sample = ds
        .examples
        .iter()
        .take(take)
        .map(|e| e.utterance().with_context(|| format!("example {}", e.id)))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(data)?;
    let report = markerlab::run_trial(&sample, &schemes, &translator, &a.src, &a.tgt, a.backend.parallel).map_err(
        |e| match e {
            MarkerError::Translate(_) => Failure::Backend(e.into()),
            MarkerError::DuplicateScheme(_) | MarkerError::NoSchemes | MarkerError::InvalidScheme(_) => usage(e),
            e => data(e),
        },
    )?;
    eprint!("{}", markerlab::render_table(&report));
    emit_json(&serde_json::to_value(&report).map_err(data)?)?;
    if report.per_scheme.values().all(|s| s.errors == s.n) {
        return Err(Failure::Backend(anyhow!("every marker translation failed")));
    }
    Ok(())
}

fn column_names(files: &[PathBuf], names: &[String]) -> Outcome<Vec<String>> {
    if names.is_empty() {
        return Ok(files
            .iter()
            .map(|f| {
                f.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect());
    }
    if names.len() != files.len() {
        return Err(usage(anyhow!(
            "--names has {} entries for {} files",
            names.len(),
            files.len()
        )));
    }
    Ok(names.to_vec())
}

fn write_csv(dir: &Path, name: &str, body: &str) -> Outcome {
    let path = dir.join(name);
    fs::write(&path, body)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(data)
}

fn cmd_eval(cmd: EvalCmd) -> Outcome {
    let (slots, a) = match cmd {
        EvalCmd::Intents(a) => (false, a),
        EvalCmd::Slots(a) => (true, a),
    };
    let names = column_names(&a.files, &a.names)?;
    if let Some(dir) = &a.csv_dir {
        fs::create_dir_all(dir).map_err(data)?;
    }
    let mut reports: Vec<(String, ClassReport)> = Vec::new();
    let mut out = serde_json::Map::new();
    for (file, name) in a.files.iter().zip(&names) {
        let ctx = |e: eval::EvalError| data(anyhow!("{}: {e}", file.display()));
        if slots {
            let preds = eval::load_slot_predictions(file).map_err(ctx)?;
            let r = eval::slot_report(&preds).map_err(ctx)?;
            out.insert(name.clone(), json!({ "report": r }));
            reports.push((name.clone(), r));
        } else {
            let preds = eval::load_intent_predictions(file).map_err(ctx)?;
            let r = eval::intent_report(&preds).map_err(ctx)?;
            let cm = eval::confusion(&preds).map_err(ctx)?;
            let hist = eval::confidence_histogram(&preds).map_err(ctx)?;
            if let Some(dir) = &a.csv_dir {
                write_csv(dir, &format!("{name}_confusion.csv"), &cm.counts_csv())?;
                write_csv(
                    dir,
                    &format!("{name}_confusion_mean_confidence.csv"),
                    &cm.mean_confidence_csv(),
                )?;
                write_csv(dir, &format!("{name}_confidence_histogram.csv"), &hist.to_csv())?;
            }
            out.insert(
                name.clone(),
                json!({ "report": r, "confusion": cm, "confidence_histogram": hist }),
            );
            reports.push((name.clone(), r));
        }
    }
    let columns: Vec<(&str, &ClassReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    if slots {
        eprint!("{}", eval::render_slot_table(&columns));
    } else {
        eprint!("{}", eval::render_intent_table(&columns));
    }
    emit_json(&serde_json::Value::Object(out))
}

fn cmd_generate(a: GenerateArgs) -> Outcome {
    let ontology = botgen::load_ontology(&a.ontology).map_err(data)?;
    let mut template = match &a.pipeline_template {
        Some(p) => PipelineTemplate::load(p).map_err(data)?,
        None => PipelineTemplate::default(),
    };
    if let Some(lang) = &a.language {
        template.language = lang.clone();
    }
    let scaffold = botgen::generate_project(&ontology, &template, &a.out).map_err(data)?;
    let check = botgen::validate_scaffold(&a.out);
    emit_json(&json!({
        "out": a.out,
        "files": scaffold.files.keys().collect::<Vec<_>>(),
        "domains": ontology.domains(),
        "intents": ontology.intents.len(),
        "warnings": scaffold.warnings,
        "violations": check.violations,
    }))?;
    if !check.ok() {
        return Err(data(anyhow!("generated project failed validation")));
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    let report = botgen::validate_scaffold(&a.dir);
    emit_json(&serde_json::to_value(&report).map_err(data)?)?;
    if !report.ok() {
        for v in &report.violations {
            eprintln!("{v}");
        }
        return Err(data(anyhow!("{} violation(s)", report.violations.len())));
    }
    Ok(())
}

fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let cli = Cli::try_parse_from(&args)?;
    match &cli.config {
        Some(path) => match config::merge(&Cli::command(), args, path) {
            Ok(merged) => Cli::try_parse_from(merged),
            Err(e) => Err(Cli::command().error(clap::error::ErrorKind::InvalidValue, format!("{e:#}"))),
        },
        None => Ok(cli),
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Cmd::Stats(a) => cmd_stats(a),
        Cmd::Split(a) => cmd_split(a),
        Cmd::Project(a) => cmd_project(a),
        Cmd::Markers(a) => cmd_markers(a),
        Cmd::Eval(c) => cmd_eval(c),
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::ValidateScaffold(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, e) = match f {
                Failure::Usage(e) => (1, e),
                Failure::Data(e) => (2, e),
                Failure::Backend(e) => (3, e),
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
