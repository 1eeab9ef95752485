//! Command-line entry point.
//!
//! Data goes to files or stdout; diagnostics go to stderr. Every path ends
//! in one [`ExitStatus`].

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use medinstruct_core::mix::{
    build_mix, compute_stats, emit_training_recipe, to_jsonl, Scale, BUNDLED_SPECS,
};
use medinstruct_core::report::{parse_reports, render_markdown};
use medinstruct_core::schema::Split;
use medinstruct_core::template::{bundled_pool, convert_examples, TemplatePool};

use crate::error::{Error, ExitStatus, Result};
use crate::io::{
    ingest_split, load_manifest, load_mix_sources, load_mix_spec, read_records, read_text,
    write_records, write_text,
};
use crate::runner::{
    infer_schemes, run_eval, ApiStyle, Backend, BackendKind, DecodingParams, EvalOptions,
    FileBackend, HttpBackend, HttpConfig, MockBackend, MockMode, TOKEN_ENV,
};
use crate::synth::{dataset, write_fixtures, DATASETS};

#[derive(Debug, Parser)]
#[command(
    name = "medinstruct",
    version,
    about = "Build and evaluate biomedical instruction-tuning corpora"
)]
pub struct Cli {
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert one split of a source dataset into instruction records.
    Convert(ConvertArgs),
    /// Sample, concatenate and shuffle converted sources into a training mix.
    Mix(MixArgs),
    /// Run zero-shot evaluation over instruction records.
    Eval(EvalArgs),
    /// Print per-source and per-task counts and the content digest of a corpus.
    Stats(StatsArgs),
    /// Re-render stored evaluation reports.
    Report(ReportArgs),
    /// Write synthetic source corpora and manifests.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub split: SplitArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Template pool file; defaults to the shipped pool for the dataset.
    #[arg(long)]
    pub pool: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Mix spec file, or the name of a shipped spec.
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Quota multiplier such as `1/100`.
    #[arg(long, default_value = "1")]
    pub scale: String,
    /// Directory holding `<source>.jsonl`; defaults to the spec's directory.
    #[arg(long)]
    pub sources: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Mock,
    File,
    Http,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MockModeArg {
    Perfect,
    Corrupt,
    Refuse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ApiArg {
    Completion,
    Chat,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, value_enum)]
    pub backend: BackendArg,
    #[arg(long, value_enum, default_value = "perfect")]
    pub mock_mode: MockModeArg,
    /// Corruption probability for `--mock-mode corrupt`.
    #[arg(long, default_value_t = 0.3)]
    pub corrupt_p: f64,
    /// Seed for `--mock-mode corrupt`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSONL of `{record_id, text}` for `--backend file`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, value_enum, default_value = "completion")]
    pub api: ApiArg,
    #[arg(long)]
    pub model: Option<String>,
    /// Total attempts per request.
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 512)]
    pub max_new_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_values_t = vec!["###".to_string()])]
    pub stop: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Dataset manifests supplying label schemes; inferred from gold otherwise.
    #[arg(long)]
    pub manifest: Vec<PathBuf>,
    /// Column name in reports.
    #[arg(long, default_value = "model")]
    pub system: String,
    /// Keep parser notes in the per-record log.
    #[arg(long)]
    pub log_notes: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Md,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files; systems appear as columns in the given order.
    #[arg(long = "in", required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub per_split: usize,
    /// Datasets to write; all shipped datasets by default.
    #[arg(long)]
    pub dataset: Vec<String>,
}

/// Parses `args` and runs the command, reporting errors on stderr.
pub fn run<I, T>(args: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::Usage
            } else {
                ExitStatus::Success
            };
        }
    };
    init_logging(cli.verbose);
    match dispatch(cli.command) {
        Ok(()) => ExitStatus::Success,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Convert(a) => cmd_convert(a),
        Command::Mix(a) => cmd_mix(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn cmd_convert(a: ConvertArgs) -> Result<()> {
    let loaded = load_manifest(&a.manifest)?;
    let name = &loaded.manifest.name;
    let pool: TemplatePool = match &a.pool {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Error::data(p, e))?,
        None => bundled_pool(name).ok_or_else(|| {
            Error::Data(format!(
                "no shipped template pool for `{name}`; pass --pool"
            ))
        })?,
    };
    let examples = ingest_split(&loaded, a.split.into())?;
    let records = convert_examples(&examples, &pool, &loaded.scheme, a.seed)
        .map_err(|e| Error::Data(e.to_string()))?;
    write_records(&a.out, &records)?;
    eprintln!(
        "converted {} records from {name}/{}",
        records.len(),
        Split::from(a.split)
    );
    Ok(())
}

fn cmd_mix(a: MixArgs) -> Result<()> {
    let scale = Scale::parse(&a.scale)
        .ok_or_else(|| Error::Usage(format!("invalid --scale `{}`", a.scale)))?;
    let spec_path = Path::new(&a.spec);
    let (spec, spec_dir) = if spec_path.is_file() {
        (
            load_mix_spec(spec_path)?,
            spec_path.parent().map(Path::to_path_buf),
        )
    } else if let Some(spec) = medinstruct_core::mix::bundled_spec(&a.spec) {
        (spec, None)
    } else {
        let names: Vec<&str> = BUNDLED_SPECS.iter().map(|(n, _)| *n).collect();
        return Err(Error::Data(format!(
            "spec `{}` is neither a file nor a shipped spec ({})",
            a.spec,
            names.join(", ")
        )));
    };
    let sources_dir = a
        .sources
        .or(spec_dir)
        .ok_or_else(|| Error::Usage("--sources is required with a shipped spec".into()))?;
    let spec = spec.scaled(scale);
    let sources = load_mix_sources(&spec, &sources_dir)?;
    let records = build_mix(&spec, &sources).map_err(|e| Error::Data(e.to_string()))?;
    let stats = compute_stats(&records);
    let recipe = emit_training_recipe(&spec.name, &stats);
    write_text(
        &a.out.join(format!("{}.jsonl", spec.name)),
        &to_jsonl(&records),
    )?;
    write_text(
        &a.out.join(format!("{}.stats.json", spec.name)),
        &pretty(&stats),
    )?;
    write_text(
        &a.out.join(format!("{}.recipe.json", spec.name)),
        &pretty(&recipe),
    )?;
    print!("{}", pretty(&stats));
    Ok(())
}

fn backend_kind(a: &EvalArgs) -> Result<BackendKind> {
    Ok(match a.backend {
        BackendArg::Mock => BackendKind::Mock(match a.mock_mode {
            MockModeArg::Perfect => MockMode::Perfect,
            MockModeArg::Refuse => MockMode::Refuse,
            MockModeArg::Corrupt => {
                if !(0.0..=1.0).contains(&a.corrupt_p) {
                    return Err(Error::Usage("--corrupt-p must lie in [0, 1]".into()));
                }
                let seed = a
                    .seed
                    .ok_or_else(|| Error::Usage("--mock-mode corrupt requires --seed".into()))?;
                MockMode::Corrupt {
                    p: a.corrupt_p,
                    seed,
                }
            }
        }),
        BackendArg::File => BackendKind::File(
            a.predictions
                .clone()
                .ok_or_else(|| Error::Usage("--backend file requires --predictions".into()))?,
        ),
        BackendArg::Http => {
            let endpoint = a
                .endpoint
                .clone()
                .ok_or_else(|| Error::Usage("--backend http requires --endpoint".into()))?;
            let mut cfg = HttpConfig::new(endpoint);
            cfg.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
            cfg.max_retries = a.max_retries.max(1);
            cfg.backoff = Duration::from_millis(a.backoff_ms);
            cfg.timeout = Duration::from_secs(a.timeout_secs);
            cfg.api = match a.api {
                ApiArg::Completion => ApiStyle::Completion,
                ApiArg::Chat => ApiStyle::Chat,
            };
            cfg.model = a.model.clone();
            BackendKind::Http(cfg)
        }
    })
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let kind = backend_kind(&a)?;
    let records = read_records(&a.records)?;
    let mut schemes = infer_schemes(&records)?;
    for path in &a.manifest {
        let loaded = load_manifest(path)?;
        schemes.insert(loaded.manifest.name.clone(), loaded.scheme);
    }
    let options = EvalOptions {
        system: a.system.clone(),
        parallelism: a.parallel,
        decoding: DecodingParams {
            max_new_tokens: a.max_new_tokens,
            temperature: a.temperature,
            stop: a.stop.clone(),
        },
        verbose: a.log_notes,
    };
    // Keep a concrete mock so its corruption ledger can be written out.
    let mut mock = None;
    let backend: Box<dyn Backend> = match kind {
        BackendKind::Mock(mode) => {
            let m = Arc::new(MockBackend::new(mode));
            mock = Some(Arc::clone(&m));
            Box::new(m)
        }
        BackendKind::File(path) => Box::new(FileBackend::load(&path, &records)?),
        BackendKind::Http(cfg) => Box::new(HttpBackend::new(cfg)),
    };
    let outcome = run_eval(&records, &schemes, backend.as_ref(), &options)?;
    write_text(&a.out.join("report.json"), &outcome.report_json())?;
    write_text(
        &a.out.join("report.md"),
        &render_markdown(std::slice::from_ref(&outcome.report)),
    )?;
    write_text(&a.out.join("records.jsonl"), &outcome.log_jsonl())?;
    if let Some(m) = mock.filter(|_| matches!(a.mock_mode, MockModeArg::Corrupt)) {
        write_text(&a.out.join("corruptions.json"), &pretty(&m.ledger()))?;
    }
    let r = &outcome.report;
    eprintln!(
        "evaluated {} records: {} correct, {} wrong, {} failed, {} malformed",
        r.records, r.correct, r.wrong, r.failed, r.malformed
    );
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        for f in outcome.failures.iter().take(10) {
            eprintln!("  {}: {}", f.record_id, f.error);
        }
        Err(Error::Backend(format!(
            "{} record(s) failed; partial report written to {}",
            outcome.failures.len(),
            a.out.display()
        )))
    }
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let records = read_records(&a.input)?;
    print!("{}", pretty(&compute_stats(&records)));
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &a.input {
        reports.extend(parse_reports(&read_text(path)?).map_err(|e| Error::data(path, e))?);
    }
    match a.format {
        ReportFormat::Md => print!("{}", render_markdown(&reports)),
        ReportFormat::Json => print!("{}", pretty(&reports)),
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let defs = if a.dataset.is_empty() {
        DATASETS.iter().collect()
    } else {
        a.dataset
            .iter()
            .map(|n| dataset(n).ok_or_else(|| Error::Usage(format!("unknown dataset `{n}`"))))
            .collect::<Result<Vec<_>>>()?
    };
    let manifests: BTreeMap<String, PathBuf> = write_fixtures(&a.out, &defs, a.per_split, a.seed)?;
    for path in manifests.values() {
        println!("{}", path.display());
    }
    Ok(())
}
