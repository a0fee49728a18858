//! `anon` subcommands. Each is a thin composition of core operations.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use anon_core::detect::{DetectorConfig, DetectorKind, Pipeline};
use anon_core::eval::{evaluate_conditions, evaluate_detections, render_table, Averaging, ConditionReport};
use anon_core::prep::{corpus_stats, prepare_corpus, CorpusStats, NegativeScope, PrepConfig, PrepReport};
use anon_core::redact::{assign_placeholders, render, PlaceholderPolicy};
use anon_core::store::{self, ProjectStore};
use anon_core::uniformize::{uniformize, UniformizeConfig};
use anon_core::{ingest_text, Document, EntitySpan, LabelSet, Language};

use crate::io::{self, InputError, SpanFile};

#[derive(Debug, Parser)]
#[command(name = "anon", version, about = "Anonymization of court rulings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus JSONL -> IOB2 training windows (train/validation/test) plus stats.
    Prep(PrepArgs),
    /// Run detectors over documents, one span list per document.
    Detect(DetectArgs),
    /// Propagate detected surfaces over their whole documents.
    Uniformize(UniformizeArgs),
    /// Anonymized text or HTML from a review project, or from accepted spans.
    Redact(RedactArgs),
    /// Score predictions (or a detector pipeline) against gold, normal and uniformized.
    Eval(EvalArgs),
    /// Start the HTTP review service.
    Serve(ServeArgs),
    /// Token and entity distributions per language.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 192)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.5)]
    pub stride_ratio: f64,
    #[arg(long, default_value_t = 1.5)]
    pub neg_ratio: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// train,validation,test fractions
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    /// Comma-separated label inventory.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long, value_enum, default_value_t = Scope::PerLanguage)]
    pub negative_scope: Scope,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scope {
    PerLanguage,
    Global,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Comma-separated: regex, gazetteer, conventional, model.
    #[arg(long, default_value = "regex,gazetteer,conventional")]
    pub detectors: String,
    /// JSON detector configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "ANON_MODEL_ENDPOINT")]
    pub model_endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Documents as JSONL.
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    pub input: Option<PathBuf>,
    /// A single plain-text ruling.
    #[arg(long, requires = "language")]
    pub text: Option<PathBuf>,
    #[arg(long)]
    pub language: Option<Language>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UniformizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub spans: PathBuf,
    #[arg(long)]
    pub case_insensitive: bool,
    #[arg(long, default_value_t = 2)]
    pub min_surface_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    Txt,
    Html,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Policy {
    Letters,
    LabelNumbered,
}

#[derive(Debug, Args)]
pub struct RedactArgs {
    /// A saved review project.
    #[arg(long, conflicts_with_all = ["input", "spans"], required_unless_present = "input")]
    pub project: Option<PathBuf>,
    /// Documents as JSONL; every span in --spans counts as accepted.
    #[arg(long, requires = "spans")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub spans: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Policy::Letters)]
    pub policy: Policy,
    #[arg(long, value_enum, default_value_t = ExportFormat::Txt)]
    pub format: ExportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Documents with gold spans, as JSONL.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predicted spans as written by `detect`; without it the detectors run.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
    #[arg(long, value_enum, default_value_t = Avg::Micro)]
    pub averaging: Avg,
    /// Row name in the table.
    #[arg(long, default_value = "detectors")]
    pub name: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Avg {
    Micro,
    Macro,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "ANON_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, env = "ANON_PROJECT_DIR", default_value = "projects")]
    pub project_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "ANON_MODEL_ENDPOINT")]
    pub model_endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn invalid(e: impl Display) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<store::StoreError> for CliError {
    fn from(e: store::StoreError) -> Self {
        match e {
            store::StoreError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prep(a) => prep(a),
        Command::Detect(a) => detect(a),
        Command::Uniformize(a) => uniformize_cmd(a),
        Command::Redact(a) => redact(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
        Command::Stats(a) => stats(a),
    }
}

fn parse_fractions(s: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Invalid(format!("--split {s:?}: {e}")))?;
    <[f64; 3]>::try_from(parts).map_err(|_| CliError::Invalid(format!("--split needs three fractions, got {s:?}")))
}

#[derive(Debug, Serialize)]
struct PrepSummary {
    config: PrepConfig,
    report: PrepReport,
    train: usize,
    validation: usize,
    test: usize,
    corpus: CorpusStats,
}

fn prep(a: PrepArgs) -> Result<(), CliError> {
    let cfg = PrepConfig {
        max_seq_len: a.max_len,
        truncation_stride_ratio: a.stride_ratio,
        neg_to_pos_ratio: a.neg_ratio,
        split_fractions: parse_fractions(&a.split)?,
        rng_seed: a.seed,
        negative_scope: match a.negative_scope {
            Scope::PerLanguage => NegativeScope::PerLanguage,
            Scope::Global => NegativeScope::Global,
        },
    };
    cfg.validate().map_err(CliError::invalid)?;
    let labels = match &a.labels {
        Some(l) => LabelSet::new(l.split(',').map(str::trim)).map_err(CliError::invalid)?,
        None => LabelSet::default(),
    };
    let docs = io::read_documents(&a.input)?;
    let corpus = corpus_stats(&docs);
    let data = prepare_corpus(docs, &labels, &cfg).map_err(CliError::invalid)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", a.out_dir.display())))?;
    for (name, ex) in [
        ("train", &data.train),
        ("validation", &data.validation),
        ("test", &data.test),
    ] {
        let path = a.out_dir.join(format!("{name}.jsonl"));
        io::write_jsonl(Some(&path), ex)?;
        tracing::info!(path = %path.display(), windows = ex.len(), "wrote split");
    }
    let summary = PrepSummary {
        train: data.train.len(),
        validation: data.validation.len(),
        test: data.test.len(),
        config: cfg,
        report: data.report,
        corpus,
    };
    io::write_json(Some(&a.out_dir.join("stats.json")), &summary)?;
    Ok(())
}

fn detector_config(a: &DetectorArgs) -> Result<DetectorConfig, CliError> {
    let mut cfg: DetectorConfig = match &a.config {
        Some(p) => serde_json::from_str(&io::read_to_string(p)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?,
        None => DetectorConfig::default(),
    };
    if a.model_endpoint.is_some() {
        cfg.model_endpoint = a.model_endpoint.clone();
    }
    Ok(cfg)
}

fn pipeline(a: &DetectorArgs) -> Result<Pipeline, CliError> {
    let kinds = DetectorKind::parse_list(&a.detectors).map_err(CliError::invalid)?;
    Pipeline::new(detector_config(a)?, &kinds).map_err(CliError::invalid)
}

fn detect(a: DetectArgs) -> Result<(), CliError> {
    // Validate the configuration before touching the input.
    let pipeline = pipeline(&a.detector)?;
    let docs = match (&a.input, &a.text) {
        (Some(p), _) => io::read_documents(p)?,
        (None, Some(p)) => {
            let lang = a.language.expect("clap enforces --language with --text");
            let raw = io::read_to_string(p)?;
            vec![ingest_text(&raw, lang).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?]
        }
        (None, None) => unreachable!("clap requires --input or --text"),
    };
    let mut out = Vec::with_capacity(docs.len());
    for doc in &docs {
        let r = pipeline.run(doc);
        let mut warnings = r.warnings.clone();
        for f in &r.failures {
            tracing::warn!(doc = doc.id(), detector = %f.detector, "{}", f.error);
            warnings.push(format!("{} detector failed: {}", f.detector, f.error));
        }
        tracing::info!(doc = doc.id(), spans = r.spans.len(), "detected");
        out.push(SpanFile::new(doc.id(), &r.spans, warnings));
    }
    io::write_jsonl(a.out.as_deref(), &out)?;
    Ok(())
}

/// Detections keyed by document id; documents absent from the file get none.
fn read_spans(docs: &[Document], path: &Path) -> Result<Vec<Vec<EntitySpan>>, CliError> {
    let files: Vec<SpanFile> = io::read_jsonl(path)?;
    let index: BTreeMap<&str, usize> = docs.iter().enumerate().map(|(i, d)| (d.id(), i)).collect();
    let mut out = vec![Vec::new(); docs.len()];
    for (n, f) in files.iter().enumerate() {
        let Some(&i) = index.get(f.doc_id.as_str()) else {
            return Err(CliError::Invalid(format!(
                "{}, record {}: unknown doc_id {:?}",
                path.display(),
                n + 1,
                f.doc_id
            )));
        };
        for rec in &f.spans {
            let e = rec
                .to_entity(&docs[i])
                .map_err(|e| CliError::Invalid(format!("{}, doc {}: {e}", path.display(), f.doc_id)))?;
            out[i].push(e);
        }
    }
    Ok(out)
}

fn uniformize_cmd(a: UniformizeArgs) -> Result<(), CliError> {
    let cfg = UniformizeConfig {
        case_sensitive: !a.case_insensitive,
        min_surface_len: a.min_surface_len,
        ..Default::default()
    };
    cfg.validate().map_err(CliError::invalid)?;
    let docs = io::read_documents(&a.input)?;
    let spans = read_spans(&docs, &a.spans)?;
    let mut out = Vec::with_capacity(docs.len());
    for (doc, s) in docs.iter().zip(&spans) {
        let u = uniformize(doc, s, &cfg).map_err(CliError::invalid)?;
        tracing::info!(doc = doc.id(), before = s.len(), after = u.len(), "uniformized");
        out.push(SpanFile::new(doc.id(), &u, Vec::new()));
    }
    io::write_jsonl(a.out.as_deref(), &out)?;
    Ok(())
}

fn redact(a: RedactArgs) -> Result<(), CliError> {
    let mut parts = Vec::new();
    if let Some(path) = &a.project {
        let project = store::load(path)?;
        parts.push(match a.format {
            ExportFormat::Txt => project.anonymize()?.text,
            ExportFormat::Html => project.export_html()?,
        });
    } else {
        let input = a.input.as_deref().expect("clap requires --project or --input");
        let docs = io::read_documents(input)?;
        let spans = read_spans(&docs, a.spans.as_deref().expect("clap requires --spans with --input"))?;
        let policy = match a.policy {
            Policy::Letters => PlaceholderPolicy::Letters,
            Policy::LabelNumbered => PlaceholderPolicy::LabelNumbered,
        };
        for (doc, s) in docs.iter().zip(&spans) {
            let map = assign_placeholders(doc, s, &policy);
            for w in &map.warnings {
                tracing::warn!(doc = doc.id(), "{w}");
            }
            let anon = render(doc, s, &map).map_err(CliError::invalid)?;
            parts.push(match a.format {
                ExportFormat::Txt => anon.text,
                ExportFormat::Html => anon.to_html(&map, |_| "accepted"),
            });
        }
    }
    let mut text = parts.join("\n");
    if !text.ends_with('\n') {
        text.push('\n');
    }
    io::write_text(a.out.as_deref(), &text)?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let docs = io::read_documents(&a.gold)?;
    let averaging = match a.averaging {
        Avg::Micro => Averaging::Micro,
        Avg::Macro => Averaging::Macro,
    };
    let ucfg = UniformizeConfig::default();
    let report: ConditionReport = match &a.pred {
        Some(p) => {
            let det = read_spans(&docs, p)?;
            evaluate_detections(&docs, &det, &ucfg, averaging).map_err(CliError::invalid)?
        }
        None => {
            let pipeline = pipeline(&a.detector)?;
            evaluate_conditions(&docs, &pipeline, &ucfg, averaging).map_err(CliError::invalid)?
        }
    };
    for w in &report.normal.meta.warnings {
        tracing::warn!("{w}");
    }
    match a.format {
        ReportFormat::Table => io::write_text(a.out.as_deref(), &render_table(&[(&a.name, &report)]))?,
        ReportFormat::Json => io::write_json(a.out.as_deref(), &report)?,
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let docs = io::read_documents(&a.input)?;
    io::write_json(a.out.as_deref(), &corpus_stats(&docs))?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let detectors = detector_config(&DetectorArgs {
        detectors: String::new(),
        config: a.config.clone(),
        model_endpoint: a.model_endpoint.clone(),
    })?;
    detectors.validate().map_err(CliError::invalid)?;
    let store = ProjectStore::open(&a.project_dir)?;
    let state = crate::api::AppState::new(store, detectors, UniformizeConfig::default());
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(async move {
        let addr = format!("{}:{}", a.bind, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
        tracing::info!(%addr, dir = %a.project_dir.display(), "serving");
        axum::serve(listener, crate::api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })
}
