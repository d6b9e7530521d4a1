use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use clarify_core::clusters::{sample_pairs, ClusterAssignment, ClusterEntry};
use clarify_core::ingest::{prepare_corpus, read_raw_csv, read_raw_jsonl, IngestConfig, RawContribution};
use clarify_core::io::{read_jsonl, write_jsonl};
use clarify_core::quality::{fit_mle, FitConfig, LikelihoodForm, QualityDataset};
use clarify_core::stats::Alternative;
use clarify_core::textmetrics::{agreement_report, DocumentPair};
use clarify_core::{AnnotationRecord, ClarificationEvent, Contribution};
use clarify_eval::{build_items, judge_pairs, JudgeConfig};
use clarify_gateway::GatewayConfig;
use clarify_pipeline::{clarification_diagnostics, corpus_stats, run_corpus, PipelineConfig, RunOptions};
use clarify_service::{builtin_tutorial, load_tutorial, serve, Campaign, Service, ServiceConfig, ServiceOptions, SystemClock};
use serde::{Deserialize, Serialize};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "clarify", version, about = "Corpus-clarification workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deduplicate, filter and optionally sample raw contributions.
    Ingest(IngestArgs),
    /// Annotation agreement metrics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Clarification quality model.
    #[command(subcommand)]
    Quality(QualityCommand),
    /// Batch clarification runs and their reports.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Clustering comparison by pairwise judging.
    #[command(subcommand)]
    Clustereval(ClusterevalCommand),
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// CSV or JSONL, chosen by extension.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the summary JSON; stdout when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    min_chars: usize,
    #[arg(long, default_value_t = 600)]
    max_chars: usize,
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Agreement between two annotation sets of the same contributions.
    Agree {
        #[arg(long)]
        a: PathBuf,
        /// Reference side.
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "lambda", default_values_t = vec![0.5, 1.0])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 15)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Paper,
    Censored,
}

impl From<Form> for LikelihoodForm {
    fn from(f: Form) -> Self {
        match f {
            Form::Paper => LikelihoodForm::PaperProduct,
            Form::Censored => LikelihoodForm::StandardCensored,
        }
    }
}

#[derive(Subcommand)]
enum QualityCommand {
    /// Fit per-backend quality distributions to clarification events.
    Fit {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, value_enum, default_value_t = Form::Paper)]
        form: Form,
        /// Number of attempt thresholds; the largest attempt seen when omitted.
        #[arg(long)]
        thresholds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Extract, detect and clarify every contribution of a corpus.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        /// TOML holding both the pipeline settings and the backends.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Discard an existing checkpoint.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Segment-type distribution per theme.
    Stats {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Containment and length diagnostics of clarifications.
    Diagnostics {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Tail {
    TwoSided,
    Greater,
    Less,
}

#[derive(Subcommand)]
enum ClusterevalCommand {
    /// Judge same-cluster pairs of two clusterings against each other.
    Run {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Pairs per theme.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gateway TOML.
        #[arg(long)]
        config: PathBuf,
        /// Backend name; the first configured one when omitted.
        #[arg(long)]
        backend: Option<String>,
        /// JSONL of {text_id, text} used to resolve `surface_text_id`.
        #[arg(long)]
        surface: Option<PathBuf>,
        /// Cluster ids treated as noise and never sampled.
        #[arg(long = "noise", default_values_t = vec!["-1".to_string()])]
        noise: Vec<String>,
        #[arg(long, value_enum, default_value_t = Tail::TwoSided)]
        alternative: Tail,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
struct SurfaceText {
    text_id: String,
    text: String,
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn ingest(args: IngestArgs) -> Result<()> {
    let cfg = IngestConfig {
        min_chars: args.min_chars,
        max_chars: args.max_chars,
        sample_size: args.sample,
        seed: args.seed,
        ..IngestConfig::default()
    };
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let is_csv = args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let raw: Box<dyn Iterator<Item = clarify_core::Result<RawContribution>>> = if is_csv {
        Box::new(read_raw_csv(file))
    } else {
        Box::new(read_raw_jsonl(BufReader::new(file)))
    };
    let (corpus, summary) = prepare_corpus(raw, &cfg)?;
    write_jsonl(&args.out, &corpus)?;
    write_json(&summary, args.summary.as_deref())
}

fn agree(a: &Path, b: &Path, corpus: &Path, lambdas: &[f64], k: usize, out: Option<&Path>) -> Result<()> {
    let corpus: Vec<Contribution> = load(corpus)?;
    let index: HashMap<&str, &Contribution> = corpus.iter().map(|c| (c.id.as_str(), c)).collect();
    let side_b: HashMap<String, AnnotationRecord> =
        load::<AnnotationRecord>(b)?.into_iter().map(|r| (r.contribution_id.clone(), r)).collect();
    let side_a: Vec<AnnotationRecord> = load(a)?;
    let mut pairs = Vec::new();
    let mut unpaired = 0usize;
    for ra in &side_a {
        match (index.get(ra.contribution_id.as_str()), side_b.get(&ra.contribution_id)) {
            (Some(c), Some(rb)) => pairs.push(DocumentPair { contribution: c, a: ra, b: rb }),
            (None, _) => bail!("contribution {} is not in the corpus", ra.contribution_id),
            (Some(_), None) => unpaired += 1,
        }
    }
    if unpaired > 0 {
        tracing::warn!(unpaired, "records of --a without a counterpart in --b");
    }
    let report = agreement_report(&pairs, lambdas, k)?;
    write_json(&report, out)
}

fn quality_fit(events: &Path, form: Form, thresholds: Option<usize>, out: Option<&Path>) -> Result<()> {
    let events: Vec<ClarificationEvent> = load(events)?;
    let data = QualityDataset::from_events(&events)?;
    let cfg = FitConfig { n_thresholds: thresholds, ..FitConfig::default() };
    let fit = fit_mle(&data, &cfg, form.into())?;
    if !fit.converged {
        tracing::warn!("optimizer stopped before convergence");
    }
    write_json(&fit, out)
}

async fn pipeline_run(corpus: &Path, config: &Path, out: &Path, force: bool, stop_after: Option<usize>) -> Result<()> {
    let corpus: Vec<Contribution> = load(corpus)?;
    let cfg = PipelineConfig::load(config)?;
    let pool = GatewayConfig::load(config)?.build_pool()?;
    let mut opts = RunOptions::new(out);
    opts.force = force;
    opts.stop_after = stop_after;
    let summary = run_corpus(&corpus, &cfg, &pool, &opts).await?;
    write_json(&summary, None)
}

fn assignment(path: &Path) -> Result<ClusterAssignment> {
    Ok(ClusterAssignment::new(load::<ClusterEntry>(path)?)?)
}

#[allow(clippy::too_many_arguments)]
async fn clustereval(
    a: &Path,
    b: &Path,
    n: usize,
    seed: u64,
    config: &Path,
    backend: Option<&str>,
    surface: Option<&Path>,
    noise: &[String],
    alternative: Tail,
    parallelism: usize,
    out: Option<&Path>,
) -> Result<()> {
    let gateway = GatewayConfig::load(config)?;
    let pool = gateway.build_pool()?;
    let name = match backend {
        Some(n) => n.to_string(),
        None => pool.names().into_iter().next().context("no backend configured")?,
    };
    let judge = pool.get(&name)?;
    let (asg_a, asg_b) = (assignment(a)?, assignment(b)?);
    let noise: Vec<&str> = noise.iter().map(String::as_str).collect();
    // Independent streams so that the two samples do not share draws.
    let sample_a = sample_pairs(&asg_a, n, seed, &noise);
    let sample_b = sample_pairs(&asg_b, n, seed.wrapping_add(1), &noise);
    for (label, s) in [("a", &sample_a), ("b", &sample_b)] {
        for (theme, short) in &s.shortfall {
            tracing::warn!(side = label, theme = %theme, short, "theme has too few same-cluster pairs");
        }
    }
    let surface_texts: HashMap<String, String> = match surface {
        Some(p) => load::<SurfaceText>(p)?.into_iter().map(|s| (s.text_id, s.text)).collect(),
        None => HashMap::new(),
    };
    let items = build_items(&sample_a, &asg_a, &sample_b, &asg_b, &surface_texts)?;
    let cfg = JudgeConfig {
        language: gateway.language.clone(),
        one_shot: gateway.one_shot,
        seed,
        parallelism,
        alternative: match alternative {
            Tail::TwoSided => Alternative::TwoSided,
            Tail::Greater => Alternative::Greater,
            Tail::Less => Alternative::Less,
        },
        ..JudgeConfig::default()
    };
    let report = judge_pairs(&items, judge.as_ref(), &cfg).await?;
    write_json(&report, out)
}

async fn serve_cmd(config: &Path) -> Result<()> {
    let cfg = ServiceConfig::load(config)?;
    cfg.validate()?;
    let pool = GatewayConfig::load(config)?.build_pool()?;
    let corpus: Vec<Contribution> = load(&cfg.corpus)?;
    let tutorial = match &cfg.tutorial {
        Some(p) => load_tutorial(p)?,
        None => builtin_tutorial(),
    };
    let admin = std::env::var(&cfg.admin_token_env).ok().filter(|t| !t.is_empty());
    if admin.is_none() {
        tracing::warn!(var = %cfg.admin_token_env, "admin token not set; admin endpoints are disabled");
    }
    let campaign = Campaign::new(cfg.campaign.clone(), corpus, tutorial)?;
    let options = ServiceOptions { snapshot_interval: cfg.snapshot_interval, ..ServiceOptions::default() };
    std::fs::create_dir_all(&cfg.data_dir)?;
    let service =
        Service::open(&cfg.data_dir, campaign, cfg.accounts.clone(), admin, pool, Arc::new(SystemClock), options)?;
    serve(Arc::new(service), &cfg.bind, cfg.static_dir.clone()).await?;
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Ingest(args) => ingest(args),
        Command::Metrics(MetricsCommand::Agree { a, b, corpus, lambdas, k, out }) => {
            agree(&a, &b, &corpus, &lambdas, k, out.as_deref())
        }
        Command::Quality(QualityCommand::Fit { events, form, thresholds, out }) => {
            quality_fit(&events, form, thresholds, out.as_deref())
        }
        Command::Pipeline(PipelineCommand::Run { corpus, config, out, force, stop_after }) => {
            pipeline_run(&corpus, &config, &out, force, stop_after).await
        }
        Command::Pipeline(PipelineCommand::Stats { records, corpus, out }) => {
            let stats = corpus_stats(&load(&records)?, &load(&corpus)?)?;
            write_json(&stats, out.as_deref())
        }
        Command::Pipeline(PipelineCommand::Diagnostics { records, corpus, out }) => {
            let diag = clarification_diagnostics(&load(&records)?, &load(&corpus)?)?;
            write_json(&diag, out.as_deref())
        }
        Command::Clustereval(ClusterevalCommand::Run {
            a,
            b,
            n,
            seed,
            config,
            backend,
            surface,
            noise,
            alternative,
            parallelism,
            out,
        }) => {
            clustereval(
                &a,
                &b,
                n,
                seed,
                &config,
                backend.as_deref(),
                surface.as_deref(),
                &noise,
                alternative,
                parallelism,
                out.as_deref(),
            )
            .await
        }
        Command::Serve { config } => serve_cmd(&config).await,
    }
}
