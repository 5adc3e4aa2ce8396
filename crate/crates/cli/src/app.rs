//! Command dispatch for the `credence` binary: plan, answer, report, and
//! eval over the confidence-aware research engine.
//!
//! Exit codes: 0 success, 1 run failure, 2 usage error.

use crate::config::RunConfig;
use crate::offline;
use crate::render::render_report;
use crate::tracefile::TraceWriter;
use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use credence_core::deliberation::run_deliberation;
use credence_core::domain::TopicRequest;
use credence_core::harness::{load_dataset, run_benchmark, summarize_metrics, RunEcho};
use credence_core::pipeline::{plan_topic, run_report, PipelineProviders};
use credence_core::prompts::PromptPack;
use credence_core::providers::{
    HttpFetch, HttpLlm, HttpSearch, ProviderSet, ReqwestTransport, RetryPolicy,
};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

#[derive(Parser, Debug)]
#[command(name = "credence", version, about = "Confidence-aware deep research reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path; the default depends on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Trace file path (JSONL, one line per engine event).
    #[arg(long, global = true)]
    trace: Option<PathBuf>,

    /// Mock-script selector for offline runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Use the embedded fixture providers; performs zero network operations.
    #[arg(long, global = true)]
    offline: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose a topic into a report plan.
    Plan(TopicArgs),
    /// Answer one question with the deliberative search loop.
    Answer {
        question: String,
    },
    /// Produce a full claim-annotated research report.
    Report(TopicArgs),
    /// Run a QA benchmark and summarize accuracy and calibration.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct TopicArgs {
    topic: String,

    /// Language tag attached to the request.
    #[arg(long, default_value = "en")]
    language: String,

    /// Extra free-text instructions for the planner.
    #[arg(long)]
    constraints: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Line-delimited benchmark file (one JSON item per line).
    #[arg(long)]
    dataset: PathBuf,

    /// Number of equal-width calibration bins.
    #[arg(long, default_value_t = 10)]
    bins: usize,

    /// Optional per-record JSONL dump for reliability plotting.
    #[arg(long)]
    records: Option<PathBuf>,

    /// Concurrent items; defaults to the pipeline's section parallelism.
    #[arg(long)]
    parallelism: Option<usize>,
}

/// Parses argv and dispatches. Returns the process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, everything else is usage
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

struct Session {
    cfg: RunConfig,
    pack: PromptPack,
    seed: u64,
    offline: bool,
    run_id: String,
}

impl Session {
    fn open(cli: &Cli, input: &str) -> Result<Self> {
        let cfg = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let pack = match &cfg.prompt_pack_dir {
            Some(dir) => PromptPack::load_dir(dir, cfg.pack_version())
                .with_context(|| format!("cannot load prompt pack from {}", dir.display()))?,
            None => PromptPack::builtin_v1(),
        };
        let command = match &cli.command {
            Command::Plan(_) => "plan",
            Command::Answer { .. } => "answer",
            Command::Report(_) => "report",
            Command::Eval(_) => "eval",
        };
        let run_id = run_id(command, input, cli.seed, &pack.version);
        Ok(Self {
            cfg,
            pack,
            seed: cli.seed,
            offline: cli.offline,
            run_id,
        })
    }

    fn corpus_dir(&self) -> Option<&Path> {
        self.cfg.offline_corpus_dir.as_deref()
    }

    fn provider_label(&self) -> String {
        if self.offline {
            offline::provider_label(self.seed)
        } else {
            self.cfg
                .providers
                .role("researcher")
                .map(|p| p.model_name)
                .unwrap_or_else(|_| "unconfigured".to_string())
        }
    }

    fn pipeline_providers(&self) -> Result<PipelineProviders> {
        if self.offline {
            return offline::pipeline_providers(self.seed, self.corpus_dir());
        }
        let role = |name: &str| -> Result<Arc<HttpLlm<ReqwestTransport>>> {
            Ok(Arc::new(HttpLlm::new(
                self.cfg.providers.role(name)?,
                ReqwestTransport::new(),
            )))
        };
        let search_cfg = self.cfg.providers.role("search")?;
        let fetch = self.fetch_provider()?;
        Ok(PipelineProviders {
            planner: role("planner")?,
            researcher: role("researcher")?,
            writer: role("writer")?,
            reflector: role("reflector")?,
            search: Arc::new(HttpSearch::new(search_cfg, ReqwestTransport::new())),
            fetch,
        })
    }

    fn provider_set(&self) -> Result<ProviderSet> {
        if self.offline {
            return offline::provider_set(self.seed, self.corpus_dir());
        }
        let llm = Arc::new(HttpLlm::new(
            self.cfg.providers.role("researcher")?,
            ReqwestTransport::new(),
        ));
        let search = Arc::new(HttpSearch::new(
            self.cfg.providers.role("search")?,
            ReqwestTransport::new(),
        ));
        Ok(ProviderSet {
            llm,
            search,
            fetch: self.fetch_provider()?,
        })
    }

    fn fetch_provider(&self) -> Result<Arc<HttpFetch<ReqwestTransport>>> {
        let (timeout, retry) = match self.cfg.providers.role("fetch") {
            Ok(cfg) => (cfg.timeout, cfg.retry),
            Err(_) => (Duration::from_secs(30), RetryPolicy::default()),
        };
        Ok(Arc::new(HttpFetch::new(
            ReqwestTransport::new(),
            timeout,
            retry,
        )))
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Plan(args) => {
            let session = Session::open(&cli, &args.topic)?;
            cmd_plan(&cli, &session, args)
        }
        Command::Answer { question } => {
            let session = Session::open(&cli, question)?;
            cmd_answer(&cli, &session, question)
        }
        Command::Report(args) => {
            let session = Session::open(&cli, &args.topic)?;
            cmd_report(&cli, &session, args)
        }
        Command::Eval(args) => {
            let session = Session::open(&cli, &args.dataset.display().to_string())?;
            cmd_eval(&cli, &session, args)
        }
    }
}

fn request_of(args: &TopicArgs) -> TopicRequest {
    TopicRequest {
        topic: args.topic.clone(),
        language: args.language.clone(),
        constraints: args.constraints.clone(),
    }
}

fn open_trace(cli: &Cli, session: &Session) -> Result<TraceWriter> {
    let path = cli.trace.clone().unwrap_or_else(|| session.cfg.output.trace.clone());
    TraceWriter::create(&path, session.run_id.clone())
        .with_context(|| format!("cannot create trace file {}", path.display()))
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_plan(cli: &Cli, session: &Session, args: &TopicArgs) -> Result<()> {
    let providers = session.pipeline_providers()?;
    let trace = open_trace(cli, session)?;
    let plan = plan_topic(&request_of(args), providers.planner.as_ref(), &session.pack, &trace)?;
    trace.finish()?;

    let out = cli.out.clone().unwrap_or_else(|| session.cfg.output.plan.clone());
    write_output(&out, &format!("{}\n", serde_json::to_string_pretty(&plan)?))?;
    println!("plan: {} sections -> {}", plan.sections.len(), out.display());
    for section in &plan.sections {
        println!("  [{:?} {}] {}", section.kind, section.index, section.title);
    }
    Ok(())
}

fn cmd_answer(cli: &Cli, session: &Session, question: &str) -> Result<()> {
    let providers = session.provider_set()?;
    let trace = open_trace(cli, session)?;
    let result = run_deliberation(
        question,
        &providers,
        &session.cfg.pipeline.deliberation,
        &session.pack,
        &trace,
    )?;
    trace.finish()?;

    let out = cli.out.clone().unwrap_or_else(|| session.cfg.output.answer.clone());
    write_output(&out, &format!("{}\n", serde_json::to_string_pretty(&result)?))?;
    println!("answer: {}", result.answer);
    println!(
        "confidence: {:.1}/10 (norm {:.3}, {:?})",
        result.confidence.raw, result.confidence.norm, result.confidence.provenance
    );
    println!(
        "terminated_by: {:?} after {} rounds",
        result.terminated_by, result.state.rounds_used
    );
    Ok(())
}

fn cmd_report(cli: &Cli, session: &Session, args: &TopicArgs) -> Result<()> {
    let providers = session.pipeline_providers()?;
    let trace = open_trace(cli, session)?;
    let report = run_report(
        &request_of(args),
        &session.cfg.pipeline,
        &providers,
        &session.pack,
        &trace,
    )?;
    trace.finish()?;

    let rendered = render_report(&report);
    let out = cli.out.clone().unwrap_or_else(|| session.cfg.output.report.clone());
    write_output(&out, &rendered)?;
    println!(
        "report: {} sections, {} sources -> {}",
        report.drafts.len(),
        report.bibliography.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(cli: &Cli, session: &Session, args: &EvalArgs) -> Result<()> {
    let items = load_dataset(&args.dataset)?;
    if items.is_empty() {
        bail!("empty-input: dataset {} has no items", args.dataset.display());
    }
    let providers = session.provider_set()?;
    let trace = open_trace(cli, session)?;
    let parallelism = args
        .parallelism
        .unwrap_or(session.cfg.pipeline.section_parallelism);
    let records = run_benchmark(
        &items,
        &providers,
        &session.cfg.pipeline.deliberation,
        parallelism,
        &session.pack,
        &trace,
    );
    trace.finish()?;

    let echo = RunEcho::new(
        &session.cfg.pipeline.deliberation,
        &session.provider_label(),
        &session.pack.version,
    );
    let summary = summarize_metrics(&records, args.bins, echo)?;
    let out = cli.out.clone().unwrap_or_else(|| session.cfg.output.metrics.clone());
    write_output(&out, &format!("{}\n", serde_json::to_string_pretty(&summary)?))?;

    let records_path = args.records.clone().or_else(|| session.cfg.output.records.clone());
    if let Some(path) = records_path {
        let lines: Vec<String> = records
            .iter()
            .map(|r| serde_json::to_string(r))
            .collect::<Result<_, _>>()?;
        write_output(&path, &format!("{}\n", lines.join("\n")))?;
    }

    println!(
        "eval: n={} accuracy={:.4} ece={:.4} -> {}",
        summary.n, summary.accuracy, summary.ece, out.display()
    );
    Ok(())
}

/// Deterministic run identifier: a digest of the command, its input, the
/// script seed, and the prompt-pack version. No clock, no randomness, so
/// identical runs produce identical trace files.
fn run_id(command: &str, input: &str, seed: u64, pack_version: &str) -> String {
    let hash = Sha256::digest(format!("{command}|{input}|{seed}|{pack_version}").as_bytes());
    hex::encode(&hash[..6])
}
