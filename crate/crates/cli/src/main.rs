use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chatbank_core::banking::AccountId;
use chatbank_core::config::AppConfig;
use chatbank_core::eval::{emit_report, gate, load_suite, run_suite, ReportFormat, Rubric};
use chatbank_core::faq::parse_jsonl;
use clap::{Args, Parser, Subcommand};

/// Exit code when the eval gate fails.
const GATE_FAILED: u8 = 1;
/// Exit code for usage, config or I/O errors.
const ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "chatbank", version, about = "Conversational banking pipeline tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP session gateway.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `gateway.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Evaluation harness.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Replace the knowledge base of a running gateway.
    Ingest(IngestArgs),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Replay a suite and print the report. Exits 1 when the gate fails.
    Run(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// json, table or radarData.
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Human-rated scores for the risk and language axes.
    #[arg(long)]
    rubric: Option<PathBuf>,
    /// Account the cases run against.
    #[arg(long, default_value = "1001234567")]
    account: String,
}

#[derive(Args)]
struct IngestArgs {
    /// Knowledge documents as JSON Lines.
    #[arg(long)]
    file: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gateway base URL; defaults to `http://` + `gateway.bind`.
    #[arg(long)]
    url: Option<String>,
    /// Only validate the file locally.
    #[arg(long)]
    check: bool,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<AppConfig> {
    match path {
        Some(p) => AppConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(AppConfig::builtin()),
    }
}

fn eval_run(args: EvalArgs) -> anyhow::Result<u8> {
    let config = load_config(args.config.as_deref())?;
    let suite = load_suite(&args.suite)?;
    for r in &suite.rejected {
        eprintln!("{}:{}: case rejected: {}", args.suite.display(), r.line, r.reason);
    }
    if suite.cases.is_empty() {
        bail!("no valid cases in {}", args.suite.display());
    }
    let registry = config.build()?;
    let mut report = run_suite(&suite.cases, &registry, &AccountId::new(args.account), &config.eval)?;
    if let Some(path) = &args.rubric {
        report.apply_rubric(&Rubric::load(path).with_context(|| format!("loading rubric {}", path.display()))?);
    }
    println!("{}", emit_report(&report, args.format));
    let outcome = gate(&report, &config.eval);
    for f in &outcome.failures {
        eprintln!("gate failed: {f}");
    }
    Ok(if outcome.passed() { 0 } else { GATE_FAILED })
}

fn ingest(args: IngestArgs) -> anyhow::Result<u8> {
    let config = load_config(args.config.as_deref())?;
    let text = std::fs::read_to_string(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let docs = parse_jsonl(&text)?;
    if args.check {
        let store = config.build_knowledge()?;
        let snap = store.replace(docs)?;
        println!("{} documents OK", snap.len());
        return Ok(0);
    }
    let token = std::env::var(&config.gateway.admin_token_env)
        .with_context(|| format!("{} is not set", config.gateway.admin_token_env))?;
    let base = args.url.unwrap_or_else(|| format!("http://{}", config.gateway.bind));
    let url = format!("{}/admin/knowledge", base.trim_end_matches('/'));
    let mut resp = ureq::post(&url)
        .header("authorization", &format!("Bearer {token}"))
        .config()
        .http_status_as_error(false)
        .build()
        .send(text.as_str())
        .with_context(|| format!("posting to {url}"))?;
    let status = resp.status();
    let body = resp.body_mut().read_to_string().unwrap_or_default();
    if !status.is_success() {
        bail!("gateway answered {status}: {body}");
    }
    println!("{body}");
    Ok(0)
}

fn serve(config: Option<PathBuf>, bind: Option<String>) -> anyhow::Result<u8> {
    let mut config = load_config(config.as_deref())?;
    if let Some(b) = bind {
        config.gateway.bind = b;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(chatbank_gateway::serve(&config))?;
    Ok(0)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let result = match Cli::parse().command {
        Command::Serve { config, bind } => serve(config, bind),
        Command::Eval {
            command: EvalCommand::Run(args),
        } => eval_run(args),
        Command::Ingest(args) => ingest(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ERROR)
        }
    }
}
