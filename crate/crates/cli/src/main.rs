//! `reflect`: run the local service, score labeled manifests and probe a
//! running service's endpoints.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use base64::Engine;
use clap::{Args, Parser, Subcommand};
use reflect_core::inference::{load_backend, BackendConfig};
use reflect_eval::probe::Fixtures;
use reflect_eval::{
    render_comparison, run_inference_eval, run_reliability_suite, Endpoint, EvalReport, LabeledManifest, ProbePlan,
    ProbeStep,
};
use reflect_server::ServerConfig;

#[derive(Parser)]
#[command(name = "reflect", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service until interrupted.
    Serve {
        /// TOML configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Classification metrics over a labeled manifest.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Reliability and latency trials against a running service.
    #[command(subcommand)]
    Probe(ProbeCommand),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Score a `true_label,pred_label` manifest.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Classify a `path,true_label` manifest with a configured model.
    Infer {
        #[arg(long)]
        manifest: PathBuf,
        /// Classifier backend TOML.
        #[arg(long)]
        model_config: PathBuf,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Compare two JSON reports written by `score` or `infer`.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
    },
}

#[derive(Subcommand)]
enum ProbeCommand {
    /// Run sequential trials per endpoint.
    Run(ProbeArgs),
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value = "http://127.0.0.1:8000")]
    base_url: String,
    #[arg(long, default_value_t = 30)]
    health: u32,
    #[arg(long, default_value_t = 30)]
    emotion: u32,
    #[arg(long, default_value_t = 10)]
    voice: u32,
    #[arg(long, default_value_t = 30)]
    session: u32,
    #[arg(long, default_value_t = 30)]
    cleanup: u32,
    /// Image sent for emotion analysis; required when --emotion > 0.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Audio clip(s) sent for voice chat, used in turn; required when --voice > 0.
    #[arg(long = "voice-clip")]
    voice_clips: Vec<PathBuf>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not an evaluation report", path.display()))
}

fn emit_report(report: &EvalReport, json_out: Option<&Path>) -> Result<()> {
    print!("{}", report.render_tables());
    if let Some(path) = json_out {
        write_json(path, report)?;
    }
    Ok(())
}

fn eval(command: EvalCommand) -> Result<()> {
    match command {
        EvalCommand::Score { manifest, json_out } => {
            let manifest = LabeledManifest::read(&manifest)?;
            if !matches!(manifest, LabeledManifest::Scoring(_)) {
                bail!("`eval score` needs a true_label,pred_label manifest; use `eval infer` for images");
            }
            emit_report(&run_inference_eval(&manifest, None)?, json_out.as_deref())
        }
        EvalCommand::Infer { manifest, model_config, json_out } => {
            let manifest = LabeledManifest::read(&manifest)?;
            let config = BackendConfig::from_file(&model_config)?;
            let mut backend = load_backend(&config);
            if !backend.is_ready() {
                bail!("model `{}` could not be loaded", config.model_id);
            }
            let report = run_inference_eval(&manifest, Some((backend.as_mut(), &config.normalization)))?;
            emit_report(&report, json_out.as_deref())
        }
        EvalCommand::Compare { baseline, candidate } => {
            print!("{}", render_comparison(&read_report(&baseline)?, &read_report(&candidate)?));
            Ok(())
        }
    }
}

async fn probe(args: ProbeArgs) -> Result<bool> {
    let image = match &args.image {
        Some(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
            Some(base64::engine::general_purpose::STANDARD.encode(bytes))
        }
        None => None,
    };
    let voice_clips = args
        .voice_clips
        .iter()
        .map(|p| std::fs::read(p).with_context(|| format!("cannot read {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let trials = [
        (Endpoint::Health, args.health),
        (Endpoint::EmotionAnalysis, args.emotion),
        (Endpoint::VoiceChat, args.voice),
        (Endpoint::SessionSave, args.session),
        (Endpoint::TempCleanup, args.cleanup),
    ];
    let plan = ProbePlan {
        steps: trials.into_iter().map(|(endpoint, trials)| ProbeStep { endpoint, trials }).collect(),
        fixtures: Fixtures { image, voice_clips },
        request_timeout: Some(Duration::from_secs(args.timeout_secs)),
    };
    let report = run_reliability_suite(&args.base_url, &plan).await?;
    print!("{}", report.render_tables());
    if let Some(path) = &args.json_out {
        write_json(path, &report)?;
    }
    Ok(report.rows.iter().all(|r| r.failures == 0))
}

async fn serve(config: Option<PathBuf>) -> Result<()> {
    let mut config = match config {
        Some(path) => ServerConfig::from_file(&path).with_context(|| format!("loading {}", path.display()))?,
        None => ServerConfig::default(),
    };
    config.apply_env(|key| std::env::var(key).ok())?;
    reflect_server::serve(&config).await?;
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Serve { config } => serve(config).await.map(|_| true),
        Command::Eval(command) => eval(command).map(|_| true),
        Command::Probe(ProbeCommand::Run(args)) => probe(args).await,
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
