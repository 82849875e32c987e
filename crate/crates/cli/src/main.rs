use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mnchange::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use mnchange::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

/// Sparse change detection between two Markov networks.
#[derive(Parser)]
#[command(name = "mnchange", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact-recovery rate against n_p / ln m
    SuccessRate(Common),
    /// Exact-recovery rate under an n_q rule coupled to n_p
    NqCoupling(Common),
    /// Exact-recovery rate for several numbers of changed edges
    DSweep(Common),
    /// Exact-recovery rate on the non-Gaussian family
    NonGaussian(Common),
    /// ROC of the KLIEP path against the thresholded covariance baseline
    Roc(Common),
    /// Change edges between two CSV sample files
    Real(Common),
    /// Bootstrap edge stability between two CSV sample files
    Bootstrap(Common),
    /// Dependency, incoherence and ratio-range checks at the true change
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; its `kind` may be omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for CSV, SVG and manifest output
    #[arg(long)]
    out: PathBuf,
    /// Validate and print the resolved config without running
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores
    #[arg(long)]
    threads: Option<usize>,
    /// Trials per cell
    #[arg(long)]
    trials: Option<usize>,
    /// Node counts, comma separated
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// λ = C √(ln m / n_p)
    #[arg(long)]
    c: Option<f64>,
    /// CSV of P samples (real, bootstrap)
    #[arg(long)]
    p_csv: Option<String>,
    /// CSV of Q samples (real, bootstrap)
    #[arg(long)]
    q_csv: Option<String>,
    /// Stop the λ path once the support exceeds this size
    #[arg(long)]
    target_support: Option<usize>,
    #[arg(long)]
    bootstrap_trials: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::SuccessRate(c) => (ExperimentKind::SuccessRate, c),
            Command::NqCoupling(c) => (ExperimentKind::NqCoupling, c),
            Command::DSweep(c) => (ExperimentKind::DSweep, c),
            Command::NonGaussian(c) => (ExperimentKind::NonGaussian, c),
            Command::Roc(c) => (ExperimentKind::RocCompare, c),
            Command::Real(c) => (ExperimentKind::RealData, c),
            Command::Bootstrap(c) => (ExperimentKind::Bootstrap, c),
            Command::Diagnose(c) => (ExperimentKind::Diagnose, c),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}

/// Config file (or defaults), then the subcommand's kind, then flag overrides.
fn resolve(kind: ExperimentKind, args: &Common) -> Result<ExperimentConfig, Error> {
    let mut value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<serde_json::Value>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => serde_json::json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    let wanted = serde_json::to_value(kind)?;
    if let Some(given) = obj.get("kind") {
        if *given != wanted {
            log::warn!("config kind {given} replaced by subcommand {}", kind.name());
        }
    }
    obj.insert("kind".into(), wanted);
    let mut cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;

    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(m) = &args.m {
        cfg.m_grid = m.clone();
    }
    if let Some(c) = args.c {
        cfg.c = c;
    }
    if let Some(p) = &args.p_csv {
        cfg.real.p_csv = p.clone();
    }
    if let Some(q) = &args.q_csv {
        cfg.real.q_csv = q.clone();
    }
    if let Some(t) = args.target_support {
        cfg.real.target_support = t;
    }
    if let Some(b) = args.bootstrap_trials {
        cfg.real.bootstrap_trials = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: Common) -> Result<(), Error> {
    let cfg = resolve(kind, &args)?;
    if args.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let manifest = run_experiment(&cfg, &args.out)?;
    println!("{}", serde_json::to_string_pretty(&manifest.summary)?);
    eprintln!("wrote {} files to {}", manifest.files.len() + 1, args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (kind, args) = Cli::parse().command.split();
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
