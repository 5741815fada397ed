//! `priorlearn` — reproducible lifelong-learning experiments.
//!
//! Subcommands: `run` (full protocol, writes a results bundle), `bound`
//! (itemized transfer-risk bound for a given prior object), `synth`
//! (materialize a synthetic task environment as CSV files).
//!
//! Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use config::{derive_seed, BoundCmdConfig, DataSource, PriorSpec, RunConfig, SynthConfig};
use priorlearn::bound::{bound_classification, bound_regression, bound_subspace, BoundReport};
use priorlearn::eval::{run_experiment, summary_csv, MetricReport};
use priorlearn::plg::GaussianHyperposterior;
use priorlearn::pll::StiefelPoint;
use priorlearn::ridge::fit_ridge_operator;
use priorlearn::task::{
    generate_synthetic, load_environment, save_environment, BoundConfig, GroundTruth,
    TaskEnvironment, TaskKind,
};

#[derive(Parser)]
#[command(name = "priorlearn", version, about = "PAC-Bayesian lifelong learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hold-out evaluation protocol from a JSON config
    Run(RunArgs),
    /// Print an itemized transfer-risk bound report as JSON
    Bound(BoundArgs),
    /// Write a synthetic task environment as per-task CSV files
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run config
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config's `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the worker thread count; output is identical for any value
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct BoundArgs {
    /// Path to the JSON bound config
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Path to the JSON synthesis config
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config's `seed`)
    #[arg(long)]
    seed: Option<u64>,
}

enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<priorlearn::Error> for CliError {
    fn from(e: priorlearn::Error) -> Self {
        use priorlearn::Error::*;
        match &e {
            InvalidConfig(_) => CliError::Config(e.to_string()),
            Numerical(_) => CliError::Numerical(e.to_string()),
            InvalidData(_) | DimensionMismatch(_) | Io { .. } | Parse { .. } => {
                CliError::Data(e.to_string())
            }
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            let _ = e.print();
            std::process::exit(1); // usage problems are config errors
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Synth(args) => cmd_synth(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn with_thread_cap<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--threads must be >= 1".into())),
        Some(n) => {
            #[cfg(feature = "parallel")]
            {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
            #[cfg(not(feature = "parallel"))]
            {
                if n > 1 {
                    eprintln!("warning: sequential build, --threads {n} has no effect");
                }
                Ok(f())
            }
        }
    }
}

fn build_environment(data: &DataSource, seed: u64) -> Result<(TaskEnvironment, Option<GroundTruth>), CliError> {
    match data {
        DataSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = derive_seed(seed, 1);
            let (env, truth) = generate_synthetic(&spec)?;
            Ok((env, Some(truth)))
        }
        DataSource::Manifest(path) => Ok((load_environment(path)?, None)),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg: RunConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    if cfg.methods.is_empty() {
        return Err(CliError::Config("methods must not be empty".into()));
    }
    let bound_cfg = BoundConfig::new(cfg.sigma, cfg.delta, 1.0)?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("priorlearn_run"));

    let (env, _) = build_environment(&cfg.data, cfg.seed)?;
    let mut protocol = cfg.protocol.clone();
    protocol.seed = derive_seed(cfg.seed, 2);

    let reports: Vec<MetricReport> = with_thread_cap(args.threads, || {
        cfg.methods
            .iter()
            .map(|method| run_experiment(&env, method, &protocol, &bound_cfg))
            .collect::<priorlearn::Result<Vec<_>>>()
    })??
    .into_iter()
    .flatten()
    .collect();

    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;

    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "derived_seeds": {"data": derive_seed(cfg.seed, 1), "protocol": derive_seed(cfg.seed, 2)},
        "threads": args.threads,
        "config": cfg,
    });
    write_file(&out_dir.join("manifest.json"), &format!("{:#}\n", manifest))?;

    let mut jsonl = String::new();
    for r in &reports {
        jsonl.push_str(&serde_json::to_string(r).map_err(internal)?);
        jsonl.push('\n');
    }
    write_file(&out_dir.join("reports.jsonl"), &jsonl)?;
    write_file(&out_dir.join("summary.csv"), &summary_csv(&reports))?;

    println!("{}", out_dir.join("summary.csv").display());
    Ok(())
}

fn internal(e: serde_json::Error) -> CliError {
    CliError::Data(format!("serialization: {e}"))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_bound(args: BoundArgs) -> Result<(), CliError> {
    let cfg: BoundCmdConfig = read_config(&args.config)?;
    let bound_cfg = BoundConfig::new(cfg.sigma, cfg.delta, cfg.c)?;
    let (env, _) = build_environment(&cfg.data, cfg.seed)?;
    let tasks = env.observed();
    if tasks.is_empty() {
        return Err(CliError::Data("environment has no observed tasks".into()));
    }

    let report: BoundReport = with_thread_cap(args.threads, || -> Result<BoundReport, CliError> {
        match &cfg.prior {
            PriorSpec::SubspaceFile(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                let point: StiefelPoint = serde_json::from_str(&text)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                Ok(bound_subspace(tasks, point.matrix(), &bound_cfg)?)
            }
            spec => {
                let w_q = match spec {
                    PriorSpec::Zero => DVector::zeros(env.dim()),
                    PriorSpec::Gaussian(v) => DVector::from_vec(v.clone()),
                    PriorSpec::GaussianFile(path) => {
                        let text = fs::read_to_string(path)
                            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                        let h: GaussianHyperposterior = serde_json::from_str(&text)
                            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                        h.w_q
                    }
                    PriorSpec::SubspaceFile(_) => unreachable!(),
                };
                let ops = tasks
                    .iter()
                    .map(|t| fit_ridge_operator(t, bound_cfg.c))
                    .collect::<priorlearn::Result<Vec<_>>>()?;
                let report = match env.kind() {
                    TaskKind::Classification => {
                        bound_classification(tasks, &ops, &w_q, &bound_cfg, cfg.relaxed)?
                    }
                    TaskKind::Regression => bound_regression(tasks, &ops, &w_q, &bound_cfg)?,
                };
                Ok(report)
            }
        }
    })??;

    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(internal)?
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut cfg: SynthConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("priorlearn_synth"));
    let mut spec = cfg.spec.clone();
    spec.seed = derive_seed(cfg.seed, 1);
    let (env, truth) = generate_synthetic(&spec)?;
    save_environment(&env, &out_dir)?;

    let truth_json = match &truth {
        GroundTruth::Prototype(w) => serde_json::json!({"prototype": w.as_slice()}),
        GroundTruth::Subspace(b) => {
            let point = StiefelPoint::new(b.clone())?;
            serde_json::json!({"subspace": point})
        }
    };
    write_file(&out_dir.join("ground_truth.json"), &format!("{:#}\n", truth_json))?;
    let gen_manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
    });
    write_file(&out_dir.join("generation.json"), &format!("{:#}\n", gen_manifest))?;
    println!("{}", out_dir.display());
    Ok(())
}
