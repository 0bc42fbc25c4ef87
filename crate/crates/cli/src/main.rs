use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use preacq::acquisition::Policy;
use preacq::al_loop::{self, RunOptions};
use preacq::config::ExperimentConfig;
use preacq::types::Family;
use preacq::verify::{run_checks, VerifyOptions};

#[derive(Parser)]
#[command(name = "preacq", version, about = "Physics-residual active learning for PDE surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an active-learning experiment.
    Run(RunArgs),
    /// Merge metrics files into a learning curve.
    Report(ReportArgs),
    /// Run the fast property checks.
    Verify(VerifyArgs),
    /// Print the default configuration of a PDE family.
    Defaults {
        #[arg(long, default_value = "burgers1d")]
        family: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; missing keys take the family defaults.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    policy: Option<Policy>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace results already in the output directory.
    #[arg(long, conflicts_with = "resume")]
    force: bool,
    /// Continue from checkpoints in the output directory.
    #[arg(long)]
    resume: bool,
    /// Stop every seed after this many rounds (resume later with --resume).
    #[arg(long, hide = true)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// metrics.csv files written by `run`.
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
    /// Write the curve here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Negative control: relative error injected into the derivative stencil.
    #[arg(long, hide = true, default_value_t = 0.0)]
    perturb_stencil: f64,
}

/// Errors the user fixes by editing input rather than retrying.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn config_error(e: preacq::Error) -> anyhow::Error {
    match e {
        preacq::Error::Config { .. } => usage(e.to_string()),
        other => other.into(),
    }
}

const OUTPUTS: [&str; 5] = ["metrics.csv", "learning_curve.csv", "config.json", "checkpoints", "scores"];

fn prepare_output(dir: &Path, force: bool, resume: bool) -> anyhow::Result<()> {
    let occupied = dir.exists() && fs::read_dir(dir)?.next().is_some();
    if occupied && !force && !resume {
        return Err(usage(format!(
            "output directory {} is not empty; pass --force to overwrite or --resume to continue",
            dir.display()
        )));
    }
    if force {
        for name in OUTPUTS {
            let p = dir.join(name);
            if p.is_dir() {
                fs::remove_dir_all(&p)?;
            } else if p.exists() {
                fs::remove_file(&p)?;
            }
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| usage(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config = ExperimentConfig::from_json_str(&text).map_err(config_error)?;
    if let Some(p) = args.policy {
        config.policy = p;
    }
    if let Some(s) = args.seed {
        config.seeds = vec![s];
    }
    if let Some(r) = args.rounds {
        config.rounds = r;
    }
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    if let Some(o) = args.out {
        config.output_dir = Some(o);
    }
    config.validate().map_err(config_error)?;
    al_loop::resolve_workers(&config).map_err(config_error)?;
    let out = config
        .output_dir
        .clone()
        .ok_or_else(|| usage("output_dir: set it in the config or pass --out"))?;
    prepare_output(&out, args.force, args.resume)?;
    fs::write(out.join("config.json"), config.to_json_pretty()?)?;

    let opts = RunOptions {
        resume: args.resume,
        max_rounds_this_run: args.stop_after,
    };
    let report = al_loop::run_experiment(&config, &opts).map_err(config_error)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "policy,n_train,mean_rmse,ci95_lo,ci95_hi")?;
    for p in &report.curve {
        writeln!(
            stdout,
            "{},{},{:.6e},{:.6e},{:.6e}",
            p.policy, p.n_train, p.mean_rmse, p.ci95_lo, p.ci95_hi
        )?;
    }
    let failed: Vec<String> = report
        .failures()
        .map(|r| format!("seed {}: {}", r.seed, r.error.as_deref().unwrap_or("")))
        .collect();
    if !failed.is_empty() {
        bail!("{} seed(s) failed:\n{}", failed.len(), failed.join("\n"));
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for p in &args.metrics {
        rows.extend(al_loop::read_metrics(p).with_context(|| format!("reading {}", p.display()))?);
    }
    if rows.is_empty() {
        bail!("no metrics rows in the given files");
    }
    let curve = al_loop::learning_curve(&rows);
    match &args.out {
        Some(path) => al_loop::write_curve(path, &curve)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "policy,n_train,mean_rmse,ci95_lo,ci95_hi,n_runs")?;
            for p in &curve {
                writeln!(
                    stdout,
                    "{},{},{},{},{},{}",
                    p.policy, p.n_train, p.mean_rmse, p.ci95_lo, p.ci95_hi, p.n_runs
                )?;
            }
        }
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<()> {
    let results = run_checks(&VerifyOptions {
        stencil_perturbation: args.perturb_stencil,
    });
    let mut stdout = std::io::stdout().lock();
    for r in &results {
        writeln!(
            stdout,
            "{} {:<36} {:>6.2}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        )?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", results.len());
    }
    Ok(())
}

fn cmd_defaults(family: &str) -> anyhow::Result<()> {
    let family: Family = match family {
        "burgers1d" => Family::Burgers1D,
        "ns2d" => Family::CompressibleNS2D,
        other => return Err(usage(format!("family: unknown {other:?}, expected burgers1d or ns2d"))),
    };
    println!("{}", ExperimentConfig::defaults(family).to_json_pretty()?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Defaults { family } => cmd_defaults(&family),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
