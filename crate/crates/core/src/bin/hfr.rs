use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use hfr_core::harness::{emit_plot, metrics_files, resolve_output_dir, run_experiment, verify_suite, ConfigFile, ExperimentConfig, Metric};

#[derive(Parser)]
#[command(name = "hfr", version, about = "Meta-RL with trajectory relabeling across tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed and write its metrics file and checkpoint.
    Run(RunArgs),
    /// Plot metrics files of a directory, one curve per strategy.
    Plot(PlotArgs),
    /// Run the exact tabular checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML parameter file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    env: Option<String>,
    /// none | random | hipi | hfr | hfr-bellman
    #[arg(long, required_unless_present = "config")]
    relabel: Option<String>,
    #[arg(long, required_unless_present = "config")]
    seed: Option<u64>,
    /// Initial states sampled per utility estimate.
    #[arg(long)]
    nu: Option<usize>,
    /// Relabeling temperature.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Utilities kept per task for the log-partition estimate; 0 disables it.
    #[arg(long)]
    logz_window: Option<usize>,
    /// Relabel with a learned reward model instead of the true rewards.
    #[arg(long)]
    learned_reward: bool,
    /// Total environment steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eval_interval: Option<usize>,
    /// Output directory (default: $HFR_OUTPUT_ROOT, else ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding metrics_<strategy>_seed<n>.csv files.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = ["success", "return"], default_value = "success")]
    metric: String,
    #[arg(long)]
    out: PathBuf,
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        env: args.env,
        relabel: args.relabel,
        seed: args.seed,
        steps: args.steps,
        eval_interval: args.eval_interval,
        nu: args.nu,
        epsilon: args.epsilon,
        logz_window: args.logz_window,
        learned_reward: args.learned_reward.then_some(true),
        out: args.out,
        ..ConfigFile::default()
    };
    let merged = file.merge(flags);
    let out = resolve_output_dir(merged.out.clone());
    let config = ExperimentConfig::from_file(merged)?;
    let path = run_experiment(&config, &out).with_context(|| format!("run {} seed {}", config.strategy, config.seed))?;
    println!("{}", path.display());
    Ok(())
}

fn plot(args: PlotArgs) -> anyhow::Result<()> {
    let files = metrics_files(&args.input)?;
    if files.is_empty() {
        bail!("no metrics_*.csv files in {}", args.input.display());
    }
    emit_plot(&files, args.metric.parse::<Metric>()?, &args.out)?;
    println!("{}", args.out.display());
    Ok(())
}

fn verify(seed: u64) -> anyhow::Result<bool> {
    let checks = verify_suite(seed)?;
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Plot(a) => plot(a).map(|_| true),
        Command::Verify { seed } => verify(seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
