use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpibench::config::{
    self, EvaluateCommand, PreprocessCommand, ReconstructCommand, ReportConfig, SimulateConfig, SweepConfig,
};
use mpibench::{evaluate, report, sweep, CliResult};

#[derive(Parser)]
#[command(name = "mpibench", version, about = "Benchmark reconstruction methods for 3D MPI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a raw dataset.
    Simulate(Common),
    /// Select rows, whiten and project a dataset.
    Preprocess(Common),
    /// Run one method on a processed system and save its trace.
    Reconstruct(Common),
    /// Score the checkpoints of a saved trace.
    Evaluate(Common),
    /// Run a parameter sweep.
    Sweep(Common),
    /// Render tables and slices from a sweep.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg: SimulateConfig = config::load(&a.config)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let sum = mpibench::simulate(&cfg, &a.out)?;
            println!("dataset {} sha256 {sum}", a.out.display());
        }
        Command::Preprocess(a) => {
            let cfg: PreprocessCommand = config::load(&a.config)?;
            let sum = mpibench::preprocess(&cfg, &a.out)?;
            println!("system {} sha256 {sum}", a.out.display());
        }
        Command::Reconstruct(a) => {
            let mut cfg: ReconstructCommand = config::load(&a.config)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let sum = mpibench::reconstruct(&cfg, &a.out)?;
            println!("trace {} sha256 {sum}", a.out.display());
        }
        Command::Evaluate(a) => {
            let cfg: EvaluateCommand = config::load(&a.config)?;
            let r = evaluate::evaluate(&cfg, &a.out)?;
            println!(
                "best eps_psnr {} eps_ssim {} -> {}",
                mpibench::format::num(r.eps_psnr),
                mpibench::format::num(r.eps_ssim),
                a.out.display()
            );
        }
        Command::Sweep(a) => {
            let mut cfg: SweepConfig = config::load(&a.config)?;
            if let Some(s) = a.seed {
                cfg.seeds = vec![s];
            }
            let workers = a.workers.or(cfg.workers).unwrap_or_else(default_workers);
            let outcome = sweep::run_sweep(&cfg, &a.out, workers)?;
            println!("{} runs -> {}", outcome.jobs, a.out.display());
        }
        Command::Report(a) => {
            let cfg: ReportConfig = config::load(&a.config)?;
            let n = report::report(&cfg, &a.out)?;
            println!("{} -> {}", n, Path::new(&a.out).join("report.md").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
