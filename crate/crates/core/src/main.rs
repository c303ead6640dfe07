use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ivbounds::harness::{emit_outputs, emit_sweep, run_experiment, run_sweep, RunConfig};
use ivbounds::{Error, Result};

#[derive(Parser)]
#[command(name = "ivbounds", version, about = "Adaptive experiment design for causal effect bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one experiment and write its output files.
    Run(Common),
    /// Run one experiment per point of the config's hyperparameter grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `run.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `strategy.name`.
    #[arg(long)]
    strategy: Option<String>,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.run.master_seed = seed;
        }
        if let Some(name) = &self.strategy {
            cfg.strategy.name = name.clone();
        }
        if let Some(out) = &self.out {
            cfg.run.out_dir = Some(out.display().to_string());
        }
        let out = cfg
            .run
            .out_dir
            .clone()
            .map(PathBuf::from)
            .ok_or_else(|| Error::InvalidConfig {
                key: "run.out_dir".into(),
                reason: "no output directory; pass --out".into(),
            })?;
        Ok((cfg.resolve()?, out))
    }
}

fn report_final(label: &str, summary: &ivbounds::harness::AggregateSummary) {
    for o in &summary.strategies {
        let last = summary
            .rounds
            .iter()
            .filter(|r| r.strategy == o.strategy)
            .next_back();
        let gap = last.and_then(|r| r.mean_gap).map_or("-".into(), |g| format!("{g:.4}"));
        let cov = o.final_coverage.map_or("-".into(), |c| format!("{c:.2}"));
        eprintln!(
            "{label}{:<9} final mean gap {gap:>10}  coverage {cov:>5}  failed seeds {}",
            o.strategy.name(),
            o.failed
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = args.load()?;
            let result = run_experiment(&cfg)?;
            emit_outputs(&result, &out)?;
            report_final("", &result.summary);
            eprintln!("wrote {}", out.display());
        }
        Command::Sweep(args) => {
            let (cfg, out) = args.load()?;
            let points = run_sweep(&cfg)?;
            emit_sweep(&points, &out)?;
            for p in &points {
                let label = format!(
                    "({}, {}, {}) ",
                    p.lambda_c, p.lambda_s, p.alpha_lr
                );
                report_final(&label, &p.result.summary);
            }
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
