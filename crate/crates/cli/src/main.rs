use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use iclbudget::experiment::{self, load_dataset, prepare, EvalReport, ExperimentConfig, Providers};
use iclbudget::Strategy;

#[derive(Parser)]
#[command(name = "iclbudget", version, about = "Pool selection sweeps for in-context sequence labeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full sweep described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate only the full-train oracle pool.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Finish the pending and failed cells of an interrupted run.
    Resume {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Rebuild the CSV and plot files of a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Select a single pool and print it as JSON.
    SelectPool {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the pool here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the number of distinct train samples used as demonstrations
    /// when the whole train split is available.
    MaxPoolSize {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn summarize(report: &EvalReport) -> ExitCode {
    if let Some(o) = &report.oracle {
        println!("oracle {} = {:.4}", o.metric.headline_name(), o.metric.headline());
    }
    for row in &report.aggregate {
        let pct = row.percent_of_oracle.map(|p| format!(" ({p:.1}% of oracle)")).unwrap_or_default();
        println!(
            "{:<8} k={:<6} {} = {:.4} ± {:.4} over {} trials{pct}",
            row.strategy, row.pool_size, row.metric, row.mean, row.std, row.trials
        );
    }
    if let Some(c) = report.correlation {
        let p = c.p_value.map(|p| format!(", p = {p:.2e}")).unwrap_or_default();
        println!("entropy/score correlation r = {:.3}{p} over {} groups", c.r, c.n);
    }
    println!("outputs in {}", report.run_dir.display());
    for f in &report.failed {
        eprintln!("failed cell {f}");
    }
    if report.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let report = experiment::run(&cfg, Some(&config))?;
            Ok(summarize(&report))
        }
        Command::Oracle { config } => {
            let cfg = load_config(&config)?;
            let cell = experiment::run_oracle(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&cell)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Resume { manifest } => {
            let report = experiment::resume(&manifest)?;
            Ok(summarize(&report))
        }
        Command::Report { run_dir } => {
            let report = experiment::report(&run_dir)?;
            Ok(summarize(&report))
        }
        Command::SelectPool { config, strategy, k, seed, out } => {
            let cfg = load_config(&config)?;
            let dataset = load_dataset(&cfg)?;
            let providers = Providers::from_config(&cfg, &dataset)?;
            let prepared = prepare(&cfg, &providers, dataset)?;
            let pool = experiment::select_pool(&cfg, &providers, &prepared, strategy, k, seed)?;
            let json = pool.to_json()?;
            match out {
                Some(path) => std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::MaxPoolSize { config } => {
            let cfg = load_config(&config)?;
            let dataset = load_dataset(&cfg)?;
            let providers = Providers::from_config(&cfg, &dataset)?;
            let prepared = prepare(&cfg, &providers, dataset)?;
            println!("{}", prepared.max_pool_size);
            Ok(ExitCode::SUCCESS)
        }
    }
}
