use cgmrf_bench::config::{Experiment, ExperimentConfig};
use cgmrf_bench::divfree::{run_divfree_rmse, run_divfree_timing};
use cgmrf_bench::hard_timing::run_hard_timing;
use cgmrf_bench::output::{unix_now, write_run};
use cgmrf_bench::results::emit_plotdata;
use cgmrf_bench::{BenchError, Result};
use cgmrf_core::NumericPolicy;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cgmrf", version, about = "Constrained GMRF experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV outputs.
    Bench {
        /// hard-timing, divfree-rmse or divfree-timing
        experiment: Experiment,
        /// Flat `key = value` file; omitted keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Use the full-size grids instead of the desk-scale defaults.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Aggregate a results CSV into plot-ready per-cell summaries.
    EmitPlotdata {
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(experiment: Experiment, path: Option<&PathBuf>, paper_scale: bool) -> Result<ExperimentConfig> {
    let file = path.map(std::fs::read_to_string).transpose()?.unwrap_or_default();
    let has = |key: &str| file.lines().any(|l| l.split('=').next().is_some_and(|k| k.trim() == key));
    let mut text = file.clone();
    if !has("experiment") {
        text.push_str(&format!("\nexperiment = {experiment}\n"));
    }
    if paper_scale && !has("paper_scale") {
        text.push_str("\npaper_scale = true\n");
    }
    let cfg = ExperimentConfig::parse(&text)?;
    if cfg.experiment != experiment {
        return Err(BenchError::Config(format!("config file is for {}, not {experiment}", cfg.experiment)));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench { experiment, config, out, paper_scale, seed, threads } => {
            let mut cfg = load_config(experiment, config.as_ref(), paper_scale)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            cfg.validate()?;
            let policy = NumericPolicy::default();
            let started = unix_now();
            log::info!("running {} with seed {} on {} threads", cfg.experiment, cfg.seed, cfg.threads);
            let output = match cfg.experiment {
                Experiment::HardTiming => run_hard_timing(&cfg, &policy)?,
                Experiment::DivfreeRmse => run_divfree_rmse(&cfg, &policy)?,
                Experiment::DivfreeTiming => run_divfree_timing(&cfg, &policy)?,
            };
            let output = write_run(&out, &cfg, output, started)?;
            println!(
                "{}: {} result rows, {} failures, written to {}",
                cfg.experiment,
                output.rows.len(),
                output.failures.len(),
                out.display()
            );
        }
        Command::EmitPlotdata { results, out } => {
            let agg = emit_plotdata(&results, &out)?;
            println!("{} aggregate rows written to {}", agg.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
