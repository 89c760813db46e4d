use std::path::PathBuf;
use std::process::ExitCode;

use abusegraph::stages::{self, Run};
use abusegraph_core::pipeline::SweepAxis;
use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

/// Group promotion-abuse detection over transaction logs.
#[derive(Parser)]
#[command(name = "abusegraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run directory holding inputs and artifacts.
    #[arg(long)]
    run: PathBuf,
    /// Config file (key=value); defaults to <run>/config.txt when present.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Accept inputs produced under a different config hash.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved configuration and its hash.
    Config(Common),
    /// Generate a synthetic scenario into the run directory.
    Generate(Common),
    /// Build the fused graphs of the training and detection windows.
    BuildGraph(Common),
    /// Learn relation embeddings and train the detection model.
    Train(Common),
    /// Score the detection window and flag fraudsters.
    Detect(Common),
    /// Compute metrics and rule verdicts for the detections.
    Evaluate(Common),
    /// Tabulate cohesion of fraud versus normal groups per relation.
    AnalyzeTcs(Common),
    /// Re-threshold detections along one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// seed_quantile or propagation_threshold.
        #[arg(long)]
        axis: String,
        /// Comma-separated thresholds; defaults to the axis grid.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
    /// Compare the full model with its ablations on generated scenarios.
    Ablation {
        #[command(flatten)]
        common: Common,
        /// Comma-separated scenario seeds.
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
        seeds: Vec<u64>,
    },
    /// generate, build-graph, train, detect, evaluate, analyze-tcs, sweep.
    RunAll(Common),
}

fn open(c: &Common) -> Result<Run> {
    let cfg = stages::resolve_config(&c.run, c.config.as_deref(), &c.sets)?;
    Ok(Run::new(&c.run, cfg, c.force))
}

fn main_inner() -> Result<()> {
    match Cli::parse().command {
        Command::Config(c) => {
            let run = open(&c)?;
            print!("# config_hash={}\n{}", run.hash, run.cfg.to_text());
        }
        Command::Generate(c) => stages::generate_stage(&open(&c)?)?,
        Command::BuildGraph(c) => stages::build_graph_stage(&open(&c)?)?,
        Command::Train(c) => stages::train_stage(&open(&c)?)?,
        Command::Detect(c) => stages::detect_stage(&open(&c)?)?,
        Command::Evaluate(c) => print!("{}", stages::evaluate_stage(&open(&c)?)?.to_text()),
        Command::AnalyzeTcs(c) => stages::analyze_tcs_stage(&open(&c)?)?,
        Command::Sweep { common, axis, grid } => {
            let axis = SweepAxis::from_name(&axis)
                .ok_or_else(|| anyhow!("axis must be seed_quantile or propagation_threshold, got {axis:?}"))?;
            let grid = if grid.is_empty() { axis.default_grid() } else { grid };
            stages::sweep_stage(&open(&common)?, axis, &grid)?;
        }
        Command::Ablation { common, seeds } => stages::ablation_stage(&open(&common)?, &seeds)?,
        Command::RunAll(c) => print!("{}", stages::run_all(&open(&c)?)?.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
