mod config;
mod stages;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::stages::{Classify, Context, Failure, Outcome, Target};

/// Expected value of information transfer for simulated structural populations.
#[derive(Parser)]
#[command(name = "evitlab", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    parallelism: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TargetArgs {
    /// Population structure to treat as the new target (excluded from the sources).
    #[arg(long)]
    target: Option<usize>,
    /// JSON modal model of an external target structure.
    #[arg(long)]
    modal: Option<PathBuf>,
}

impl TargetArgs {
    fn resolve(self) -> Target {
        match (self.target, self.modal) {
            (Some(id), _) => Target::HeldOut(id),
            (None, Some(path)) => Target::External(path),
            (None, None) => unreachable!("clap enforces one target"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample the population and write population.json.
    Generate,
    /// Run every ordered transfer task and write tasks.csv.
    Tasks {
        /// Population file [default: <out>/population.json].
        #[arg(long)]
        population: Option<PathBuf>,
    },
    /// Train the similarity-to-quality regressor; writes the model, loss history and quality plots.
    Fit {
        /// Task file [default: <out>/tasks.csv].
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Evaluate EVIT over the similarity grid and report the positive-transfer threshold.
    Curve {
        /// Model file [default: <out>/model.json].
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rank candidate sources for a target and recommend a transfer strategy.
    Recommend {
        #[command(flatten)]
        target: TargetArgs,
        /// Model file [default: <out>/model.json].
        #[arg(long)]
        model: Option<PathBuf>,
        /// Population file [default: <out>/population.json].
        #[arg(long)]
        population: Option<PathBuf>,
        /// Similarity at which to draw the forecast [default: best candidate's].
        #[arg(long)]
        varsigma: Option<f64>,
    },
    /// Run generate, tasks, fit and curve in sequence, then recommend or
    /// draw the illustrative forecast.
    Pipeline {
        /// Also recommend a source for this held-out structure.
        #[arg(long)]
        target: Option<usize>,
    },
}

fn run(cli: Cli) -> Outcome {
    let mut config = RunConfig::load(cli.config.as_deref()).config_err()?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    config.derive_seeds();
    config.validate().config_err()?;
    let ctx = Context { out: config.output_dir.clone(), config, force: cli.force, parallelism: cli.parallelism };
    let or_default = |p: Option<PathBuf>, name: &str| p.unwrap_or_else(|| ctx.path(name));

    match cli.command {
        Command::Generate => stages::generate(&ctx),
        Command::Tasks { population } => stages::tasks(&ctx, &or_default(population, stages::POPULATION_FILE)),
        Command::Fit { tasks } => stages::fit(&ctx, &or_default(tasks, stages::TASKS_FILE)),
        Command::Curve { model } => stages::curve(&ctx, &or_default(model, stages::MODEL_FILE)),
        Command::Recommend { target, model, population, varsigma } => {
            if let Some(s) = varsigma {
                if !(0.0..=1.0).contains(&s) {
                    return Err(Failure::Config(anyhow!("--varsigma must lie in [0, 1], got {s}")));
                }
            }
            stages::recommend(
                &ctx,
                &or_default(model, stages::MODEL_FILE),
                &or_default(population, stages::POPULATION_FILE),
                &target.resolve(),
                varsigma,
            )
        }
        Command::Pipeline { target } => stages::pipeline(&ctx, target.map(Target::HeldOut).as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
