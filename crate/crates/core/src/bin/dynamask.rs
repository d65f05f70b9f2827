use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynamask::experiments::{
    evaluate, explain, generate, reproduce, resolve_config, resolve_stage_config, train, ConfigSources,
    ExperimentConfig, ExperimentKind, RunDir, Scale,
};
use dynamask::Error;

/// Dynamic perturbation masks for time-series explanations.
#[derive(Parser)]
#[command(name = "dynamask", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "DYNAMASK_JOBS")]
    jobs: Option<usize>,

    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset of an experiment.
    Generate(StageArgs),
    /// Train the classifiers (no-op for white-box experiments).
    Train(StageArgs),
    /// Fit masks and run the baselines.
    Explain(StageArgs),
    /// Score explanations and write the report.
    Evaluate(StageArgs),
    /// Run every stage and check the acceptance criteria.
    Reproduce {
        /// rare-feature, rare-time, state or operator-agreement.
        name: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct StageArgs {
    /// Experiment to run; taken from the config file or the run directory
    /// when omitted.
    #[arg(long)]
    experiment: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config merged over the experiment's preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    scale: Option<Scale>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `fit.epochs=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl CommonArgs {
    fn sources(&self, experiment: Option<ExperimentKind>) -> ConfigSources {
        ConfigSources {
            experiment,
            config_file: self.config.clone(),
            scale: self.scale,
            seed: self.seed,
            output_dir: self.out.clone(),
            overrides: self.overrides.clone(),
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
    Acceptance,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnsupportedExperiment { .. } => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn stage_config(args: &StageArgs, needs_dir: bool) -> Result<(ExperimentConfig, RunDir), Failure> {
    let kind = args.experiment.as_deref().map(str::parse).transpose()?;
    let cfg = resolve_stage_config(&args.common.sources(kind))?;
    let run = match (&cfg.output_dir, needs_dir) {
        (Some(dir), _) => RunDir::new(dir),
        (None, false) => RunDir::for_config(&cfg),
        (None, true) => return Err(Failure::Config("pass --out <run directory>".into())),
    };
    Ok((cfg, run))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let quiet = cli.quiet;
    let progress = move |msg: &str| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Generate(args) => {
            let (cfg, dir) = stage_config(&args, false)?;
            let n = generate(&cfg, &dir, &progress)?;
            println!("generated {n} series in {}", dir.root().display());
        }
        Command::Train(args) => {
            let (cfg, dir) = stage_config(&args, true)?;
            for s in train(&cfg, &dir, &progress)? {
                println!(
                    "repetition {}: test loss {:.4}, test accuracy {:.4}",
                    s.repetition, s.test_loss, s.test_accuracy
                );
            }
        }
        Command::Explain(args) => {
            let (cfg, dir) = stage_config(&args, true)?;
            let timings = explain(&cfg, &dir, &progress)?;
            println!("wrote {} explanations under {}", timings.len(), dir.root().display());
        }
        Command::Evaluate(args) => {
            let (cfg, dir) = stage_config(&args, true)?;
            let report = evaluate(&cfg, &dir, &progress)?;
            print!("{}", report.table());
            for c in &report.checks {
                println!("{}", c.line());
            }
        }
        Command::Reproduce { name, common } => {
            let kind: ExperimentKind = name.parse()?;
            let cfg = resolve_config(&common.sources(Some(kind)))?;
            let outcome = reproduce(&cfg, &progress)?;
            print!("{}", outcome.report.table());
            println!();
            for c in &outcome.checks {
                println!("{}", c.line());
            }
            println!("run directory: {}", outcome.run_dir.display());
            if !outcome.passed() {
                return Err(Failure::Acceptance);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Acceptance) => {
            eprintln!("acceptance criteria not met");
            ExitCode::from(3)
        }
    }
}
