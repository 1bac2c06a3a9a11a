use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kgalign::demo::job_name_walkthrough;
use kgalign::experiments::{mean_consistency, run_experiment1, run_experiment2, SweepAxis, SweepSpec};
use kgalign::gradcheck;
use kgalign::kg::load_kg_json;
use kgalign::mnist::load_mnist_dir;
use kgalign::training::{TrainConfig, VsaTrainConfig};
use kgalign::vsa::DEFAULT_DIMENSION;

#[derive(Parser)]
#[command(name = "kgalign", version, about = "Align a network's own knowledge graph with a human one")]
struct Cli {
    /// Overrides the master seed of the chosen command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Joint training on MNIST against a human graph.
    Exp1 {
        /// TrainConfig as JSON; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mnist_dir: PathBuf,
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Symbol-only training over synthetic graph pairs.
    Exp2 {
        #[arg(long)]
        axis: String,
        /// Comma-separated values of the axis.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        /// VsaTrainConfig as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Role-filler binding and unbinding on random symbols.
    VsaDemo {
        #[arg(long, default_value_t = DEFAULT_DIMENSION)]
        dimension: usize,
    },
    /// Compares analytic gradients with central finite differences.
    CheckGradients {
        #[arg(long, default_value_t = gradcheck::DEFAULT_SEEDS)]
        seeds: usize,
    },
}

/// Exit 1: bad input detected before any work starts. Exit 2: failure while running.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

fn validation<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Validation(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(p) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(p).map_err(|e| validation(anyhow::anyhow!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| validation(anyhow::anyhow!("{}: {e}", p.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Exp1 {
            config,
            mnist_dir,
            kg,
            out,
        } => {
            let mut cfg: TrainConfig = read_json(config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.master_seed = s;
            }
            cfg.validate().map_err(validation)?;
            let kg_g = load_kg_json(&kg).map_err(validation)?;
            let (train, test) = load_mnist_dir(&mnist_dir).map_err(validation)?;
            let outcome = run_experiment1(&cfg, &kg_g, &train, &test, &out).map_err(runtime)?;
            let last = outcome.history.last().expect("at least one epoch");
            println!(
                "consistency {:.4}  similarity {:.4}  bipolar_loss {:.4}  test_accuracy {:.4}",
                last.consistency, last.similarity, last.bipolar_loss, last.test_accuracy
            );
            println!("results in {}", out.display());
        }
        Command::Exp2 {
            axis,
            values,
            seeds,
            out,
            config,
        } => {
            let axis: SweepAxis = axis.parse().map_err(validation)?;
            let values = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| validation(anyhow::anyhow!("--values: {e}")))?;
            let mut sweep = SweepSpec::new(axis, values, seeds);
            sweep.training = read_json::<VsaTrainConfig>(config.as_deref())?;
            if let Some(s) = cli.seed {
                sweep.base_seed = s;
            }
            sweep.validate().map_err(validation)?;
            let rows = run_experiment2(&sweep, &out).map_err(runtime)?;
            for (v, c) in mean_consistency(&rows) {
                println!("{axis} {v}: mean consistency {c:.4}");
            }
        }
        Command::VsaDemo { dimension } => {
            if dimension == 0 {
                return Err(validation(anyhow::anyhow!("--dimension must be positive")));
            }
            let w = job_name_walkthrough(dimension, cli.seed.unwrap_or(0)).map_err(runtime)?;
            print!("{}", w.render());
        }
        Command::CheckGradients { seeds } => {
            if seeds == 0 {
                return Err(validation(anyhow::anyhow!("--seeds must be positive")));
            }
            let reports = gradcheck::run_all(seeds).map_err(runtime)?;
            for r in &reports {
                println!("{r}");
            }
            if !reports.iter().all(|r| r.passed()) {
                return Err(runtime(anyhow::anyhow!("gradient check failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
