//! `spdc`: subspace clustering experiments on SPD-matrix datasets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spdc_cli::config::{ExperimentConfig, Method};
use spdc_cli::dataset::describe_dataset;
use spdc_cli::experiment::{gamma_sweep, run_experiment};
use spdc_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "spdc",
    about = "Kernel sparse subspace clustering on SPD matrices",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to the key-value config file.
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the experiment once per gamma value and emit sweep.csv.
    Sweep {
        /// Path to the key-value config file.
        config: PathBuf,
        /// Comma-separated list of gamma values.
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the header of an SPDS dataset file.
    Describe {
        /// Path to the dataset file.
        dataset: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's method.
    #[arg(long)]
    method: Option<String>,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
}

fn main() -> ExitCode {
    configure_threads();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// `SPDC_THREADS` caps worker concurrency; 0 or unset keeps the default.
fn configure_threads() {
    if let Ok(value) = std::env::var("SPDC_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let config = load_config(&config, &overrides)?;
            let outcome = run_experiment(&config)?;
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            print_summary(&config, &outcome.summary);
            Ok(())
        }
        Command::Sweep {
            config,
            gamma,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let rows = gamma_sweep(&config, &gamma)?;
            println!("gamma sweep over {} values:", rows.len());
            for row in rows {
                println!(
                    "  gamma={:<12} accuracy={} nmi={}",
                    row.gamma,
                    fmt(row.mean_accuracy),
                    fmt(row.mean_nmi)
                );
            }
            Ok(())
        }
        Command::Describe { dataset } => {
            let (n, d, has_labels) = describe_dataset(&dataset)?;
            println!(
                "{}: N={n}, d={d}, labels={}",
                dataset.display(),
                if has_labels { "yes" } else { "no" }
            );
            Ok(())
        }
    }
}

fn load_config(path: &PathBuf, overrides: &Overrides) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = overrides.seed {
        config.base_seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    if let Some(method) = &overrides.method {
        config.method = Method::parse(method)?;
    }
    if let Some(trials) = overrides.trials {
        config.trials = trials;
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(config: &ExperimentConfig, summary: &spdc_cli::experiment::Summary) {
    match (summary.mean_accuracy, summary.std_accuracy) {
        (Some(mean), Some(std)) => {
            println!(
                "{}: accuracy {:.4} +/- {:.4} (sample std), nmi {:.4} +/- {:.4} over {} trial(s)",
                config.method.name(),
                mean,
                std,
                summary.mean_nmi.unwrap_or(f64::NAN),
                summary.std_nmi.unwrap_or(f64::NAN),
                config.trials
            );
        }
        _ => println!(
            "{}: no ground truth available; see results.csv",
            config.method.name()
        ),
    }
    println!("results written to {}", config.output_dir.display());
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}
