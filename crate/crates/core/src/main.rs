use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ivbma_core::bma::GPrior;
use ivbma_core::pipeline::Roster;
use ivbma_core::report::{run, Method, RunConfig};
use ivbma_core::synthetic::{simulate_panel, PanelSimulation};

#[derive(Parser)]
#[command(name = "ivbma", version, about = "Bayesian model averaging and instrumental-variable BMA for cross-country data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average the panel, fit the chosen model and write the report files.
    Run {
        /// Long-format panel CSV (country,year,variable,value).
        #[arg(long)]
        data: PathBuf,
        /// Variable roster (TOML).
        #[arg(long)]
        roster: PathBuf,
        /// bma-exact, bma-mc3 or ivbma.
        #[arg(long, default_value = "ivbma")]
        method: Method,
        #[arg(long, default_value_t = RunConfig::DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long, default_value_t = RunConfig::DEFAULT_BURN_IN)]
        burn_in: usize,
        /// Keep every n-th post-burn-in draw.
        #[arg(long, default_value_t = RunConfig::DEFAULT_THINNING)]
        thin: usize,
        #[arg(long, default_value_t = RunConfig::DEFAULT_SEED)]
        seed: u64,
        /// g-prior constant: "n" for unit information, or a positive number.
        #[arg(long, default_value = "n")]
        g: GPrior,
        /// File listing the countries to keep.
        #[arg(long)]
        subsample: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "ivbma-out")]
        out: PathBuf,
    },
    /// Write a synthetic panel covering every series in a roster.
    Simulate {
        #[arg(long)]
        roster: PathBuf,
        #[arg(long, default_value_t = 111)]
        countries: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Probability that an annual cell is missing.
        #[arg(long, default_value_t = 0.02)]
        missing_rate: f64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            data,
            roster,
            method,
            iterations,
            burn_in,
            thin,
            seed,
            g,
            subsample,
            out,
        } => {
            let config = RunConfig {
                data,
                roster,
                method,
                iterations,
                burn_in,
                thinning: thin,
                seed,
                g,
                subsample,
                out,
            };
            match run(&config) {
                Ok(outcome) => {
                    print!("{}", outcome.report);
                    eprintln!(
                        "wrote {} files to {} in {:.1}s",
                        outcome.manifest.outputs.len(),
                        config.out.display(),
                        outcome.manifest.wall_time_seconds
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Simulate {
            roster,
            countries,
            seed,
            missing_rate,
            out,
        } => {
            let result = Roster::load(&roster).and_then(|r| {
                let mut options = PanelSimulation::new(countries, seed);
                options.missing_rate = missing_rate;
                let panel = simulate_panel(&r, &options);
                let file = File::create(&out).map_err(|e| ivbma_core::Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
                panel.write_csv(file)
            });
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
