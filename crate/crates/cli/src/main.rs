use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sac_core::harness::acceptance::{run_criteria, suite};
use sac_core::harness::report::Report;
use sac_core::harness::{run_config, Config, HarnessError};
use sac_core::reaction::Bistable;
use sac_core::wave::solve_wave_default;

#[derive(Parser)]
#[command(name = "sac", version, about = "Stochastic Allen-Cahn experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments listed in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `run.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate an acceptance suite: `acceptance`, `quick` or a criterion id 1-12.
    Validate {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: PathBuf,
        /// Config for the experiment-backed criteria; the defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the cubic traveling wave for the shift `delta` as JSON.
    Wave {
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        /// Also write the profile rows `z,m,m_z` to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Aggregate PASS/FAIL over the manifests in a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print a config file: the defaults, or the small smoke instance.
    Config {
        #[arg(long)]
        smoke: bool,
    },
}

fn status(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = Config::load(&config)?;
            if let Some(s) = seed {
                cfg.run.master_seed = s;
            }
            let report = run_config(&cfg, &out)?;
            print!("{}", report.render());
            Ok(status(report.pass))
        }
        Command::Validate {
            suite: name,
            out,
            config,
        } => {
            let ids = suite(&name)?;
            let cfg = match config {
                Some(p) => Config::load(&p)?,
                None => Config::default(),
            };
            let results = run_criteria(&ids, &cfg, &out, |c| println!("{}", c.line()))?;
            Ok(status(results.iter().all(|c| c.pass)))
        }
        Command::Wave { delta, csv } => {
            let w = solve_wave_default(&Bistable::cubic(), delta)?;
            println!("{}", serde_json::to_string_pretty(&w.sidecar())?);
            if let Some(path) = csv {
                let mut text = String::from("z,m,m_z\n");
                for [z, m, mz] in w.rows() {
                    text.push_str(&format!("{z:?},{m:?},{mz:?}\n"));
                }
                std::fs::write(path, text)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            let report = Report::from_dir(&dir)?;
            print!("{}", report.render());
            report.write(&dir)?;
            Ok(status(report.pass))
        }
        Command::Config { smoke } => {
            let cfg = if smoke {
                Config::smoke()
            } else {
                Config::default()
            };
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
