use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctlab::config::Config;
use ctlab::{driver, scenarios};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "ctlab", version, about = "Numerical lab for the damped continuity equation")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "CTLAB_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Solve one scenario and write densities at the requested times.
    Run(Common),
    /// Observed order of convergence under refinement.
    Convergence(Common),
    /// BMO seminorm, John–Nirenberg tail and superlevel decay of a field.
    BmoAnalyze(Common),
    /// Uniqueness certificate; exit code 0, 2 or 3 by verdict.
    Certify(Common),
    /// Print the built-in scenarios.
    ListScenarios,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario name, overriding the configuration.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Proceed even if the growth or divergence audit fails.
    #[arg(long)]
    force: bool,
}

enum Failure {
    Usage(String),
    Run(ctlab::Error),
}

impl From<ctlab::Error> for Failure {
    fn from(e: ctlab::Error) -> Self {
        Failure::Run(e)
    }
}

fn load(common: &Common) -> Result<Config, Failure> {
    let mut table = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(ctlab::Error::from)?;
            text.parse::<toml::Table>().map_err(|e| Failure::Run(ctlab::Error::Config(e.to_string())))?
        }
        None => toml::Table::new(),
    };
    if let Some(name) = &common.scenario {
        table.insert("scenario".into(), toml::Value::String(name.clone()));
    }
    if !table.contains_key("scenario") {
        return Err(Failure::Usage("no scenario given; pass --scenario NAME or set `scenario` in --config".into()));
    }
    Ok(Config::from_toml(&table.to_string())?)
}

fn execute(verb: &Verb) -> Result<u8, Failure> {
    match verb {
        Verb::ListScenarios => {
            for (name, description) in scenarios::BUILTIN {
                println!("{name:<26}{description}");
            }
            Ok(0)
        }
        Verb::Run(c) => {
            let rows = driver::run(&load(c)?, &c.out, c.force)?;
            for r in rows {
                match r.max_rel_error {
                    Some(e) => println!("t = {:<8} mass = {:.12e}  max relative error = {e:.3e}", r.t, r.mass),
                    None => println!("t = {:<8} mass = {:.12e}", r.t, r.mass),
                }
            }
            Ok(0)
        }
        Verb::Convergence(c) => {
            let table = driver::convergence(&load(c)?, &c.out)?;
            for (n, h, dt, err) in &table.levels {
                println!("n = {n:<5} h = {h:.4e}  flow dt = {dt:.3e}  L1 error = {err:.4e}");
            }
            println!("observed order {:.3}", table.order);
            Ok(0)
        }
        Verb::BmoAnalyze(c) => {
            let r = driver::bmo_analyze(&load(c)?, &c.out)?;
            println!("seminorm lower bound {:.6}", r.seminorm_lb);
            println!("L1 norm {:.6}", r.l1_norm);
            println!("John-Nirenberg b = {:.4}, log-RMS = {:.4}", r.jn.b_fit, r.jn.log_rms);
            println!("superlevel decay C = {:.4}, c = {:.4}", r.decay.big_c_fit, r.decay.c_fit);
            Ok(0)
        }
        Verb::Certify(c) => {
            let cert = driver::certify(&load(c)?, &c.out, c.force)?;
            println!("{}: {}", cert.verdict.as_str(), cert.reason);
            Ok(cert.verdict.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.workers {
        Some(0) => Err(Failure::Usage("--workers must be positive".into())),
        Some(w) => ctlab::par::with_workers(w, || execute(&cli.verb)),
        None => execute(&cli.verb),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
