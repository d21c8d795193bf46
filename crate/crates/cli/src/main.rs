//! `polyloc`: command-line driver for the numerical experiments.
//!
//! Parameters come either from subcommand flags or from a JSON run config
//! (`--config`). Results go to `<out>/<command>-<hash>/` together with a
//! manifest; a JSON summary is printed on standard output. Errors are printed
//! as JSON on standard error, with exit status 2 for usage and configuration
//! errors and 1 for failures during the run.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use config::{default_output_dir, Command, RunConfig};

/// Environment variable holding the default number of worker threads.
const THREADS_ENV: &str = "POLYLOC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "polyloc", version, about = "Localization experiments for random and periodic copolymers")]
struct Cli {
    /// Master seed; sample `i` uses the random stream `i` of this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory under which the run directory is created.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON run config; replaces the subcommand and its flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

enum Failure {
    Usage(String),
    Config(String),
    Run(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (kind, message, code) = match self {
            Failure::Usage(m) => ("usage", m, 2),
            Failure::Config(m) => ("config", m, 2),
            Failure::Run(m) => ("run", m, 1),
        };
        eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
        ExitCode::from(code)
    }
}

fn load_config(cli: Cli) -> Result<RunConfig, Failure> {
    let mut config = match (cli.config, cli.command) {
        (Some(_), Some(_)) => return Err(Failure::Usage("give either --config or a subcommand, not both".into())),
        (None, None) => return Err(Failure::Usage("a subcommand or --config is required; see --help".into())),
        (None, Some(command)) => RunConfig { command, master_seed: 0, threads: None, output_dir: default_output_dir() },
        (Some(path), None) => {
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            if text.trim().is_empty() {
                return Err(Failure::Config(format!("{}: empty config", path.display())));
            }
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    Ok(config)
}

fn run(config: RunConfig) -> Result<(), Failure> {
    let threads = config.threads.unwrap_or(0);
    let start = Instant::now();
    eprintln!("polyloc: running {} with seed {}", config.command.label(), config.master_seed);
    let artifacts = polyloc_core::mc::with_threads(threads, || commands::execute(&config.command, config.master_seed))
        .and_then(|r| r)
        .map_err(|e| match e {
            polyloc_core::Error::InvalidArgument(m) => Failure::Config(m),
            other => Failure::Run(other.to_string()),
        })?;
    let written = output::write_run(&config, &artifacts, threads, start.elapsed().as_secs_f64())
        .map_err(|e| Failure::Run(format!("writing outputs: {e}")))?;
    println!("{}", json!({ "run_dir": written.run_dir, "files": written.files, "summary": artifacts.summary }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::Usage(e.render().to_string()).report(),
    };
    match load_config(cli).and_then(run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
