//! `ltasep`: run simulation, theory, PDE, comparison, inference and phase-scan
//! workflows from a JSON config.

mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ltasep", version, about = "Inhomogeneous l-TASEP workflows")]
struct Args {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Master seed; overrides the config value.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for replicas and scans.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,

    /// Output directory; overrides the config value.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn execute(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    if args.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let mut config = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| run::default_out(&config));
    let ctx = run::Context::new(out, args.workers)?;
    run::run(&config, &ctx)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match execute(&args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = serde_json::json!({ "error": e.code(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
