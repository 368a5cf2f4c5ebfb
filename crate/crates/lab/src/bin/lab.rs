use std::path::PathBuf;
use std::process::ExitCode;

use anderson_lab::export::{self, Format};
use anderson_lab::{ExperimentSpec, Kind, LabError, Pool, Result};
use clap::Parser;

/// Run one experiment from a JSON spec.
///
/// Exit codes: 0 success, 2 invalid spec, 3 resource guard, 4 numerical
/// failure, 1 I/O.
#[derive(Parser, Debug)]
#[command(name = "lab", version)]
struct Cli {
    /// Experiment kind; must match the `kind` key of the config file.
    kind: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `root_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `n_samples`.
    #[arg(long)]
    samples: Option<u64>,
    /// Output file; falls back to the config's `output`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: $LAB_WORKERS or all cores].
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "csv")]
    format: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let kind: Kind = cli.kind.parse()?;
    let format: Format = cli.format.parse()?;
    let text =
        std::fs::read_to_string(&cli.config).map_err(|source| LabError::Io { path: cli.config.clone(), source })?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    if spec.kind != kind {
        return Err(LabError::spec("kind", format!("spec is `{}` but `{kind}` was requested", spec.kind)));
    }
    if let Some(seed) = cli.seed {
        spec = spec.with_seed(seed);
    }
    if let Some(n) = cli.samples {
        spec = spec.with_samples(n)?;
    }
    let pool = match cli.workers {
        Some(w) => Pool::new(w)?,
        None => Pool::from_env()?,
    };
    let record = anderson_lab::run(&spec, &pool)?;
    match cli.out.or(spec.output.clone()) {
        Some(path) => export::export(&record, format, &path),
        None => {
            print!("{}", export::render(&record, format)?);
            Ok(())
        }
    }
}
