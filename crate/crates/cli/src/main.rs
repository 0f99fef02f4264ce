use std::path::PathBuf;
use std::process::ExitCode;

use arrival_cli::{io, run, CliError, Command, RunConfig};
use arrival_core::PartitionSpec;
use clap::Parser;

/// Estimate a population proportion from survey response times.
#[derive(Debug, Parser)]
#[command(name = "arrival", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Responses CSV with `time` and `label` columns.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Report path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    command: Option<Command>,
    /// `constant`, `weekday-classes`, `every-K-weekdays` or `breakpoints:a,b,...`.
    #[arg(long)]
    partition: Option<PartitionSpec>,
    /// Calendar CSV with `day` and `class` columns.
    #[arg(long)]
    calendar: Option<PathBuf>,
    #[arg(long)]
    population_size: Option<u64>,
    #[arg(long)]
    censor_time: Option<f64>,
    /// Tidy CSV of the diagnostic series.
    #[arg(long)]
    series_csv: Option<PathBuf>,
    /// Where `simulate` writes responses (plus `.truth.json` and `.calendar.csv`).
    #[arg(long)]
    data_out: Option<PathBuf>,
    /// Include log-likelihood, score and Hessian at the estimate.
    #[arg(long)]
    likelihood_debug: bool,
}

fn config(args: Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field {
                cfg.$field = Some(v);
            }
        )*};
    }
    set!(
        input,
        out,
        calendar,
        population_size,
        censor_time,
        series_csv,
        data_out
    );
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(command) = args.command {
        cfg.command = command;
    }
    if let Some(partition) = args.partition {
        cfg.partition = partition;
    }
    cfg.likelihood_debug |= args.likelihood_debug;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = config(args).and_then(|cfg| {
        let report = run(&cfg)?;
        match &cfg.out {
            Some(path) => io::write_json(path, &report),
            None => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
                Ok(())
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
