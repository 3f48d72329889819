use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fieldrecon::synthetic::SyntheticConfig;
use fieldrecon_cli::pipeline;
use fieldrecon_cli::{CliError, Overrides};

#[derive(Parser)]
#[command(name = "fieldrecon", version, about = "Reconstruct temperature fields from station observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select dates and write the train/validation/test splits.
    Ingest(Overrides),
    /// Tune every method on every date (resumes finished cells).
    Tune(Overrides),
    /// Score tuned models on the held-out test splits.
    Evaluate(Overrides),
    /// Rank-based comparison of the evaluated methods.
    Compare(Overrides),
    /// Time and measure reconstruction at increasing target counts.
    Bench(Overrides),
    /// Collect the produced tables into report.md.
    Report(Overrides),
    /// Write a synthetic observation file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        n_dates: usize,
        #[arg(long, default_value_t = 600)]
        n_stations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(o) => {
            let out = pipeline::cmd_ingest(&o.resolve()?)?;
            println!("ingested {} dates", out.dates.len());
        }
        Command::Tune(o) => {
            for c in pipeline::cmd_tune(&o.resolve()?)? {
                let note = if c.resumed { " (already done)" } else { "" };
                println!("{} {}: best validation MAE {:.4}{note}", c.method, c.date, c.best_objective);
            }
        }
        Command::Evaluate(o) => {
            for r in pipeline::cmd_evaluate(&o.resolve()?)? {
                println!("{} {}: MAE {:.4} RMSE {:.4} R2 {:.4}", r.method, r.date, r.mae, r.rmse, r.r2);
            }
        }
        Command::Compare(o) => print!("{}", pipeline::cmd_compare(&o.resolve()?)?.to_text()),
        Command::Bench(o) => {
            let out = pipeline::cmd_bench(&o.resolve()?)?;
            println!("{} measurements", out.records.len());
        }
        Command::Report(o) => println!("{}", pipeline::cmd_report(&o.resolve()?)?.display()),
        Command::Synth { out, n_dates, n_stations, seed } => {
            let cfg = SyntheticConfig { n_dates, n_stations, seed, ..Default::default() };
            pipeline::cmd_synth(&out, &cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
