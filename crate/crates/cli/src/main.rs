use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sggmdar_cli::commands::{
    cmd_fit, cmd_metrics, cmd_simulate, cmd_summarize, FitArgs, MetricsArgs, SimulateArgs, SummarizeArgs,
};
use sggmdar_cli::CliResult;

#[derive(Parser)]
#[command(name = "sggmdar", version, about = "Sparse graphical models with DAR regime switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate data and write `<out>.csv` plus `<out>.truth.json`.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output prefix.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Run the sampler and write a JSON-lines chain file.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
    },
    /// Post-process a chain file into a report and plot-ready CSVs.
    Summarize {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Data file, if it moved since the fit.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score reports against simulation truth.
    Metrics {
        #[arg(long, required = true, num_args = 1..)]
        truth: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        report: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            replicates,
        } => {
            for o in cmd_simulate(&SimulateArgs {
                config,
                out,
                seed,
                replicates,
            })? {
                println!("{} (seed {})", o.data.display(), o.seed);
            }
        }
        Command::Fit {
            data,
            config,
            out,
            seed,
            chains,
            thin,
        } => {
            let h = cmd_fit(&FitArgs {
                data,
                config,
                out: out.clone(),
                seed,
                chains,
                thin,
            })?;
            println!("{}: {} chain(s), seed {}", out.display(), h.sampler.chains, h.sampler.seed);
        }
        Command::Summarize { chain, out, level, data } => {
            let r = cmd_summarize(&SummarizeArgs {
                chain,
                out: out.clone(),
                level,
                data,
            })?;
            println!("{}: M = {}, P = {}", out.display(), r.m_hat, r.p_hat);
        }
        Command::Metrics { truth, report, out } => {
            cmd_metrics(&MetricsArgs {
                truth,
                report,
                out: out.clone(),
            })?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sggmdar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
