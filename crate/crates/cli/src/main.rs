use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shockvol::estimation::{FitConfig, VarianceInit};
use shockvol::multiverse::LossKind;
use shockvol_cli::commands::{self, FitOptions, Format, Output};
use shockvol_cli::config::DemeanToml;
use shockvol_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "shockvol", version, about = "Shock-adjusted GARCH volatility forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Where to write machine-readable output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a GARCH-X path with an optional volatility shock.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit GARCH(m, s) by Gaussian QML, with a shock fixed effect if --t-star is given.
    Fit {
        /// CSV with a `return` or `price` column.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        arch: usize,
        #[arg(long, default_value_t = 1)]
        garch: usize,
        /// Pre-shock observations; the shock window starts here.
        #[arg(long)]
        t_star: Option<usize>,
        #[arg(long, default_value_t = 1)]
        len_vol: usize,
        /// "sample-mean", "zero" or a number.
        #[arg(long, default_value = "sample-mean")]
        demean: String,
        #[arg(long)]
        sample_variance_init: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Shock-adjusted forecast for the target of a study bundle.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo win-fraction grid.
    McGrid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Leave-one-out forecasts over donors and covariates.
    Multiverse {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum LossArg {
    Ql,
    Mse,
    Ape,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Ql => LossKind::Ql,
            LossArg::Mse => LossKind::Mse,
            LossArg::Ape => LossKind::Ape,
        }
    }
}

fn emit(output: Output, common: &Common) -> CliResult<()> {
    match &common.out {
        Some(path) => {
            std::fs::write(path, &output.machine)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            print!("{}", output.summary);
        }
        None => print!("{}", output.machine),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, seed, common } => {
            let (output, seed) = commands::simulate(&config, seed, common.format)?;
            eprintln!("seed: {seed}");
            emit(output, &common)
        }
        Command::Fit { input, arch, garch, t_star, len_vol, demean, sample_variance_init, common } => {
            let demean = match demean.parse::<f64>() {
                Ok(v) => DemeanToml::Value(v),
                Err(_) => DemeanToml::Named(demean),
            }
            .to_demean()?;
            let fit = FitConfig {
                demean,
                variance_init: if sample_variance_init { VarianceInit::SampleVariance } else { VarianceInit::Unconditional },
                ..FitConfig::default()
            };
            let options = FitOptions { orders: (arch, garch), t_star, len_vol, fit };
            emit(commands::fit(&input, &options, common.format)?, &common)
        }
        Command::Forecast { config, common } => emit(commands::forecast(&config, common.format)?, &common),
        Command::McGrid { config, seed, common } => {
            let (output, seed) = commands::mc_grid(&config, seed, common.format)?;
            eprintln!("seed: {seed}");
            emit(output, &common)
        }
        Command::Multiverse { config, loss, common } => {
            emit(commands::multiverse(&config, loss.map(Into::into), common.format)?, &common)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
