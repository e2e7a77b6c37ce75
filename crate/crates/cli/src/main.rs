use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rdlambda_cli::{cmd_bdrate, cmd_fit, cmd_simulate, cmd_structures, cmd_sweep, CliResult, SimMode, LOG_ENV};
use rdlambda_core::fitting::QpRange;
use rdlambda_core::gop::StructureKind;
use rdlambda_core::metrics::BdInterp;
use rdlambda_core::sweep::DEFAULT_SWEEP_QPS;

#[derive(Parser)]
#[command(name = "rdlambda", version, about = "R-D-lambda rate control: fitting, simulation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Interp {
    Cubic,
    Pchip,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the classic and proposed R-D models to a qp,bpp,mse CSV.
    Fit {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Comma-separated QP ranges such as 4-51,17-37.
        #[arg(long, value_delimiter = ',', value_parser = parse_range)]
        ranges: Vec<QpRange>,
        #[arg(long)]
        force: bool,
    },
    /// Run one rate control simulation.
    Simulate {
        /// Experiment config, or a manifest from an earlier run.
        #[arg(long)]
        config: PathBuf,
        /// abr or cqp.
        #[arg(long, default_value = "abr")]
        mode: String,
        #[arg(long)]
        qp: Option<i32>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// CQP at each QP, then ABR at each CQP rate; reports BD-rate and mean rate error.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_QPS)]
        qps: Vec<i32>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// BD-rate of TEST against ANCHOR (bitrate,psnr_db CSVs), in percent.
    Bdrate {
        anchor: PathBuf,
        test: PathBuf,
        #[arg(long, value_enum, default_value = "cubic")]
        interp: Interp,
    },
    /// Print the RA/LD GOP tables as JSON.
    Structures {
        #[arg(long, value_parser = parse_kind)]
        kind: Option<StructureKind>,
    },
}

fn parse_range(s: &str) -> Result<QpRange, String> {
    s.parse().map_err(|e: rdlambda_core::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<StructureKind, String> {
    s.parse().map_err(|e: rdlambda_core::Error| e.to_string())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit {
            input,
            output,
            ranges,
            force,
        } => cmd_fit(&input, &ranges, &output, force),
        Command::Simulate {
            config,
            mode,
            qp,
            out,
            force,
        } => cmd_simulate(&config, SimMode::parse(&mode, qp)?, &out, force),
        Command::Sweep { config, qps, out, force } => cmd_sweep(&config, &qps, &out, force),
        Command::Bdrate { anchor, test, interp } => {
            let interp = match interp {
                Interp::Cubic => BdInterp::Cubic,
                Interp::Pchip => BdInterp::Pchip,
            };
            println!("{:.6}", cmd_bdrate(&anchor, &test, interp)?);
            Ok(())
        }
        Command::Structures { kind } => {
            println!("{}", cmd_structures(kind)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
