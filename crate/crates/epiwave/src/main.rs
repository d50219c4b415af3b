use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use epiwave::config::RunConfig;
use epiwave::error::Error;
use epiwave::model::DerivativeMode;
use epiwave::pipeline;

#[derive(Parser)]
#[command(
    name = "epiwave",
    version,
    about = "Multi-peak epidemic wave fitting with a shared gamma case-to-death delay"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Aggregate daily counts into weekly series per region
    Ingest(CommonArgs),
    /// Stage-1 Monte Carlo seed fit per region
    Seed(CommonArgs),
    /// Simultaneous generalized-least-squares fit over all regions
    Fit(CommonArgs),
    /// Render text/JSON reports and confidence bands from the stored fit
    Report(CommonArgs),
    /// All stages in order
    Run(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the stage-1 RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Hold the delay kernel at its initial value
    #[arg(long)]
    fixed_kernel: bool,
    /// Derivative formula for the kernel shape parameter
    #[arg(long, value_enum)]
    derivative_mode: Option<CliDerivativeMode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliDerivativeMode {
    Paper,
    Exact,
}

impl CommonArgs {
    fn load_config(&self) -> Result<RunConfig, Error> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            config.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed.rng_seed = seed;
        }
        if self.fixed_kernel {
            config.fit.fixed_kernel = true;
        }
        if let Some(mode) = self.derivative_mode {
            config.fit.derivative_mode = match mode {
                CliDerivativeMode::Paper => DerivativeMode::Paper,
                CliDerivativeMode::Exact => DerivativeMode::Exact,
            };
        }
        Ok(config)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::StaleStage(_) => 2,
        Error::Data(_) | Error::MissingDays { .. } | Error::Io(_) | Error::Csv(_) => 3,
        Error::Numerical(_) | Error::IllConditioned { .. } | Error::Diverged { .. } => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Ingest(args) => {
            pipeline::cmd_ingest(&args.load_config()?)?;
        }
        Cmd::Seed(args) => {
            pipeline::cmd_seed(&args.load_config()?)?;
        }
        Cmd::Fit(args) => {
            pipeline::cmd_fit(&args.load_config()?)?;
        }
        Cmd::Report(args) => {
            let config = args.load_config()?;
            pipeline::cmd_report(&config)?;
            let text = std::fs::read_to_string(
                pipeline::report_dir(&config).join("report.txt"),
            )?;
            print!("{text}");
        }
        Cmd::Run(args) => {
            let config = args.load_config()?;
            pipeline::cmd_run(&config)?;
            let text = std::fs::read_to_string(
                pipeline::report_dir(&config).join("report.txt"),
            )?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EPIWAVE_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
