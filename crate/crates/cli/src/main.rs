use std::path::PathBuf;
use std::process::ExitCode;

use brw_cli::commands::{self, RunOptions};
use brw_cli::{CliError, Format, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "brw", version)]
#[command(about = "Upper-deviation rates and simulations for level sets of branching random walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regime of the query (a, x): writes regime.json
    Classify(Common),
    /// Table of I(x) and of the deviation rate at each a: writes rates.csv and iax.csv
    Rate(Common),
    /// Monte Carlo estimate of the upper-deviation probability: writes estimate.json
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Compare against the exact probability (finite-atom step laws only)
        #[arg(long)]
        oracle_check: bool,
    },
    /// Exact law of the level-set count at generation n: writes pmf.csv
    Pmf(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Seed; overrides query.seed
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory; overrides output.dir
    #[arg(long, value_name = "DIR")]
    out: Option<String>,

    /// Format of the main output file
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn execute(name: &str, common: &Common, oracle_check: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = RunConfig::load(&common.config.to_string_lossy())?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.set_output_dir(out);
    }
    let opts = RunOptions { out_dir: cfg.output_dir().into(), format: common.format, oracle_check };
    commands::run(name, &cfg, &opts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Classify(c) => execute("classify", c, false),
        Command::Rate(c) => execute("rate", c, false),
        Command::Simulate { common, oracle_check } => execute("simulate", common, *oracle_check),
        Command::Pmf(c) => execute("pmf", c, false),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
