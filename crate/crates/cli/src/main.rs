use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use precda_cli::commands::{dispatch, CliError, EXIT_CONFIG};
use precda_cli::config::RunConfig;

/// Precision-matrix estimation with shrinkage and data augmentation.
#[derive(Parser)]
#[command(name = "precda", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (key = value lines)
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override or supply a single key, e.g. --set lambda=0.1
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw synthetic samples from a covariance spec
    Gen(CommonArgs),
    /// Write a shrinkage or augmented precision estimate
    Estimate(CommonArgs),
    /// Sweep the error estimate over a lambda grid
    #[command(name = "lambda-curve")]
    LambdaCurve(CommonArgs),
    /// Sweep the augmented error estimate over a proportion grid
    #[command(name = "alpha-curve")]
    AlphaCurve(CommonArgs),
    /// Pick the best hyperparameter from a grid
    Tune(CommonArgs),
    /// Draw artificial samples for an augmentation scheme
    Augment(CommonArgs),
    /// Run validation suites and write their reports
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated suites (fixed-point, sherman-morrison,
        /// decomposition, shrinkage-fidelity, det-equiv) or 'all'
        #[arg(long)]
        suite: Option<String>,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for assignment in &common.sets {
        cfg.set(assignment)?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    // the environment variable only picks the default worker count; all
    // results are bit-identical regardless of it
    if let Ok(threads) = std::env::var("PRECDA_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global();
        }
    }

    let cli = Cli::parse();
    let (name, common, suite) = match &cli.command {
        Command::Gen(c) => ("gen", c, None),
        Command::Estimate(c) => ("estimate", c, None),
        Command::LambdaCurve(c) => ("lambda-curve", c, None),
        Command::AlphaCurve(c) => ("alpha-curve", c, None),
        Command::Tune(c) => ("tune", c, None),
        Command::Augment(c) => ("augment", c, None),
        Command::Validate { common, suite } => ("validate", common, suite.as_deref()),
    };

    let cfg = match load_config(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match dispatch(name, &cfg, suite) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
