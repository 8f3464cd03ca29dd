use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kscl::selfcheck::Fault;
use kscl_cli::{config::RunConfig, run, Command, Failure, Invocation, EXIT_CONFIG};

/// K-shot subspace contrastive learning at desk scale.
#[derive(Parser, Debug)]
#[command(name = "kscl", version)]
struct Cli {
    #[command(subcommand)]
    command: Verb,
    /// TOML config file; omitted keys take the desk defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "kscl-out")]
    out: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Test hook: run selfcheck with a deliberate defect.
    #[arg(long, global = true, hide = true)]
    inject_fault: Option<Fault>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Verb {
    /// Generate the synthetic dataset (binary and CSV).
    GenData,
    /// Pretrain encoders; writes a checkpoint, report and loss curve.
    Pretrain,
    /// Linear probe of a checkpoint's query encoder, with a permuted-label control.
    Probe,
    /// Pretrain and probe every (K, rho, seed) cell.
    Sweep,
    /// Describe the retained subspace bases of chosen instances.
    BasisViz,
    /// Run the numerical invariant suite.
    Selfcheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Verb::GenData => Command::GenData,
        Verb::Pretrain => Command::Pretrain,
        Verb::Probe => Command::Probe,
        Verb::Sweep => Command::Sweep,
        Verb::BasisViz => Command::BasisViz,
        Verb::Selfcheck => Command::Selfcheck,
    };
    let result = (|| -> Result<(), Failure> {
        let mut config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        run(&Invocation {
            command,
            config_path: cli.config.clone(),
            config,
            out_dir: cli.out.clone(),
            quiet: cli.quiet,
            fault: cli.inject_fault,
        })
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(u8::try_from(f.code).unwrap_or(EXIT_CONFIG as u8))
        }
    }
}
