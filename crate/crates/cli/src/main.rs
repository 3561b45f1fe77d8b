use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ebk_cli::{Overrides, Run, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "ebk", version, about = "Torus quantization through second order in hbar")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Tolerance for the identity suite or the normal form
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,

    /// Let `compare` compute missing tables instead of failing
    #[arg(long, global = true)]
    generate: bool,

    /// Seed for sampled chart points (overrides seed)
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check the diagram identities at sampled chart points
    Identities,
    /// Symplectic normal form of the quadratic parts at the fixed point
    NormalForm,
    /// Tabulate EBK eigenvalues with the hbar² correction
    Quantize,
    /// Reference spectrum from the radial Schrödinger equation
    Oracle,
    /// Join the quantization and oracle tables and summarize the errors
    Compare,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let path = cli
        .config
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let cfg = RunConfig::load(&path)?;
    let run = Run::new(
        cfg,
        Overrides {
            out: cli.out,
            tol: cli.tol,
            seed: cli.seed,
            generate: cli.generate,
        },
    )?;
    match cli.command {
        Command::Identities => run.identities(),
        Command::NormalForm => run.normal_form(),
        Command::Quantize => run.quantize(),
        Command::Oracle => run.oracle(),
        Command::Compare => run.compare(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
