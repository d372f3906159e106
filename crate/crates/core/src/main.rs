use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use roughbsde::cli::{init_threads, run, Subcommand};

/// Batch experiments for BSDEs with distributional drivers.
#[derive(Parser, Debug)]
#[command(name = "roughbsde", version, about)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Experiment config (TOML).
    config: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    init_threads();
    let out = run(args.subcommand, &args.config);
    if let Some(dir) = &out.output_dir {
        eprintln!("artifacts in {}", dir.display());
    }
    eprintln!("{}: {}", args.subcommand.name(), out.message);
    ExitCode::from(out.code as u8)
}
