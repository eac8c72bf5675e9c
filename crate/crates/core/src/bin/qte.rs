use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dualqte::experiments::{exit_code, list_experiments, run_to_dir, with_thread_cap, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "qte", about = "Variational quantum time evolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's output_path, else ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of seeded replicas.
        #[arg(long)]
        repeat: Option<usize>,
        /// Use exact expectation values instead of shot sampling.
        #[arg(long)]
        exact_shots: bool,
    },
    /// Print every named experiment with its default config.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            let mut out = std::io::stdout().lock();
            for e in list_experiments() {
                let config = serde_json::to_string(&e.default_config).expect("serializable");
                if writeln!(out, "{:<26} {}\n    {config}", e.name, e.reproduces).is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, out, seed, repeat, exact_shots } => {
            let opts = RunOptions { out_dir: out, seed, replicas: repeat, exact_shots };
            let result = ExperimentConfig::from_path(&config).and_then(|c| opts.apply(c)).and_then(|c| {
                let dir = PathBuf::from(c.output_path.clone().unwrap_or_else(|| "out".into()));
                with_thread_cap(|| run_to_dir(&c, &dir)).map(|_| dir)
            });
            match result {
                Ok(dir) => {
                    eprintln!("wrote {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("qte: {e}");
                    ExitCode::from(exit_code(&e) as u8)
                }
            }
        }
    }
}
