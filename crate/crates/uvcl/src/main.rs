use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uvcl::cli::{self, AblationAxis};

#[derive(Parser)]
#[command(name = "uvcl", about = "Continual non-parametric clustering over feature-vector task streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task stream, test set, and manifest.
    Synth {
        /// Synthetic spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep one hyperparameter over a grid of values.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: AblationAxis,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Export buffered vectors from a registry checkpoint as CSV.
    ExportBuffers {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { spec, out } => cli::cmd_synth(&spec, &out),
        Command::Run { config } => cli::cmd_run(&config),
        Command::Ablate {
            config,
            axis,
            values,
        } => cli::cmd_ablate(&config, axis, &values),
        Command::ExportBuffers { checkpoint, out } => cli::cmd_export_buffers(&checkpoint, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = cli::exit_code(&err);
            let payload = serde_json::json!({ "error": err.to_string(), "code": code });
            println!("{payload}");
            ExitCode::from(code as u8)
        }
    }
}
