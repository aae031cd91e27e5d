//! Command-line runner: dataset generation, training, evaluation, and
//! sampler debugging, all driven by one TOML config per run.

mod commands;
mod config_io;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pdpinn", version, about = "Mesh-free field-network lab runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the dataset described by the config.
    GenData {
        #[arg(long)]
        config: std::path::PathBuf,
        /// Repeatable KEY=VALUE config override (dotted path).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory; defaults to the config's experiment.data_dir.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Train a run (or a range of seeds) and write metrics, summary and
    /// checkpoint under the output directory.
    Train {
        #[arg(long)]
        config: std::path::PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Inclusive seed range `A..B`; overrides the config seed per run.
        #[arg(long)]
        seeds: Option<String>,
        /// Root of the run directories.
        #[arg(long, default_value = "runs")]
        out: std::path::PathBuf,
    },
    /// Evaluate a checkpoint: test metric plus plot-ready prediction and
    /// projection CSVs.
    Eval {
        #[arg(long)]
        checkpoint: std::path::PathBuf,
        #[arg(long)]
        config: std::path::PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory; defaults to `plots/` beside the checkpoint.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Draw one collocation batch from the configured sampler against a
    /// checkpoint and dump the raw points plus diagnostics.
    SampleDebug {
        #[arg(long)]
        checkpoint: std::path::PathBuf,
        #[arg(long)]
        config: std::path::PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::GenData { config, overrides, out } => commands::gen_data(&config, &overrides, out),
        Cmd::Train { config, overrides, seeds, out } => {
            commands::train(&config, &overrides, seeds.as_deref(), &out)
        }
        Cmd::Eval { checkpoint, config, overrides, out } => {
            commands::eval(&checkpoint, &config, &overrides, out)
        }
        Cmd::SampleDebug { checkpoint, config, overrides, out } => {
            commands::sample_debug(&checkpoint, &config, &overrides, out)
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
