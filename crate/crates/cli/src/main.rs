use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod pgm;

#[derive(Parser)]
#[command(name = "convnet", version, about = "Train, plan, and inspect small convolutional networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan an architecture file and check it against the recipe rulebook.
    ///
    /// Exit code: 0 clean (warnings allowed), 1 on error-severity
    /// diagnostics, 2 on unreadable or unparsable input.
    Lint {
        /// Architecture file to analyze.
        #[arg(long)]
        arch: PathBuf,
        /// Bytes per activation element for the memory estimate.
        #[arg(long, default_value_t = 4)]
        bytes_per_element: usize,
        /// Emit the report and diagnostics as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Train on MNIST and write a checkpoint.
    Train {
        /// Architecture file to train.
        #[arg(long)]
        arch: PathBuf,
        /// Directory holding the four MNIST IDX files (optionally .gz).
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint path (.cnnf).
        #[arg(long)]
        out: PathBuf,
        /// Learning rate.
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        /// Minibatch size.
        #[arg(long, default_value_t = 32)]
        batch: usize,
        /// Number of passes over the training set.
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        /// Seed for weight init and shuffling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report a checkpoint's accuracy on the 10k-image test set.
    Eval {
        /// Checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory holding the MNIST test files.
        #[arg(long)]
        data: PathBuf,
    },
    /// Export the first conv layer's activation maps for one test image
    /// as binary PGM files (act_0.pgm, act_1.pgm, ...).
    Activations {
        /// Checkpoint to run.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test-set image index to feed forward.
        #[arg(long)]
        index: usize,
        /// Directory holding the MNIST test files.
        #[arg(long)]
        data: PathBuf,
        /// Directory to write the PGM files into.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Lint { arch, bytes_per_element, json } => {
            commands::lint(&arch, bytes_per_element, json)
        }
        Command::Train { arch, data, out, lr, batch, epochs, seed } => {
            commands::train(&arch, &data, &out, lr, batch, epochs, seed)
        }
        Command::Eval { checkpoint, data } => commands::eval(&checkpoint, &data),
        Command::Activations { checkpoint, index, data, out } => {
            commands::activations(&checkpoint, index, &data, &out)
        }
    };
    ExitCode::from(code)
}
