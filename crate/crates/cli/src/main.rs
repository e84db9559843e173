//! `dclse`: encode slice stacks, generate synthetic data, train, evaluate and
//! inspect.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dclse_core::{Category, PoolingMethod};

#[derive(Parser, Debug)]
#[command(name = "dclse", version, about = "Dynamic-image encoding and curriculum training for slice stacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collapse a volume into one planar image (PFM) plus a JSON sidecar.
    Encode {
        /// DASE file or directory of PGM slices
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: PoolingMethod,
        /// Required for stochastic pooling
        #[arg(long)]
        seed: Option<u64>,
        /// Output PFM path
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic labelled dataset.
    Synth {
        /// Synthetic spec JSON
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a holdout split and write the model, history and metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained model on a dataset directory.
    Eval {
        /// Model manifest written by `train`
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Metrics JSON path
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the class of one volume.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        volume: PathBuf,
        /// Optional directory for prediction.json and a manifest
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every differentiable operator.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional directory for gradcheck.json and a manifest
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print header, shape and value statistics of a DASE, PGM-stack or PFM input.
    Inspect {
        #[arg(long)]
        input: PathBuf,
    },
    /// Cross-validate every pooling method on synthetic data and write a CSV table.
    Compare {
        /// Run config JSON (model, optimiser, epochs, ...); defaults when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Synthetic spec JSON; defaults when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(category: Category) -> u8 {
    match category {
        Category::Usage => 2,
        Category::Data => 3,
        Category::Numeric => 4,
    }
}

fn category_name(category: Category) -> &'static str {
    match category {
        Category::Usage => "usage",
        Category::Data => "data",
        Category::Numeric => "numeric",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode {
            input,
            method,
            seed,
            out,
        } => commands::encode(&input, method, seed, &out),
        Command::Synth { spec, out } => commands::synth(&spec, &out),
        Command::Train { config, out } => commands::train(&config, &out),
        Command::Eval { model, data, out } => commands::eval(&model, &data, &out),
        Command::Predict { model, volume, out } => commands::predict(&model, &volume, out.as_deref()),
        Command::Gradcheck { seed, out } => commands::gradcheck(seed, out.as_deref()),
        Command::Inspect { input } => commands::inspect(&input),
        Command::Compare {
            config,
            spec,
            seeds,
            folds,
            out,
        } => commands::compare(config.as_deref(), spec.as_deref(), &seeds, folds, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let c = e.category();
            eprintln!("error[{}]: {e}", category_name(c));
            ExitCode::from(exit_code(c))
        }
    }
}
