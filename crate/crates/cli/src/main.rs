//! `viewsynth` command-line tool.

mod commands;
mod queries;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use viewsynth::Error;

#[derive(Parser)]
#[command(
    name = "viewsynth",
    version,
    about = "Multi-view feature synthesis from a single image"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FamilyArg {
    Chairlike,
    Tablelike,
    Mixed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DistanceArg {
    Vad,
    Baseline,
    Part,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    K,
    Kp,
    Tau,
    Words,
}

/// Neighborhood and region flags shared by synthesis-based commands.
#[derive(clap::Args, Clone, Debug)]
pub struct SynthArgs {
    /// Neighborhood size (defaults to the manifest value).
    #[arg(long)]
    pub k: Option<usize>,
    /// Surrogate region size.
    #[arg(long, conflicts_with = "tau")]
    pub kp: Option<usize>,
    /// Surrogate probability threshold in [0, 1].
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a procedural collection and store its features.
    GenSynthetic {
        #[arg(long, value_enum, default_value = "chairlike")]
        family: FamilyArg,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        views: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Voxel grid side.
        #[arg(long, default_value_t = 32)]
        grid: usize,
        /// Also write every render as PGM under OUT/renders.
        #[arg(long)]
        renders: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the visual-word codebook for a collection.
    BuildVocab {
        #[arg(long)]
        collection: PathBuf,
        #[arg(long, default_value_t = 256)]
        words: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum number of patch features sampled for training.
        #[arg(long, default_value_t = viewsynth::vocabulary::DEFAULT_SAMPLE_CAP)]
        sample_cap: usize,
    },
    /// Quantize the collection and tabulate surrogate suitability.
    BuildSuitability {
        #[arg(long)]
        collection: PathBuf,
    },
    /// Synthesize the multi-view descriptor of one image.
    Synthesize {
        #[arg(long)]
        collection: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// `auto` or a view index.
        #[arg(long, default_value = "auto")]
        pose: String,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance between two stored descriptors.
    Vad {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Rank a list of query images against each other.
    Retrieve {
        #[arg(long)]
        collection: PathBuf,
        /// Tab-separated `id  image  [labels]  [view]` lines.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value = "vad")]
        distance: DistanceArg,
        /// Observed-view patches for `part`, e.g. "g3,g4,g9".
        #[arg(long)]
        region: Option<String>,
        /// `auto`, `truth` (view column of the list) or a view index.
        #[arg(long, default_value = "auto")]
        pose: String,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        report: PathBuf,
    },
    /// Precision-recall curve and AUC of saved rankings.
    EvalRetrieval {
        #[arg(long)]
        rankings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// PR curve CSV (defaults to next to the rankings).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weight transferability matrix between views.
    Transferability {
        #[arg(long)]
        collection: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieval AUC as one parameter varies.
    Sweep {
        #[arg(long)]
        collection: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Query list; defaults to every collection render, held out by shape.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Use at most this many collection shapes as queries.
        #[arg(long)]
        max_query_shapes: Option<usize>,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Address { .. } => 2,
        Error::Format(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynthetic {
            family,
            n,
            views,
            seed,
            grid,
            renders,
            out,
        } => commands::gen_synthetic(family, n, views, seed, grid, renders, &out),
        Command::BuildVocab {
            collection,
            words,
            seed,
            sample_cap,
        } => commands::build_vocab(&collection, words, seed, sample_cap),
        Command::BuildSuitability { collection } => commands::build_suitability(&collection),
        Command::Synthesize {
            collection,
            image,
            pose,
            synth,
            out,
        } => commands::synthesize(&collection, &image, &pose, &synth, &out),
        Command::Vad { a, b } => commands::vad(&a, &b),
        Command::Retrieve {
            collection,
            queries,
            distance,
            region,
            pose,
            synth,
            report,
        } => commands::retrieve(
            &collection,
            &queries,
            distance,
            region.as_deref(),
            &pose,
            &synth,
            &report,
        ),
        Command::EvalRetrieval {
            rankings,
            labels,
            out,
        } => commands::eval_retrieval(&rankings, &labels, out.as_deref()),
        Command::Transferability { collection, k, out } => {
            commands::transferability(&collection, k, out.as_deref())
        }
        Command::Sweep {
            collection,
            param,
            values,
            queries,
            max_query_shapes,
            synth,
            seed,
            out,
        } => commands::sweep(
            &collection,
            param,
            &values,
            queries.as_deref(),
            max_query_shapes,
            &synth,
            seed,
            &out,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
