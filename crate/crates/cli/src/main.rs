use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dentfuse_core::annotations::IndexBase;

mod config;
mod convert;
mod eval;
mod files;
mod font;
mod fuse;
mod masks;
mod overlay;
mod synth;

use config::ConfigError;

/// Fuses tooth and disease detections on dental panoramic radiographs.
#[derive(Parser, Debug)]
#[command(name = "dentfuse", version, about)]
struct Cli {
    /// Worker threads for per-image work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a hierarchical annotation file to plain COCO categories.
    Convert(convert::ConvertArgs),
    /// Draw label masks from annotation polygons.
    Rasterize(masks::RasterizeArgs),
    /// Extract one box per label from mask files.
    Boxes(masks::BoxesArgs),
    /// Vote tooth ids for disease detections and write a submission.
    Fuse(fuse::FuseArgs),
    /// Score a submission against ground truth.
    Eval(eval::EvalArgs),
    /// Write a synthetic case: annotations, masks, predictions and a run config.
    Synth(synth::SynthArgs),
    /// Draw findings onto a radiograph.
    Overlay(overlay::OverlayArgs),
}

/// Options shared by commands that read raw annotation files.
#[derive(Args, Debug, Clone)]
pub struct AnnotationArgs {
    /// Base of category ids in hierarchical annotation files.
    #[arg(long, default_value = "zero_based", value_parser = parse_base)]
    pub annotation_base: IndexBase,

    /// TOML file overriding the annotation field names.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

pub fn parse_base(s: &str) -> Result<IndexBase, String> {
    s.parse().map_err(|e: dentfuse_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(3);
        }
    }

    let result = match cli.command {
        Command::Convert(a) => convert::run(&a),
        Command::Rasterize(a) => masks::rasterize(&a),
        Command::Boxes(a) => masks::boxes(&a),
        Command::Fuse(a) => fuse::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Synth(a) => synth::run(&a),
        Command::Overlay(a) => overlay::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 3 for configuration problems, 2 for everything wrong with the data.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<dentfuse_core::Error>() {
            return match e {
                dentfuse_core::Error::Config(_) | dentfuse_core::Error::Capacity(_) => 3,
                _ => 2,
            };
        }
    }
    2
}
