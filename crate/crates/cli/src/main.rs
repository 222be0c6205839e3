use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use nbbox_cli::{
    format_eval_table, load_config, parse_grid, run_analyze, run_augment, run_eval, run_sweep, sweep_csv, write_output, AugmentOptions,
};
use nbbox_core::eval::ApMode;

#[derive(Parser)]
#[command(name = "nbbox", version, about = "Noise injection and evaluation for oriented bounding boxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SeedArg {
    /// Root seed for all random draws.
    #[arg(long, env = "NBBOX_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Add box noise to every annotation file in a directory.
    Augment {
        #[arg(long)]
        ann_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Noise configuration (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        /// Folded into each file's random stream, e.g. an epoch number.
        #[arg(long, default_value = "")]
        epoch_tag: String,
        /// Clip noised boxes to a W x H image.
        #[arg(long, num_args = 2, value_names = ["W", "H"])]
        clip: Option<Vec<f64>>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compute per-class AP and mAP of detections against ground truth.
    Eval {
        #[arg(long)]
        ann_dir: PathBuf,
        #[arg(long)]
        det_dir: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long, default_value_t = ApMode::ElevenPoint)]
        mode: ApMode,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Measure how far annotated quads are from their minimum rectangles.
    Analyze {
        #[arg(long)]
        ann_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-IoU of ground truth under each configuration of a grid.
    Sweep {
        #[arg(long)]
        ann_dir: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Augment { ann_dir, out_dir, config, seed, epoch_tag, clip, jobs } => {
            let opts = AugmentOptions {
                ann_dir,
                out_dir,
                config: load_config(config.as_deref())?,
                seed: seed.seed,
                epoch_tag,
                clip: clip.map(|v| (v[0], v[1])),
                jobs,
            };
            let summary = run_augment(&opts)?;
            println!("{summary}");
            Ok(summary.success())
        }
        Command::Eval { ann_dir, det_dir, iou, mode, json } => {
            let report = run_eval(&ann_dir, &det_dir, iou, mode)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", format_eval_table(&report));
            }
            Ok(true)
        }
        Command::Analyze { ann_dir, out } => {
            let stats = run_analyze(&ann_dir)?;
            write_output(&out, &serde_json::to_string_pretty(&stats)?)?;
            println!("{} records, mean_iou {:.6}", stats.per_record.len(), stats.mean_iou);
            Ok(true)
        }
        Command::Sweep { ann_dir, grid, seed, trials, out } => {
            let text = std::fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let grid = parse_grid(&text).with_context(|| format!("grid {}", grid.display()))?;
            let result = run_sweep(&ann_dir, &grid, seed.seed, trials)?;
            write_output(&out, &sweep_csv(&result)?)?;
            println!("{} grid points, {} trials", result.grid.len(), result.trials);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
