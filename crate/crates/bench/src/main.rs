use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use driftlab_bench::{generate, run_benchmark, DetectorConfig, EvalConfig, SyntheticSpec};

#[derive(Parser)]
#[command(name = "bench", about = "Synthetic drift streams and detector scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream as CSV.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth drift ticks as a JSON array.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the detector on seeded streams and write the averaged scores.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        detector: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Detection window for scoring; defaults to the detector window.
        #[arg(long)]
        detection_window: Option<i64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { spec, out, truth } => {
            let spec: SyntheticSpec = read_json(&spec)?;
            let stream = generate(&spec)?;
            let (csv, _) = stream.to_dataset()?.to_csv();
            fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = truth {
                fs::write(&path, serde_json::to_string(&stream.drift_ticks)?)?;
            }
            eprintln!("{} points, {} drifts -> {}", stream.len(), stream.drift_ticks.len(), out.display());
        }
        Command::Run {
            spec,
            detector,
            runs,
            detection_window,
            out,
        } => {
            let spec: SyntheticSpec = read_json(&spec)?;
            let detector: DetectorConfig = match detector {
                Some(p) => read_json(&p)?,
                None => DetectorConfig::default(),
            };
            let mut eval = EvalConfig::for_detector(&detector);
            if let Some(w) = detection_window {
                eval.detection_window = w;
            }
            let report = run_benchmark(&spec, &detector, &eval, runs)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}
