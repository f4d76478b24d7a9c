//! Synthetic drift streams and detection scoring.
//!
//! [`generate`] draws 2-D Gaussian streams whose mean or spread changes at
//! evenly spaced ticks, [`detect`] runs the energy-distance detector over
//! one, and [`categorize`] scores its alerts as detected, late, missed or
//! false.

pub mod detector;
pub mod eval;
pub mod generate;

use serde::{Deserialize, Serialize};

pub use detector::{detect, DetectorConfig};
pub use eval::{categorize, Category, DriftRecord, EvalReport};
pub use generate::{generate, DriftKind, SyntheticSpec, SyntheticStream};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Spec(String),
    #[error(transparent)]
    Core(#[from] driftlab_core::CoreError),
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Largest report delay, in ticks, that still counts as detected.
    pub detection_window: i64,
}

impl EvalConfig {
    pub fn for_detector(detector: &DetectorConfig) -> Self {
        Self {
            detection_window: detector.window as i64,
        }
    }
}

/// Scores one run: generate, detect, categorize.
pub fn run_once(spec: &SyntheticSpec, detector: &DetectorConfig, eval: &EvalConfig) -> Result<EvalReport> {
    if eval.detection_window <= 0 {
        return Err(BenchError::Spec("detection_window must be positive".into()));
    }
    let stream = generate(spec)?;
    let alerts = detect(&stream, detector)?;
    Ok(categorize(&alerts, &stream.drift_ticks, eval.detection_window))
}

/// Averages `runs` independent runs; run `r` offsets both seeds by `r`.
/// Runs execute in parallel and the result does not depend on scheduling.
pub fn run_benchmark(
    spec: &SyntheticSpec,
    detector: &DetectorConfig,
    eval: &EvalConfig,
    runs: usize,
) -> Result<EvalReport> {
    if runs == 0 {
        return Err(BenchError::Spec("runs must be >= 1".into()));
    }
    spec.validate()?;
    detector.validate()?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(runs);
    let mut results: Vec<Option<Result<EvalReport>>> = (0..runs).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (t, chunk) in results.chunks_mut(runs.div_ceil(threads)).enumerate() {
            let base = t * runs.div_ceil(threads);
            scope.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    let r = (base + j) as u64;
                    let spec = SyntheticSpec {
                        seed: spec.seed.wrapping_add(r),
                        ..spec.clone()
                    };
                    let detector = DetectorConfig {
                        seed: detector.seed.wrapping_add(r),
                        ..detector.clone()
                    };
                    *slot = Some(run_once(&spec, &detector, eval));
                }
            });
        }
    });
    let reports = results
        .into_iter()
        .map(|r| r.expect("every run executed"))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::average(&reports))
}
