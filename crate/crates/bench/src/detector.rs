use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use driftlab_core::energy::ClusterDriftTracker;
use driftlab_core::gmm::{self, BufferThreshold, GmmConfig};
use driftlab_core::{SampleId, Tick};

use crate::generate::SyntheticStream;
use crate::{BenchError, Result};

/// Streaming detector: a mixture fitted on a reference block, a sliding
/// window compared against it, and an alert on each upward threshold
/// crossing. After an alert the following block becomes the new reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Window length in samples (one sample per tick).
    pub window: usize,
    pub reference_size: usize,
    /// Samples the window must hold before alerts are considered.
    pub min_fill: usize,
    pub alert_threshold: f64,
    pub k_range: (usize, usize),
    pub assign_confidence: f64,
    pub buffer_threshold: BufferThreshold,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: 500,
            reference_size: 500,
            min_fill: 100,
            alert_threshold: 0.15,
            k_range: (1, 2),
            assign_confidence: 0.95,
            buffer_threshold: BufferThreshold::Auto,
            seed: 17,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.min_fill == 0 || self.min_fill > self.window {
            return Err(BenchError::Spec("need 1 <= min_fill <= window".into()));
        }
        if self.reference_size < self.k_range.1 {
            return Err(BenchError::Spec("reference block smaller than k_max".into()));
        }
        Ok(())
    }

    fn gmm(&self, seed: u64) -> GmmConfig {
        GmmConfig {
            k_range: self.k_range,
            assign_confidence: self.assign_confidence,
            buffer_threshold: self.buffer_threshold,
            seed,
            ..GmmConfig::default()
        }
    }
}

/// Runs the detector over a stream and returns the alert ticks.
pub fn detect(stream: &SyntheticStream, config: &DetectorConfig) -> Result<Vec<Tick>> {
    config.validate()?;
    let n = stream.len();
    let mut alerts = Vec::new();
    let mut pos = 0;
    while pos + config.reference_size <= n {
        let reference: Vec<(SampleId, &[f64])> = (pos..pos + config.reference_size)
            .map(|i| (SampleId(i as u64), stream.point(i)))
            .collect();
        pos += config.reference_size;
        let gmm_config = config.gmm(config.seed ^ pos as u64);
        let mut gmm = gmm::offline_fit(&reference, &gmm_config, pos as Tick)?;
        let mut tracker = ClusterDriftTracker::new(
            stream.dimension,
            reference.iter().map(|(id, x)| {
                let c = gmm.assignment(*id).expect("fitted sample").component;
                (c, *x)
            }),
        );
        let mut window: VecDeque<SampleId> = VecDeque::with_capacity(config.window + 1);
        let mut previous = f64::NEG_INFINITY;
        while pos < n {
            let id = SampleId(pos as u64);
            let x = stream.point(pos);
            let tick = pos as Tick + 1;
            pos += 1;
            let outcome = gmm.online_assign(id, x, tick)?;
            if let Some(created) = &outcome.created {
                for (s, c) in &created.reassigned {
                    tracker.relabel(*s, *c);
                }
            }
            tracker.insert(id, outcome.component, x);
            window.push_back(id);
            if window.len() > config.window {
                let old = window.pop_front().expect("non-empty");
                tracker.remove(old);
                gmm.expire_pending(old);
            }
            if window.len() < config.min_fill {
                continue;
            }
            let degree = tracker.overall().unwrap_or(0.0);
            if degree >= config.alert_threshold && previous < config.alert_threshold {
                alerts.push(tick);
                break;
            }
            previous = degree;
        }
    }
    Ok(alerts)
}
