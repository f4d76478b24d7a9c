use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use driftlab_core::{Dataset, Row, Tick};

use crate::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftKind {
    /// The mean jumps by `magnitude` standard deviations in a random direction.
    MeanShift,
    /// The standard deviation alternates between the base value and
    /// `magnitude` times it.
    VarianceShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub total_points: usize,
    pub n_drifts: usize,
    pub drift_kind: DriftKind,
    pub dimension: usize,
    pub base_mean: Vec<f64>,
    /// Isotropic standard deviation of the base distribution.
    pub base_std: f64,
    pub magnitude: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::mean_shift(495_000, 1)
    }
}

impl SyntheticSpec {
    pub fn mean_shift(total_points: usize, seed: u64) -> Self {
        Self {
            total_points,
            n_drifts: 99,
            drift_kind: DriftKind::MeanShift,
            dimension: 2,
            base_mean: vec![0.0, 0.0],
            base_std: 1.0,
            magnitude: 3.0,
            seed,
        }
    }

    pub fn variance_shift(total_points: usize, seed: u64) -> Self {
        Self {
            drift_kind: DriftKind::VarianceShift,
            magnitude: 4.0,
            ..Self::mean_shift(total_points, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.base_mean.len() != self.dimension {
            return Err(BenchError::Spec("base_mean must have `dimension` entries".into()));
        }
        if self.base_std.is_nan() || self.base_std <= 0.0 || self.magnitude.is_nan() || self.magnitude <= 0.0 {
            return Err(BenchError::Spec("base_std and magnitude must be positive".into()));
        }
        if self.total_points < self.n_drifts + 1 {
            return Err(BenchError::Spec("every segment needs at least one point".into()));
        }
        Ok(())
    }

    /// Segment length; the drifts split the stream into `n_drifts + 1` equal parts.
    pub fn segment_length(&self) -> usize {
        self.total_points / (self.n_drifts + 1)
    }

    /// Ticks at which the generating distribution changes. The sample at
    /// tick `t` is the first one drawn from the new distribution.
    pub fn drift_ticks(&self) -> Vec<Tick> {
        let seg = self.segment_length();
        (1..=self.n_drifts).map(|i| (i * seg + 1) as Tick).collect()
    }
}

/// A generated stream: sample `i` has tick `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub dimension: usize,
    /// Row-major sample values.
    pub values: Vec<f64>,
    pub drift_ticks: Vec<Tick>,
}

impl SyntheticStream {
    pub fn len(&self) -> usize {
        self.values.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn to_dataset(&self) -> driftlab_core::Result<Dataset> {
        let names = (1..=self.dimension).map(|i| format!("x{i}")).collect();
        let mut ds = Dataset::new(names);
        for i in 0..self.len() {
            ds.push(Row {
                id: None,
                tick: i as Tick + 1,
                values: self.point(i).to_vec(),
                label: None,
            })?;
        }
        Ok(ds)
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dimension;
    let seg = spec.segment_length();
    let mut mean = spec.base_mean.clone();
    let mut std = spec.base_std;
    let mut values = Vec::with_capacity(spec.total_points * d);
    for i in 0..spec.total_points {
        if i > 0 && i % seg == 0 && i / seg <= spec.n_drifts {
            match spec.drift_kind {
                DriftKind::MeanShift => {
                    let dir = random_direction(&mut rng, d);
                    for (m, u) in mean.iter_mut().zip(dir) {
                        *m += spec.magnitude * spec.base_std * u;
                    }
                }
                DriftKind::VarianceShift => {
                    std = if (i / seg) % 2 == 1 {
                        spec.base_std * spec.magnitude
                    } else {
                        spec.base_std
                    };
                }
            }
        }
        for m in &mean {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(m + std * z);
        }
    }
    Ok(SyntheticStream {
        dimension: d,
        values,
        drift_ticks: spec.drift_ticks(),
    })
}

fn random_direction(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
