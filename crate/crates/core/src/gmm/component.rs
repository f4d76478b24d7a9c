use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{ComponentId, SampleId, Tick};

/// One Gaussian component with exact streaming moments.
///
/// `covariance` is the regularised matrix used for densities; the raw
/// second-moment accumulator behind it is kept so single-sample updates
/// reproduce batch moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "ComponentRepr", into = "ComponentRepr")]
pub struct GaussianComponent {
    pub id: ComponentId,
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    pub member_count: usize,
    pub member_ids: BTreeSet<SampleId>,
    pub created_tick: Tick,
    scatter: Vec<f64>,
    factor: Factor,
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Vec<f64>,
    log_norm: f64,
}

impl Factor {
    fn of(cov: &[f64], d: usize) -> Factor {
        let chol = linalg::cholesky(cov, d).unwrap_or_else(|| {
            // only reachable for a matrix that escaped the eigenvalue floor
            let mut fixed = cov.to_vec();
            linalg::apply_eigen_floor(&mut fixed, d, 1e-12);
            linalg::cholesky(&fixed, d).expect("floored covariance factorises")
        });
        let log_det = linalg::log_det_from_cholesky(&chol, d);
        Factor {
            chol,
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    id: ComponentId,
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
    scatter: Vec<f64>,
    member_count: usize,
    member_ids: BTreeSet<SampleId>,
    created_tick: Tick,
}

impl From<ComponentRepr> for GaussianComponent {
    fn from(r: ComponentRepr) -> Self {
        let factor = Factor::of(&r.covariance, r.mean.len());
        GaussianComponent {
            id: r.id,
            weight: r.weight,
            mean: r.mean,
            covariance: r.covariance,
            member_count: r.member_count,
            member_ids: r.member_ids,
            created_tick: r.created_tick,
            scatter: r.scatter,
            factor,
        }
    }
}

impl From<GaussianComponent> for ComponentRepr {
    fn from(c: GaussianComponent) -> Self {
        ComponentRepr {
            id: c.id,
            weight: c.weight,
            mean: c.mean,
            covariance: c.covariance,
            scatter: c.scatter,
            member_count: c.member_count,
            member_ids: c.member_ids,
            created_tick: c.created_tick,
        }
    }
}

impl GaussianComponent {
    /// Builds a component from a mean and covariance that stand for `members`.
    pub fn from_moments(
        id: ComponentId,
        mean: Vec<f64>,
        covariance: &[f64],
        members: BTreeSet<SampleId>,
        created_tick: Tick,
        floor: f64,
    ) -> Self {
        let n = members.len() as f64;
        let scatter = covariance.iter().map(|v| v * n).collect();
        let mut c = GaussianComponent {
            id,
            weight: 0.0,
            covariance: covariance.to_vec(),
            mean,
            member_count: members.len(),
            member_ids: members,
            created_tick,
            scatter,
            factor: Factor {
                chol: Vec::new(),
                log_norm: 0.0,
            },
        };
        c.refresh(floor);
        c
    }

    /// Batch mean and (population) covariance of the given samples.
    pub fn from_points<P: AsRef<[f64]>>(
        id: ComponentId,
        points: &[(SampleId, P)],
        created_tick: Tick,
        floor: f64,
    ) -> Self {
        let d = points[0].1.as_ref().len();
        let n = points.len() as f64;
        let mut mean = vec![0.0; d];
        for (_, p) in points {
            for (m, v) in mean.iter_mut().zip(p.as_ref()) {
                *m += v / n;
            }
        }
        let mut cov = vec![0.0; d * d];
        for (_, p) in points {
            let p = p.as_ref();
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n;
                }
            }
        }
        let members = points.iter().map(|(id, _)| *id).collect();
        Self::from_moments(id, mean, &cov, members, created_tick, floor)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Unregularised covariance of the members, `scatter / n`.
    pub fn raw_covariance(&self) -> Vec<f64> {
        let n = self.member_count.max(1) as f64;
        self.scatter.iter().map(|v| v / n).collect()
    }

    fn refresh(&mut self, floor: f64) {
        let d = self.dim();
        if self.member_count > 0 {
            self.covariance = self.raw_covariance();
        }
        linalg::apply_eigen_floor(&mut self.covariance, d, floor);
        self.factor = Factor::of(&self.covariance, d);
    }

    /// Adds one member with the exact streaming mean/co-moment update.
    pub fn absorb(&mut self, id: SampleId, x: &[f64], floor: f64) {
        let d = self.dim();
        let n = (self.member_count + 1) as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for (m, dv) in self.mean.iter_mut().zip(&delta) {
            *m += dv / n;
        }
        for (i, (xi, mi)) in x.iter().zip(&self.mean).enumerate() {
            let after_i = xi - mi;
            for (j, dj) in delta.iter().enumerate() {
                self.scatter[j * d + i] += dj * after_i;
            }
        }
        self.member_count += 1;
        self.member_ids.insert(id);
        self.refresh(floor);
    }

    /// Pools several components' members and moments into one.
    pub(crate) fn pooled(id: ComponentId, parts: &[&GaussianComponent], created_tick: Tick, floor: f64) -> Self {
        let d = parts[0].dim();
        let total: usize = parts.iter().map(|c| c.member_count).sum();
        let mut mean = vec![0.0; d];
        if total > 0 {
            for c in parts {
                let w = c.member_count as f64 / total as f64;
                for (m, v) in mean.iter_mut().zip(&c.mean) {
                    *m += w * v;
                }
            }
        } else {
            for c in parts {
                for (m, v) in mean.iter_mut().zip(&c.mean) {
                    *m += v / parts.len() as f64;
                }
            }
        }
        let mut scatter = vec![0.0; d * d];
        for c in parts {
            let n = c.member_count as f64;
            for i in 0..d {
                for j in 0..d {
                    scatter[i * d + j] +=
                        c.scatter[i * d + j] + n * (c.mean[i] - mean[i]) * (c.mean[j] - mean[j]);
                }
            }
        }
        let mut member_ids = BTreeSet::new();
        for c in parts {
            member_ids.extend(c.member_ids.iter().copied());
        }
        let covariance = if total > 0 {
            scatter.iter().map(|v| v / total as f64).collect()
        } else {
            parts[0].covariance.clone()
        };
        let mut merged = GaussianComponent {
            id,
            weight: parts.iter().map(|c| c.weight).sum(),
            mean,
            covariance,
            member_count: total,
            member_ids,
            created_tick,
            scatter,
            factor: Factor {
                chol: Vec::new(),
                log_norm: 0.0,
            },
        };
        merged.refresh(floor);
        merged
    }

    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut diff = [0.0f64; 16];
        if d <= 16 {
            for i in 0..d {
                diff[i] = x[i] - self.mean[i];
            }
            linalg::mahalanobis_sq(&self.factor.chol, d, &diff[..d])
        } else {
            let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
            linalg::mahalanobis_sq(&self.factor.chol, d, &diff)
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.factor.log_norm - 0.5 * self.mahalanobis_sq(x)
    }

    /// Differential entropy `½ ln|Σ| + d/2 (1 + ln 2π)`.
    pub fn entropy(&self) -> f64 {
        // log_norm = -½ (d ln 2π + ln|Σ|)
        -self.factor.log_norm + 0.5 * self.dim() as f64
    }
}
