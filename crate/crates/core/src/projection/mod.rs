//! Stable 2-D projection of a growing stream.
//!
//! A t-SNE variant whose high-dimensional affinities use component-aware
//! shrunk distances, with two optional stabilizing terms once a previous
//! layout exists: original samples keep their similarity profile to the
//! components' previous 2-D centers, and a spatially even subset of original
//! samples (the anchors) stays near its previous positions.

pub mod affinity;
pub mod anchors;
pub mod metrics;
mod objective;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use affinity::{calibrate_row, constrained_distance, joint_affinities, shrink_factors};
pub use objective::Objective;

use crate::gmm::GaussianComponent;
use crate::{ComponentId, CoreError, Result, SampleId, Tick};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    /// Largest shrink factor.
    pub alpha: f64,
    /// How strongly dispersion lowers the shrink factor.
    pub beta: f64,
    /// Entropy floor.
    pub epsilon: f64,
    /// Weight of the pairwise term.
    pub lambda: f64,
    /// Weight of the center-shape term; the anchor term gets `1 - lambda - phi`.
    pub phi: f64,
    pub anchor_cap: usize,
    pub perplexity: f64,
    pub max_iterations: usize,
    /// Initial step; `None` picks `max(n / (4 * exaggeration), 50)`.
    pub learning_rate: Option<f64>,
    pub momentum: f64,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// Most samples a projection covers; older stream samples are dropped first.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            epsilon: 1e-3,
            lambda: 0.6,
            phi: 0.2,
            anchor_cap: 500,
            perplexity: 30.0,
            max_iterations: 500,
            learning_rate: None,
            momentum: 0.8,
            exaggeration: 4.0,
            exaggeration_iterations: 50,
            max_points: 1500,
            seed: 7,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidArgument(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if !(self.lambda >= 0.0 && self.phi >= 0.0 && self.lambda + self.phi <= 1.0 + 1e-12) {
            return bad("lambda and phi must be non-negative with lambda + phi <= 1");
        }
        if self.perplexity.is_nan() || self.perplexity < 1.0 {
            return bad("perplexity must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) || self.exaggeration.is_nan() || self.exaggeration < 1.0 {
            return bad("momentum must lie in [0, 1) and exaggeration be >= 1");
        }
        if self.learning_rate.is_some_and(|v| v.is_nan() || v <= 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.max_points < 2 {
            return bad("max_points must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterConstraint {
    pub component: ComponentId,
    pub high: Vec<f64>,
    /// The component's 2-D center in the previous layout.
    pub low: [f64; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    /// Index into the problem's points.
    pub index: usize,
    pub sample: SampleId,
    pub previous: [f64; 2],
}

/// Everything one solve needs. Original samples (those in the previous
/// layout) come first, followed by new samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionProblem {
    pub tick: Tick,
    pub ids: Vec<SampleId>,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<ComponentId>,
    pub n_original: usize,
    pub shrink: BTreeMap<ComponentId, f64>,
    pub centers: Vec<CenterConstraint>,
    pub anchors: Vec<Anchor>,
    pub previous_coords: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSolution {
    pub tick: Tick,
    pub ids: Vec<SampleId>,
    pub coords: Vec<[f64; 2]>,
    pub components: Vec<ComponentId>,
    pub objective_trace: Vec<f64>,
    pub anchors: Vec<SampleId>,
    /// Iteration at which exaggeration stopped; the trace is monotone from here.
    pub exaggeration_end: usize,
}

impl ProjectionSolution {
    pub fn coords_by_id(&self) -> BTreeMap<SampleId, [f64; 2]> {
        self.ids.iter().copied().zip(self.coords.iter().copied()).collect()
    }
}

impl ProjectionProblem {
    /// Orders samples into originals and new ones, derives shrink factors,
    /// center constraints and anchors.
    ///
    /// `keep_anchors` is reused when every id in it is still an original
    /// sample; otherwise anchors are drawn afresh.
    pub fn build(
        tick: Tick,
        samples: &[(SampleId, &[f64], ComponentId)],
        components: &[GaussianComponent],
        previous: Option<&ProjectionSolution>,
        keep_anchors: Option<&[SampleId]>,
        config: &ProjectionConfig,
    ) -> Result<ProjectionProblem> {
        config.validate()?;
        if samples.len() < 2 {
            return Err(CoreError::InvalidArgument("a projection needs at least two samples".into()));
        }
        let prev = previous.map(ProjectionSolution::coords_by_id).unwrap_or_default();
        let (orig, new): (Vec<_>, Vec<_>) = samples.iter().partition(|s| prev.contains_key(&s.0));
        let n_original = orig.len();
        let ordered: Vec<&(SampleId, &[f64], ComponentId)> = orig.into_iter().chain(new).collect();
        let ids: Vec<SampleId> = ordered.iter().map(|s| s.0).collect();
        let points: Vec<Vec<f64>> = ordered.iter().map(|s| s.1.to_vec()).collect();
        let labels: Vec<ComponentId> = ordered.iter().map(|s| s.2).collect();
        let shrink = shrink_factors(components, config.alpha, config.beta, config.epsilon);

        let previous_coords = (n_original > 0).then(|| ids[..n_original].iter().map(|id| prev[id]).collect::<Vec<_>>());
        let mut centers = Vec::new();
        let mut anchors = Vec::new();
        if let Some(pc) = &previous_coords {
            for c in components {
                let members: Vec<[f64; 2]> = (0..n_original).filter(|i| labels[*i] == c.id).map(|i| pc[i]).collect();
                if members.is_empty() {
                    continue;
                }
                let m = members.len() as f64;
                let low = [
                    members.iter().map(|p| p[0]).sum::<f64>() / m,
                    members.iter().map(|p| p[1]).sum::<f64>() / m,
                ];
                centers.push(CenterConstraint {
                    component: c.id,
                    high: c.mean.clone(),
                    low,
                    weight: (c.member_count as f64).sqrt(),
                });
            }
            let index: BTreeMap<SampleId, usize> = ids[..n_original].iter().enumerate().map(|(i, id)| (*id, i)).collect();
            let reused: Option<Vec<usize>> = keep_anchors
                .filter(|k| !k.is_empty())
                .and_then(|k| k.iter().map(|id| index.get(id).copied()).collect());
            let picks = match reused {
                Some(p) => p,
                None => {
                    let views: Vec<&[f64]> = points[..n_original].iter().map(|p| p.as_slice()).collect();
                    anchors::blue_noise_sample(&views, &labels[..n_original], config.anchor_cap)
                }
            };
            anchors = picks
                .into_iter()
                .map(|i| Anchor {
                    index: i,
                    sample: ids[i],
                    previous: pc[i],
                })
                .collect();
        }
        Ok(ProjectionProblem {
            tick,
            ids,
            points,
            labels,
            n_original,
            shrink,
            centers,
            anchors,
            previous_coords,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn has_history(&self) -> bool {
        self.n_original > 0 && self.previous_coords.is_some()
    }

    /// Term weights; without history only the pairwise term is used.
    pub fn weights(&self, config: &ProjectionConfig) -> [f64; 3] {
        if self.has_history() {
            [config.lambda, config.phi, (1.0 - config.lambda - config.phi).max(0.0)]
        } else {
            [1.0, 0.0, 0.0]
        }
    }

    fn shrunk_sq(&self, a: &[f64], b: &[f64], la: ComponentId, lb: ComponentId) -> f64 {
        let d = constrained_distance(a, b, la, lb, &self.shrink);
        d * d
    }

    /// Builds the objective over this problem's affinities.
    pub fn objective(&self, config: &ProjectionConfig) -> Objective {
        let n = self.len();
        let mut d2 = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.shrunk_sq(&self.points[i], &self.points[j], self.labels[i], self.labels[j]);
                d2[i * n + j] = v;
                d2[j * n + i] = v;
            }
        }
        let p = joint_affinities(&d2, n, config.perplexity);

        let weights = self.weights(config);
        let k = self.centers.len();
        let mut pc = Vec::new();
        let mut centers = Vec::new();
        let n_orig = if self.has_history() { self.n_original } else { 0 };
        if n_orig > 0 && k > 0 {
            let perp = config.perplexity.min(k as f64 / 2.0).max(1.0);
            pc.reserve(n_orig * k);
            for i in 0..n_orig {
                let row: Vec<f64> = self
                    .centers
                    .iter()
                    .map(|c| self.shrunk_sq(&self.points[i], &c.high, self.labels[i], c.component))
                    .collect();
                let cal = calibrate_row(&row, perp);
                pc.extend(cal.iter().zip(&self.centers).map(|(v, c)| v * c.weight));
            }
            let total: f64 = pc.iter().sum();
            if total > 0.0 {
                pc.iter_mut().for_each(|v| *v /= total);
            }
            centers = self.centers.iter().map(|c| c.low).collect();
        }
        let anchors = if n_orig > 0 {
            self.anchors.iter().map(|a| (a.index, a.previous)).collect()
        } else {
            Vec::new()
        };
        Objective::new(n, n_orig, p, centers, pc, anchors, weights)
    }

    /// A seeded random linear map of the centered features to 2-D, scaled to
    /// unit spread. Identical samples map to identical points.
    fn feature_projection(&self, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
        let n = self.len();
        let d = self.points[0].len();
        let g = Normal::new(0.0, 1.0).expect("valid normal");
        let basis: Vec<[f64; 2]> = (0..d).map(|_| [g.sample(rng), g.sample(rng)]).collect();
        let mut mean = vec![0.0; d];
        for p in &self.points {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v / n as f64;
            }
        }
        let mut out: Vec<[f64; 2]> = self
            .points
            .iter()
            .map(|p| {
                let mut y = [0.0; 2];
                for (a, (v, m)) in p.iter().zip(&mean).enumerate() {
                    y[0] += (v - m) * basis[a][0];
                    y[1] += (v - m) * basis[a][1];
                }
                y
            })
            .collect();
        let spread = (out.iter().map(|y| y[0] * y[0] + y[1] * y[1]).sum::<f64>() / (2.0 * n as f64)).sqrt();
        if spread > 0.0 {
            out.iter_mut().for_each(|y| {
                y[0] /= spread;
                y[1] /= spread;
            });
        } else {
            // every sample identical: fall back to independent draws
            out.iter_mut().for_each(|y| *y = [g.sample(rng), g.sample(rng)]);
        }
        out
    }

    fn initial_coords(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.len();
        let unit = self.feature_projection(rng);
        let mut y = vec![0.0; 2 * n];
        let Some(prev) = self.previous_coords.as_ref().filter(|_| self.has_history()) else {
            for (i, u) in unit.iter().enumerate() {
                y[2 * i] = 1e-4 * u[0];
                y[2 * i + 1] = 1e-4 * u[1];
            }
            return y;
        };
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for (i, p) in prev.iter().enumerate() {
            y[2 * i] = p[0];
            y[2 * i + 1] = p[1];
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let jitter = 1e-3 * ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt().max(1.0);
        let centers: BTreeMap<ComponentId, [f64; 2]> = self.centers.iter().map(|c| (c.component, c.low)).collect();
        for i in self.n_original..n {
            let base = centers.get(&self.labels[i]).copied().unwrap_or_else(|| {
                // a component with no previous position: start next to the
                // closest original sample in feature space
                let nearest = (0..self.n_original)
                    .min_by(|a, b| {
                        affinity::euclidean_sq(&self.points[i], &self.points[*a])
                            .total_cmp(&affinity::euclidean_sq(&self.points[i], &self.points[*b]))
                    })
                    .expect("history has originals");
                prev[nearest]
            });
            y[2 * i] = base[0] + jitter * unit[i][0];
            y[2 * i + 1] = base[1] + jitter * unit[i][1];
        }
        y
    }
}

const MAX_HALVINGS: usize = 20;

/// Minimizes the combined objective by momentum gradient descent.
///
/// A cold start (no previous layout) runs an exaggerated phase first. After
/// that, a step is only accepted if it does not increase the objective;
/// otherwise the step is halved and momentum dropped, and the solve ends
/// once 20 consecutive halvings fail.
pub fn solve(problem: &ProjectionProblem, config: &ProjectionConfig) -> Result<ProjectionSolution> {
    config.validate()?;
    let n = problem.len();
    if n < 2 {
        return Err(CoreError::InvalidArgument("a projection needs at least two samples".into()));
    }
    let objective = problem.objective(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ problem.tick as u64);
    let mut y = problem.initial_coords(&mut rng);

    let cold = !problem.has_history();
    let exaggeration_end = if cold { config.exaggeration_iterations.min(config.max_iterations) } else { 0 };
    let lr0 = config
        .learning_rate
        .unwrap_or_else(|| (n as f64 / (4.0 * config.exaggeration)).max(50.0));
    let mut lr = lr0;
    let mut velocity = vec![0.0; 2 * n];
    let mut trace = Vec::with_capacity(config.max_iterations);

    let exaggeration = |iter: usize| if iter < exaggeration_end { config.exaggeration } else { 1.0 };
    let (mut f, mut g) = objective.value_and_gradient(&y, exaggeration(0));
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Diverged("non-finite objective at the initial layout".into()));
    }
    let mut candidate = vec![0.0; 2 * n];
    let mut step = vec![0.0; 2 * n];
    'outer: for iter in 0..config.max_iterations {
        if iter == exaggeration_end && exaggeration_end > 0 {
            (f, g) = objective.value_and_gradient(&y, 1.0);
        }
        let strict = iter >= exaggeration_end;
        let mut halvings = 0;
        loop {
            for i in 0..2 * n {
                step[i] = config.momentum * velocity[i] - lr * g[i];
                candidate[i] = y[i] + step[i];
            }
            let (f_new, g_new) = objective.value_and_gradient(&candidate, exaggeration(iter + 1));
            let finite = f_new.is_finite() && g_new.iter().all(|v| v.is_finite());
            if finite && (!strict || f_new <= f) {
                std::mem::swap(&mut y, &mut candidate);
                std::mem::swap(&mut velocity, &mut step);
                f = f_new;
                g = g_new;
                if strict {
                    lr = (lr * 1.1).min(lr0);
                }
                break;
            }
            halvings += 1;
            lr *= 0.5;
            velocity.iter_mut().for_each(|v| *v = 0.0);
            if halvings >= MAX_HALVINGS {
                if !finite && !strict {
                    return Err(CoreError::Diverged(format!(
                        "gradient stayed non-finite after {MAX_HALVINGS} step halvings"
                    )));
                }
                break 'outer;
            }
        }
        // the recorded value is the plain objective; during exaggeration the
        // gradient used for the step differs from its derivative
        trace.push(f);
        if g.iter().map(|v| v * v).sum::<f64>() < 1e-18 {
            break;
        }
    }

    Ok(ProjectionSolution {
        tick: problem.tick,
        ids: problem.ids.clone(),
        coords: y.chunks(2).map(|c| [c[0], c[1]]).collect(),
        components: problem.labels.clone(),
        objective_trace: trace,
        anchors: problem.anchors.iter().map(|a| a.sample).collect(),
        exaggeration_end,
    })
}

/// Ids of anchors from a previous solution when the component set is unchanged.
pub fn reusable_anchors(previous: &ProjectionSolution, current_components: &BTreeSet<ComponentId>) -> Option<Vec<SampleId>> {
    let before: BTreeSet<ComponentId> = previous.components.iter().copied().collect();
    (before == *current_components && !previous.anchors.is_empty()).then(|| previous.anchors.clone())
}
