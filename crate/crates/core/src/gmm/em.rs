//! Full-covariance EM with k-means++ seeding and BIC model selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tolerance: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 300,
            tolerance: 1e-6,
        }
    }
}

/// Parameters of one fitted mixture.
#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Argmax-responsibility component of every input point.
    pub hard_labels: Vec<usize>,
}

impl MixtureFit {
    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

/// Outcome of a BIC sweep over candidate component counts.
#[derive(Debug, Clone)]
pub struct BicSelection {
    pub best: MixtureFit,
    /// `(k, BIC)` for every k that produced a finite fit.
    pub scores: Vec<(usize, f64)>,
}

/// Number of free parameters of a full-covariance mixture.
pub fn parameter_count(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

pub fn bic(k: usize, d: usize, n: usize, log_likelihood: f64) -> f64 {
    parameter_count(k, d) as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

/// `1e-6 ×` the mean per-feature variance, with an absolute fallback for constant data.
pub fn regularization_floor<P: AsRef<[f64]>>(points: &[P]) -> f64 {
    if points.is_empty() {
        return 1e-6;
    }
    let d = points[0].as_ref().len();
    let n = points.len() as f64;
    let mut mean_var = 0.0;
    for f in 0..d {
        let mu = points.iter().map(|p| p.as_ref()[f]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p.as_ref()[f] - mu).powi(2)).sum::<f64>() / n;
        mean_var += var / d as f64;
    }
    if mean_var > 0.0 && mean_var.is_finite() {
        1e-6 * mean_var
    } else {
        1e-6
    }
}

/// Fits a mixture for every `k` in `k_min..=k_max` and keeps the lowest BIC.
///
/// `k_max` is clamped to the number of points.
pub fn select_by_bic<P: AsRef<[f64]>>(
    points: &[P],
    k_min: usize,
    k_max: usize,
    floor: f64,
    config: &EmConfig,
    seed: u64,
) -> Result<BicSelection> {
    let n = points.len();
    if n == 0 || k_min == 0 || k_min > k_max || n < k_min {
        return Err(CoreError::InvalidArgument(format!(
            "cannot fit k in {k_min}..={k_max} to {n} points"
        )));
    }
    let views: Vec<&[f64]> = points.iter().map(AsRef::as_ref).collect();
    let d = views[0].len();
    let mut best: Option<(f64, MixtureFit)> = None;
    let mut scores = Vec::new();
    for k in k_min..=k_max.min(n) {
        let Some(fit) = fit_mixture(&views, k, floor, config, seed ^ (k as u64) << 32) else {
            continue;
        };
        let score = bic(k, d, n, fit.log_likelihood);
        scores.push((k, score));
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    best.map(|(_, best)| BicSelection { best, scores })
        .ok_or(CoreError::EmFailed)
}

/// Best of `config.restarts` EM runs for a fixed `k`, or `None` if all diverged.
pub fn fit_mixture(
    points: &[&[f64]],
    k: usize,
    floor: f64,
    config: &EmConfig,
    seed: u64,
) -> Option<MixtureFit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<MixtureFit> = None;
    for _ in 0..config.restarts.max(1) {
        let init = kmeans_pp(points, k, &mut rng);
        if let Some(fit) = run_em(points, init, floor, config, &mut rng) {
            if best
                .as_ref()
                .is_none_or(|b| fit.log_likelihood > b.log_likelihood)
            {
                best = Some(fit);
            }
        }
        if k == 1 {
            // deterministic given the data
            break;
        }
    }
    best
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by a few Lloyd iterations; returns hard labels.
fn kmeans_pp(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    let d = points[0].len();
    let mut labels = vec![0usize; n];
    for _ in 0..10 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|a, b| sq_dist(p, &centers[*a]).total_cmp(&sq_dist(p, &centers[*b])))
                .unwrap_or(0);
            if best != labels[i] {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, l) in points.iter().zip(&labels) {
            counts[*l] += 1;
            for (s, v) in sums[*l].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<Vec<f64>>,
    chols: Vec<Vec<f64>>,
    log_norms: Vec<f64>,
}

fn global_covariance(points: &[&[f64]], floor: f64) -> Vec<f64> {
    let d = points[0].len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p.iter()) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for p in points {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n;
            }
        }
    }
    linalg::apply_eigen_floor(&mut cov, d, floor);
    cov
}

/// M-step from (soft or hard) responsibilities `resp[i * k + c]`.
fn m_step(
    points: &[&[f64]],
    resp: &[f64],
    k: usize,
    floor: f64,
    fallback_cov: &[f64],
    rng: &mut ChaCha8Rng,
) -> Option<Params> {
    let n = points.len();
    let d = points[0].len();
    let mut weights = vec![0.0; k];
    let mut means = vec![vec![0.0; d]; k];
    let mut covs = vec![vec![0.0; d * d]; k];
    for (i, p) in points.iter().enumerate() {
        for c in 0..k {
            let r = resp[i * k + c];
            weights[c] += r;
            for (m, v) in means[c].iter_mut().zip(p.iter()) {
                *m += r * v;
            }
        }
    }
    for c in 0..k {
        if weights[c] > 1e-10 {
            for m in means[c].iter_mut() {
                *m /= weights[c];
            }
        }
    }
    for (i, p) in points.iter().enumerate() {
        for c in 0..k {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            let mu = &means[c];
            let cov = &mut covs[c];
            for a in 0..d {
                let da = p[a] - mu[a];
                for b in a..d {
                    cov[a * d + b] += r * da * (p[b] - mu[b]);
                }
            }
        }
    }
    let mut chols = Vec::with_capacity(k);
    let mut log_norms = Vec::with_capacity(k);
    for c in 0..k {
        if weights[c] <= 1e-10 {
            // starved component: re-seed at a random point with the global shape
            means[c] = points[rng.random_range(0..n)].to_vec();
            covs[c] = fallback_cov.to_vec();
            weights[c] = 1.0;
        } else {
            let w = weights[c];
            let cov = &mut covs[c];
            for a in 0..d {
                for b in a..d {
                    let v = cov[a * d + b] / w;
                    cov[a * d + b] = v;
                    cov[b * d + a] = v;
                }
            }
            linalg::apply_eigen_floor(cov, d, floor);
        }
        let chol = linalg::cholesky(&covs[c], d)?;
        let log_det = linalg::log_det_from_cholesky(&chol, d);
        log_norms.push(-0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det));
        chols.push(chol);
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Some(Params {
        weights,
        means,
        covs,
        chols,
        log_norms,
    })
}

/// E-step: fills `resp` and returns the total log-likelihood.
fn e_step(points: &[&[f64]], params: &Params, resp: &mut [f64]) -> f64 {
    let k = params.weights.len();
    let d = points[0].len();
    let log_w: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();
    let mut diff = vec![0.0; d];
    let mut ll = 0.0;
    for (i, p) in points.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for c in 0..k {
            for a in 0..d {
                diff[a] = p[a] - params.means[c][a];
            }
            let lp = log_w[c] + params.log_norms[c]
                - 0.5 * linalg::mahalanobis_sq(&params.chols[c], d, &diff);
            row[c] = lp;
            max = max.max(lp);
        }
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
        ll += max + s.ln();
    }
    ll
}

fn run_em(
    points: &[&[f64]],
    init_labels: Vec<usize>,
    floor: f64,
    config: &EmConfig,
    rng: &mut ChaCha8Rng,
) -> Option<MixtureFit> {
    let n = points.len();
    let k = init_labels.iter().copied().max().unwrap_or(0) + 1;
    let fallback = global_covariance(points, floor);
    let mut resp = vec![0.0; n * k];
    for (i, l) in init_labels.iter().enumerate() {
        resp[i * k + l] = 1.0;
    }
    let mut params = m_step(points, &resp, k, floor, &fallback, rng)?;
    let mut prev = f64::NEG_INFINITY;
    let mut ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    for it in 0..config.max_iterations.max(1) {
        iterations = it + 1;
        ll = e_step(points, &params, &mut resp);
        if !ll.is_finite() {
            return None;
        }
        if prev.is_finite() && (ll - prev).abs() <= config.tolerance * prev.abs().max(1e-300) {
            break;
        }
        prev = ll;
        params = m_step(points, &resp, k, floor, &fallback, rng)?;
    }
    let hard_labels = (0..n)
        .map(|i| {
            let row = &resp[i * k..(i + 1) * k];
            (0..k).max_by(|a, b| row[*a].total_cmp(&row[*b])).unwrap_or(0)
        })
        .collect();
    Some(MixtureFit {
        weights: params.weights,
        means: params.means,
        covariances: params.covs,
        log_likelihood: ll,
        iterations,
        hard_labels,
    })
}
