use std::collections::BTreeMap;

use crate::gmm::GaussianComponent;
use crate::ComponentId;

/// Per-component contraction applied to within-component distances.
///
/// More dispersed components (higher entropy) shrink more; the most
/// dispersed gets `alpha * (1 - beta)`.
pub fn shrink_factors(components: &[GaussianComponent], alpha: f64, beta: f64, epsilon: f64) -> BTreeMap<ComponentId, f64> {
    let entropy: Vec<f64> = components.iter().map(|c| c.entropy().max(epsilon)).collect();
    let top = entropy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    components
        .iter()
        .zip(&entropy)
        .map(|(c, h)| (c.id, alpha * (1.0 - beta * h / top)))
        .collect()
}

pub fn euclidean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance, scaled by the component's shrink factor when both
/// samples share a component.
pub fn constrained_distance(
    a: &[f64],
    b: &[f64],
    label_a: ComponentId,
    label_b: ComponentId,
    shrink: &BTreeMap<ComponentId, f64>,
) -> f64 {
    let d = euclidean_sq(a, b).sqrt();
    if label_a == label_b {
        d * shrink.get(&label_a).copied().unwrap_or(1.0)
    } else {
        d
    }
}

/// Gaussian conditional probabilities over `dist_sq` whose perplexity
/// matches `perplexity`, found by bisection on the precision.
pub fn calibrate_row(dist_sq: &[f64], perplexity: f64) -> Vec<f64> {
    let n = dist_sq.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![1.0];
    }
    let target = perplexity.max(1.0).min(n as f64).ln();
    let lo_d = dist_sq.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = dist_sq.iter().map(|d| d - lo_d).collect();
    let mut p = vec![0.0; n];
    let mut precision = 1.0;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let mut total = 0.0;
        for (pi, d) in p.iter_mut().zip(&shifted) {
            *pi = (-precision * d).exp();
            total += *pi;
        }
        let mut weighted = 0.0;
        for (pi, d) in p.iter_mut().zip(&shifted) {
            *pi /= total;
            weighted += *pi * d;
        }
        // entropy of the normalized row: ln(total) + precision * E[d]
        let entropy = total.ln() + precision * weighted;
        let gap = entropy - target;
        if gap.abs() < 1e-10 {
            break;
        }
        if gap > 0.0 {
            lo = precision;
            precision = if hi.is_finite() { 0.5 * (lo + hi) } else { precision * 2.0 };
        } else {
            hi = precision;
            precision = 0.5 * (lo + hi);
        }
    }
    p
}

/// Symmetric joint affinities `(p_{j|i} + p_{i|j}) / 2N` as a dense row-major matrix.
pub fn joint_affinities(dist_sq: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let perp = perplexity.min((n as f64 - 1.0) / 3.0).max(1.0);
    let mut cond = vec![0.0; n * n];
    let mut row = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|j| *j != i).map(|j| dist_sq[i * n + j]));
        let p = calibrate_row(&row, perp);
        let mut it = p.into_iter();
        for j in 0..n {
            if j != i {
                cond[i * n + j] = it.next().expect("row length");
            }
        }
    }
    let mut joint = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    joint
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use std::f64::consts::PI;

    fn comp(id: u32, var: f64) -> GaussianComponent {
        GaussianComponent::from_moments(ComponentId(id), vec![0.0], &[var], BTreeSet::new(), 0, 1e-12)
    }

    #[test]
    fn single_component_gets_lowest_factor() {
        let s = shrink_factors(&[comp(0, 1.0)], 0.8, 0.25, 1e-3);
        assert!((s[&ComponentId(0)] - 0.8 * 0.75).abs() < 1e-15);
    }

    #[test]
    fn unit_variance_entropy() {
        let h = comp(0, 1.0).entropy();
        assert!((h - 0.5 * (1.0 + (2.0 * PI).ln())).abs() < 1e-12);
        assert!((h - 1.41894).abs() < 1e-5);
    }

    #[test]
    fn zero_beta_means_no_dispersion_effect() {
        let s = shrink_factors(&[comp(0, 1.0), comp(1, 40.0), comp(2, 0.01)], 0.6, 0.0, 1e-3);
        assert!(s.values().all(|v| *v == 0.6));
    }

    #[test]
    fn shrink_within_bounds() {
        let cs: Vec<_> = (0..6).map(|i| comp(i, 0.001 * 10f64.powi(i as i32))).collect();
        let (a, b) = (0.7, 0.4);
        for v in shrink_factors(&cs, a, b, 1e-3).values() {
            assert!(*v >= a * (1.0 - b) - 1e-15 && *v <= a + 1e-15);
        }
    }

    #[test]
    fn constrained_distance_branches() {
        let s = BTreeMap::from([(ComponentId(0), 0.5)]);
        let (a, b) = ([0.0, 0.0], [2.0, 0.0]);
        assert_eq!(constrained_distance(&a, &b, ComponentId(0), ComponentId(0), &s), 1.0);
        assert_eq!(constrained_distance(&a, &b, ComponentId(0), ComponentId(1), &s), 2.0);
        assert_eq!(constrained_distance(&a, &a, ComponentId(0), ComponentId(0), &s), 0.0);
        assert_eq!(constrained_distance(&a, &a, ComponentId(0), ComponentId(1), &s), 0.0);
    }

    #[test]
    fn calibrated_row_hits_perplexity() {
        let d: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).powi(2)).collect();
        let p = calibrate_row(&d, 10.0);
        let h: f64 = -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        assert!((h.exp() - 10.0).abs() < 1e-6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
