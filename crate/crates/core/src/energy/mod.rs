//! Energy distance between sample sets and the cluster-weighted drift degree.
//!
//! The normalised energy distance of two samples `X`, `Y` is
//! `(2A - B - C) / 2A`, where `A` is the mean cross distance and `B`, `C` the
//! mean within-sample distances over all ordered pairs (self pairs included).
//! The drift degree of a window weights the per-cluster distance to the
//! training samples of the same cluster by the cluster's share of the window.

mod tracker;

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tracker::ClusterDriftTracker;

use crate::{ComponentId, CoreError, Result, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyResult {
    pub distance: f64,
    pub between_mean: f64,
    pub within_x_mean: f64,
    pub within_y_mean: f64,
}

impl EnergyResult {
    fn from_means(a: f64, b: f64, c: f64) -> Self {
        Self {
            distance: normalized_distance(a, b, c),
            between_mean: a,
            within_x_mean: b,
            within_y_mean: c,
        }
    }
}

/// `(2A - B - C) / 2A`, clamped to `[0, 1]`; zero when `A` vanishes.
pub(crate) fn normalized_distance(a: f64, b: f64, c: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    ((2.0 * a - (b + c)) / (2.0 * a)).clamp(0.0, 1.0)
}

#[inline]
pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Sum of distances over all `x × y` pairs.
pub(crate) fn cross_sum(x: &[&[f64]], y: &[&[f64]]) -> f64 {
    x.iter()
        .map(|xi| y.iter().map(|yj| l2(xi, yj)).sum::<f64>())
        .sum()
}

/// Sum of distances over all ordered pairs of `x`, computed on the upper triangle.
pub(crate) fn within_sum(x: &[&[f64]]) -> f64 {
    let mut total = 0.0;
    for (i, xi) in x.iter().enumerate() {
        total += x[i + 1..].iter().map(|xj| l2(xi, xj)).sum::<f64>();
    }
    2.0 * total
}

fn check_dims(x: &[&[f64]], y: &[&[f64]]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(CoreError::InvalidArgument(
            "energy distance needs two non-empty samples".into(),
        ));
    }
    let d = x[0].len();
    for p in x.iter().chain(y) {
        if p.len() != d {
            return Err(CoreError::Dimension {
                expected: d,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument("non-finite sample value".into()));
        }
    }
    Ok(())
}

/// Normalised energy distance between two equal-dimension samples.
pub fn energy_distance<P: AsRef<[f64]>, Q: AsRef<[f64]>>(x: &[P], y: &[Q]) -> Result<EnergyResult> {
    let x: Vec<&[f64]> = x.iter().map(AsRef::as_ref).collect();
    let y: Vec<&[f64]> = y.iter().map(AsRef::as_ref).collect();
    check_dims(&x, &y)?;
    Ok(energy_of_views(&x, &y))
}

fn canonical_first(x: &[&[f64]], y: &[&[f64]]) -> bool {
    if x.len() != y.len() {
        return x.len() < y.len();
    }
    for (p, q) in x.iter().zip(y) {
        for (a, b) in p.iter().zip(q.iter()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
    }
    true
}

fn energy_of_views(x: &[&[f64]], y: &[&[f64]]) -> EnergyResult {
    let (n, m) = (x.len() as f64, y.len() as f64);
    // sum the cross term in one canonical orientation so swapping the
    // arguments reproduces the same floating-point result
    let a = if canonical_first(x, y) {
        cross_sum(x, y)
    } else {
        cross_sum(y, x)
    } / (n * m);
    let b = within_sum(x) / (n * n);
    let c = within_sum(y) / (m * m);
    EnergyResult::from_means(a, b, c)
}

/// Per-cluster contribution to a drift degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterDrift {
    pub weight_fraction: f64,
    pub distance: f64,
}

/// Weighted drift of a window, before a tick is attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftBreakdown {
    pub overall: f64,
    pub per_cluster: BTreeMap<ComponentId, ClusterDrift>,
}

impl DriftBreakdown {
    pub(crate) fn from_clusters(per_cluster: BTreeMap<ComponentId, ClusterDrift>) -> Self {
        let overall = per_cluster
            .values()
            .map(|c| c.weight_fraction * c.distance)
            .sum();
        Self {
            overall,
            per_cluster,
        }
    }
}

/// Drift degree of the window ending at `tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub tick: Tick,
    pub overall: f64,
    pub per_feature: BTreeMap<String, f64>,
    pub per_cluster: BTreeMap<ComponentId, ClusterDrift>,
}

/// Cost controls for [`drift_degree`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyOptions {
    /// Per-cluster sample cap on either side; larger groups are subsampled uniformly.
    pub sample_cap: usize,
    pub seed: u64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self {
            sample_cap: 2000,
            seed: 0x5eed,
        }
    }
}

/// A sample together with its cluster label.
pub type Labeled<'a> = (ComponentId, &'a [f64]);

fn group<'a>(samples: &[Labeled<'a>]) -> BTreeMap<ComponentId, Vec<&'a [f64]>> {
    let mut out: BTreeMap<ComponentId, Vec<&'a [f64]>> = BTreeMap::new();
    for (c, v) in samples {
        out.entry(*c).or_default().push(v);
    }
    out
}

fn cap<'a>(points: Vec<&'a [f64]>, opts: &EnergyOptions, salt: u64) -> Vec<&'a [f64]> {
    if points.len() <= opts.sample_cap {
        return points;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut picked = index::sample(&mut rng, points.len(), opts.sample_cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| points[i]).collect()
}

fn grouped_drift(
    window: BTreeMap<ComponentId, Vec<&[f64]>>,
    mut training: BTreeMap<ComponentId, Vec<&[f64]>>,
    opts: &EnergyOptions,
) -> Option<DriftBreakdown> {
    let total: usize = window.values().map(Vec::len).sum();
    if total == 0 {
        return None;
    }
    let mut per_cluster = BTreeMap::new();
    for (c, pts) in window {
        let weight_fraction = pts.len() as f64 / total as f64;
        let distance = match training.remove(&c) {
            Some(train) if !train.is_empty() => {
                let salt = u64::from(c.0) << 1;
                let w = cap(pts, opts, salt);
                let t = cap(train, opts, salt | 1);
                energy_of_views(&w, &t).distance
            }
            // a cluster with no training samples counts as fully drifted
            _ => 1.0,
        };
        per_cluster.insert(
            c,
            ClusterDrift {
                weight_fraction,
                distance,
            },
        );
    }
    Some(DriftBreakdown::from_clusters(per_cluster))
}

/// Cluster-weighted drift degree between a window and the training samples.
///
/// Returns `None` for an empty window.
pub fn drift_degree(
    window: &[Labeled<'_>],
    training: &[Labeled<'_>],
    opts: &EnergyOptions,
) -> Option<DriftBreakdown> {
    grouped_drift(group(window), group(training), opts)
}

/// Drift degree computed on each feature alone, reusing the joint cluster labels.
pub fn drift_per_feature(
    window: &[Labeled<'_>],
    training: &[Labeled<'_>],
    feature_names: &[String],
    opts: &EnergyOptions,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if window.is_empty() {
        return out;
    }
    for (f, name) in feature_names.iter().enumerate() {
        let wv: Vec<f64> = window.iter().map(|(_, v)| v[f]).collect();
        let tv: Vec<f64> = training.iter().map(|(_, v)| v[f]).collect();
        let w: Vec<Labeled<'_>> = window
            .iter()
            .zip(wv.chunks(1))
            .map(|((c, _), v)| (*c, v))
            .collect();
        let t: Vec<Labeled<'_>> = training
            .iter()
            .zip(tv.chunks(1))
            .map(|((c, _), v)| (*c, v))
            .collect();
        if let Some(b) = drift_degree(&w, &t, opts) {
            out.insert(name.clone(), b.overall);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight double loops over the definition.
    fn naive(x: &[Vec<f64>], y: &[Vec<f64>]) -> (f64, f64, f64) {
        let mut a = 0.0;
        for xi in x {
            for yj in y {
                a += l2(xi, yj);
            }
        }
        let mut b = 0.0;
        for xi in x {
            for xj in x {
                b += l2(xi, xj);
            }
        }
        let mut c = 0.0;
        for yi in y {
            for yj in y {
                c += l2(yi, yj);
            }
        }
        let (n, m) = (x.len() as f64, y.len() as f64);
        (a / (n * m), b / (n * n), c / (m * m))
    }

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn identical_samples_have_zero_distance() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(energy_distance(&x, &x).unwrap().distance, 0.0);
    }

    #[test]
    fn point_masses_one_apart() {
        let r = energy_distance(&pts(&[0.0]), &pts(&[1.0])).unwrap();
        assert_eq!(r.between_mean, 1.0);
        assert_eq!(r.within_x_mean, 0.0);
        assert_eq!(r.within_y_mean, 0.0);
        assert!((r.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interleaved_pairs_give_one_third() {
        let r = energy_distance(&pts(&[0.0, 2.0]), &pts(&[1.0, 3.0])).unwrap();
        assert!((r.between_mean - 1.5).abs() < 1e-12);
        assert!((r.within_x_mean - 1.0).abs() < 1e-12);
        assert!((r.within_y_mean - 1.0).abs() < 1e-12);
        assert!((r.distance - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_point_masses_are_drift_free() {
        let r = energy_distance(&pts(&[4.0, 4.0]), &pts(&[4.0])).unwrap();
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn empty_and_mismatched_inputs_rejected() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(energy_distance(&empty, &pts(&[1.0])).is_err());
        assert!(energy_distance(&[vec![1.0, 2.0]], &pts(&[1.0])).is_err());
    }

    #[test]
    fn weighted_sum_three_to_one() {
        // window: 3 samples in cluster 0, 1 in cluster 1
        let per = BTreeMap::from([
            (ComponentId(0), ClusterDrift { weight_fraction: 0.75, distance: 0.2 }),
            (ComponentId(1), ClusterDrift { weight_fraction: 0.25, distance: 0.6 }),
        ]);
        let b = DriftBreakdown::from_clusters(per);
        assert!((b.overall - 0.30).abs() < 1e-12);
    }

    #[test]
    fn empty_training_cluster_counts_as_one() {
        let w = [vec![1.0], vec![2.0]];
        let t = [vec![1.0]];
        let window: Vec<Labeled> = w.iter().map(|v| (ComponentId(7), v.as_slice())).collect();
        let training: Vec<Labeled> = t.iter().map(|v| (ComponentId(0), v.as_slice())).collect();
        let b = drift_degree(&window, &training, &EnergyOptions::default()).unwrap();
        assert_eq!(b.overall, 1.0);
    }

    #[test]
    fn window_matching_training_is_zero() {
        let w = [vec![1.0, 0.0], vec![2.0, 1.0], vec![0.0, 3.0]];
        let l: Vec<Labeled> = w.iter().map(|v| (ComponentId(0), v.as_slice())).collect();
        let b = drift_degree(&l, &l, &EnergyOptions::default()).unwrap();
        assert_eq!(b.overall, 0.0);
    }

    #[test]
    fn empty_window_emits_nothing() {
        let t = [vec![1.0]];
        let training: Vec<Labeled> = t.iter().map(|v| (ComponentId(0), v.as_slice())).collect();
        assert!(drift_degree(&[], &training, &EnergyOptions::default()).is_none());
    }

    #[test]
    fn shifted_feature_dominates_per_feature_drift() {
        let training: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.71).cos()])
            .collect();
        let window: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.53).sin(), (i as f64 * 0.29).cos() + 5.0])
            .collect();
        let t: Vec<Labeled> = training.iter().map(|v| (ComponentId(0), v.as_slice())).collect();
        let w: Vec<Labeled> = window.iter().map(|v| (ComponentId(0), v.as_slice())).collect();
        let names = vec!["f1".to_string(), "f2".to_string()];
        let per = drift_per_feature(&w, &t, &names, &EnergyOptions::default());
        // brute-force each feature on its own
        let col = |s: &[Vec<f64>], f: usize| -> Vec<Vec<f64>> { s.iter().map(|v| vec![v[f]]).collect() };
        for (f, name) in names.iter().enumerate() {
            let (a, b, c) = naive(&col(&window, f), &col(&training, f));
            let expect = normalized_distance(a, b, c);
            assert!((per[name] - expect).abs() < 1e-10);
        }
        assert!(per["f2"] > per["f1"]);
    }

    #[test]
    fn identical_feature_has_zero_per_feature_drift() {
        let training: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.0]).collect();
        let window: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 3.0]).collect();
        let t: Vec<Labeled> = training.iter().map(|v| (ComponentId(0), v.as_slice())).collect();
        let w: Vec<Labeled> = window.iter().map(|v| (ComponentId(0), v.as_slice())).collect();
        let names = vec!["f1".to_string(), "f2".to_string()];
        let per = drift_per_feature(&w, &t, &names, &EnergyOptions::default());
        assert_eq!(per["f1"], 0.0);
    }

    #[test]
    fn single_feature_per_feature_equals_overall() {
        let training: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sqrt()]).collect();
        let window: Vec<Vec<f64>> = (0..25).map(|i| vec![(i as f64 * 1.3).sqrt() + 0.4]).collect();
        let lab = |i: usize| ComponentId((i % 3) as u32);
        let t: Vec<Labeled> = training.iter().enumerate().map(|(i, v)| (lab(i), v.as_slice())).collect();
        let w: Vec<Labeled> = window.iter().enumerate().map(|(i, v)| (lab(i), v.as_slice())).collect();
        let opts = EnergyOptions::default();
        let overall = drift_degree(&w, &t, &opts).unwrap().overall;
        let per = drift_per_feature(&w, &t, &["x".to_string()], &opts);
        assert!((per["x"] - overall).abs() < 1e-12);
    }

    #[test]
    fn subsampling_caps_work() {
        let training: Vec<Vec<f64>> = (0..300).map(|i| vec![i as f64 / 300.0]).collect();
        let t: Vec<Labeled> = training.iter().map(|v| (ComponentId(0), v.as_slice())).collect();
        let opts = EnergyOptions { sample_cap: 50, seed: 3 };
        let a = drift_degree(&t, &t, &opts).unwrap();
        let b = drift_degree(&t, &t, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.overall < 0.1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sample(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
            prop::collection::vec(prop::collection::vec(-100.0f64..100.0, d), 1..30)
        }

        proptest! {
            #[test]
            fn symmetric_and_bounded((x, y) in (1usize..5).prop_flat_map(|d| (sample(d), sample(d)))) {
                let xy = energy_distance(&x, &y).unwrap().distance;
                let yx = energy_distance(&y, &x).unwrap().distance;
                prop_assert_eq!(xy, yx);
                prop_assert!((0.0..=1.0).contains(&xy));
            }

            #[test]
            fn matches_naive((x, y) in (1usize..5).prop_flat_map(|d| (sample(d), sample(d)))) {
                let r = energy_distance(&x, &y).unwrap();
                let (a, b, c) = naive(&x, &y);
                prop_assert!((r.between_mean - a).abs() < 1e-9);
                prop_assert!((r.within_x_mean - b).abs() < 1e-9);
                prop_assert!((r.within_y_mean - c).abs() < 1e-9);
            }

            #[test]
            fn translation_invariant(
                (x, y, shift) in (1usize..4).prop_flat_map(|d| (sample(d), sample(d), prop::collection::vec(-50.0f64..50.0, d)))
            ) {
                let mv = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
                    s.iter().map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect()
                };
                let before = energy_distance(&x, &y).unwrap().distance;
                let after = energy_distance(&mv(&x), &mv(&y)).unwrap().distance;
                prop_assert!((before - after).abs() < 1e-9);
            }

            #[test]
            fn overall_is_weighted_sum(
                w in prop::collection::vec((0u32..4, -10.0f64..10.0), 1..40),
                t in prop::collection::vec((0u32..4, -10.0f64..10.0), 0..40),
            ) {
                let wv: Vec<(ComponentId, [f64; 1])> = w.iter().map(|(c, v)| (ComponentId(*c), [*v])).collect();
                let tv: Vec<(ComponentId, [f64; 1])> = t.iter().map(|(c, v)| (ComponentId(*c), [*v])).collect();
                let wl: Vec<Labeled> = wv.iter().map(|(c, v)| (*c, v.as_slice())).collect();
                let tl: Vec<Labeled> = tv.iter().map(|(c, v)| (*c, v.as_slice())).collect();
                let b = drift_degree(&wl, &tl, &EnergyOptions::default()).unwrap();
                let recomputed: f64 = b.per_cluster.values().map(|c| c.weight_fraction * c.distance).sum();
                let weights: f64 = b.per_cluster.values().map(|c| c.weight_fraction).sum();
                prop_assert!((b.overall - recomputed).abs() < 1e-9);
                prop_assert!((weights - 1.0).abs() < 1e-9);
                prop_assert!(b.per_cluster.values().all(|c| (0.0..=1.0).contains(&c.distance)));
            }
        }
    }
}
