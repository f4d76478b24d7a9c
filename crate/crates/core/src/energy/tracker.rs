use std::collections::{BTreeMap, HashMap};

use super::{l2, normalized_distance, ClusterDrift, DriftBreakdown};
use crate::{ComponentId, SampleId};

#[derive(Debug, Clone, Default)]
struct ClusterSums {
    training: Vec<f64>,
    training_within: f64,
    window: Vec<f64>,
    window_ids: Vec<SampleId>,
    cross: f64,
    window_within: f64,
}

impl ClusterSums {
    fn training_len(&self, dim: usize) -> usize {
        self.training.len() / dim
    }

    fn window_len(&self, dim: usize) -> usize {
        self.window.len() / dim
    }

    fn distance(&self, dim: usize) -> f64 {
        let m = self.training_len(dim);
        if m == 0 {
            return 1.0;
        }
        let n = self.window_len(dim) as f64;
        let m = m as f64;
        normalized_distance(
            self.cross / (n * m),
            self.window_within / (n * n),
            self.training_within / (m * m),
        )
    }
}

/// Incremental drift degree for a window that changes one sample at a time.
///
/// Keeps the per-cluster pair-distance sums of the batch definition and
/// updates them in `O(window + training)` per insertion or removal, so a
/// sliding window of `w` samples costs `O(w)` per step instead of `O(w²)`.
#[derive(Debug, Clone)]
pub struct ClusterDriftTracker {
    dim: usize,
    clusters: BTreeMap<ComponentId, ClusterSums>,
    location: HashMap<SampleId, (ComponentId, usize)>,
}

impl ClusterDriftTracker {
    pub fn new<'a>(dim: usize, training: impl IntoIterator<Item = (ComponentId, &'a [f64])>) -> Self {
        let mut clusters: BTreeMap<ComponentId, ClusterSums> = BTreeMap::new();
        for (c, v) in training {
            debug_assert_eq!(v.len(), dim);
            clusters.entry(c).or_default().training.extend_from_slice(v);
        }
        for sums in clusters.values_mut() {
            let pts: Vec<&[f64]> = sums.training.chunks(dim).collect();
            sums.training_within = super::within_sum(&pts);
        }
        Self {
            dim,
            clusters,
            location: HashMap::new(),
        }
    }

    pub fn window_len(&self) -> usize {
        self.location.len()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.location.contains_key(&id)
    }

    pub fn insert(&mut self, id: SampleId, component: ComponentId, point: &[f64]) {
        debug_assert_eq!(point.len(), self.dim);
        if self.location.contains_key(&id) {
            self.remove(id);
        }
        let dim = self.dim;
        let sums = self.clusters.entry(component).or_default();
        sums.cross += sums.training.chunks(dim).map(|t| l2(point, t)).sum::<f64>();
        sums.window_within += 2.0 * sums.window.chunks(dim).map(|w| l2(point, w)).sum::<f64>();
        let slot = sums.window_ids.len();
        sums.window.extend_from_slice(point);
        sums.window_ids.push(id);
        self.location.insert(id, (component, slot));
    }

    pub fn remove(&mut self, id: SampleId) -> bool {
        let Some((component, slot)) = self.location.remove(&id) else {
            return false;
        };
        let dim = self.dim;
        let sums = self.clusters.get_mut(&component).expect("tracked cluster");
        let point: Vec<f64> = sums.window[slot * dim..(slot + 1) * dim].to_vec();
        sums.cross -= sums.training.chunks(dim).map(|t| l2(&point, t)).sum::<f64>();
        let within: f64 = sums
            .window
            .chunks(dim)
            .enumerate()
            .filter(|(i, _)| *i != slot)
            .map(|(_, w)| l2(&point, w))
            .sum();
        sums.window_within -= 2.0 * within;

        let last = sums.window_ids.len() - 1;
        if slot != last {
            let moved = sums.window_ids[last];
            sums.window.copy_within(last * dim..(last + 1) * dim, slot * dim);
            sums.window_ids[slot] = moved;
            self.location.insert(moved, (component, slot));
        }
        sums.window.truncate(last * dim);
        sums.window_ids.truncate(last);
        if sums.window_ids.is_empty() {
            // guard against accumulated rounding once the cluster empties
            sums.cross = 0.0;
            sums.window_within = 0.0;
        }
        true
    }

    /// Moves a tracked sample to another cluster.
    pub fn relabel(&mut self, id: SampleId, component: ComponentId) {
        let Some(&(current, slot)) = self.location.get(&id) else {
            return;
        };
        if current == component {
            return;
        }
        let dim = self.dim;
        let point = self.clusters[&current].window[slot * dim..(slot + 1) * dim].to_vec();
        self.remove(id);
        self.insert(id, component, &point);
    }

    pub fn breakdown(&self) -> Option<DriftBreakdown> {
        let total = self.location.len();
        if total == 0 {
            return None;
        }
        let per_cluster = self
            .clusters
            .iter()
            .filter(|(_, s)| !s.window_ids.is_empty())
            .map(|(c, s)| {
                (
                    *c,
                    ClusterDrift {
                        weight_fraction: s.window_ids.len() as f64 / total as f64,
                        distance: s.distance(self.dim),
                    },
                )
            })
            .collect();
        Some(DriftBreakdown::from_clusters(per_cluster))
    }

    pub fn overall(&self) -> Option<f64> {
        let total = self.location.len() as f64;
        if total == 0.0 {
            return None;
        }
        Some(
            self.clusters
                .values()
                .filter(|s| !s.window_ids.is_empty())
                .map(|s| s.window_ids.len() as f64 / total * s.distance(self.dim))
                .sum(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{drift_degree, EnergyOptions, Labeled};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tracks_batch_definition_through_random_edits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let training: Vec<(ComponentId, Vec<f64>)> = (0..60)
            .map(|_| {
                (
                    ComponentId(rng.random_range(0..3)),
                    vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
                )
            })
            .collect();
        let mut tracker =
            ClusterDriftTracker::new(2, training.iter().map(|(c, v)| (*c, v.as_slice())));
        let mut live: BTreeMap<SampleId, (ComponentId, Vec<f64>)> = BTreeMap::new();
        let opts = EnergyOptions::default();
        for step in 0..400u64 {
            let op = rng.random_range(0..10);
            if op < 6 || live.is_empty() {
                let c = ComponentId(rng.random_range(0..4));
                let p = vec![rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
                tracker.insert(SampleId(step), c, &p);
                live.insert(SampleId(step), (c, p));
            } else if op < 9 {
                let id = *live.keys().nth(rng.random_range(0..live.len())).unwrap();
                assert!(tracker.remove(id));
                live.remove(&id);
            } else {
                let id = *live.keys().nth(rng.random_range(0..live.len())).unwrap();
                let c = ComponentId(rng.random_range(0..4));
                tracker.relabel(id, c);
                live.get_mut(&id).unwrap().0 = c;
            }
            let w: Vec<Labeled> = live.values().map(|(c, v)| (*c, v.as_slice())).collect();
            let t: Vec<Labeled> = training.iter().map(|(c, v)| (*c, v.as_slice())).collect();
            let batch = drift_degree(&w, &t, &opts);
            match (batch, tracker.breakdown()) {
                (None, None) => {}
                (Some(b), Some(i)) => {
                    assert!((b.overall - i.overall).abs() < 1e-9, "step {step}");
                    assert_eq!(b.per_cluster.len(), i.per_cluster.len());
                    assert!((tracker.overall().unwrap() - b.overall).abs() < 1e-9);
                }
                other => panic!("mismatch at step {step}: {other:?}"),
            }
        }
    }
}
