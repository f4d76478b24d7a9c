use std::collections::BTreeMap;

use super::affinity::euclidean_sq;
use crate::ComponentId;

/// Picks `count` spatially even points by farthest-point sampling, with each
/// component capped at its proportional share of the picks.
///
/// Returns indices into `points` in selection order.
pub fn blue_noise_sample(points: &[&[f64]], labels: &[ComponentId], count: usize) -> Vec<usize> {
    let n = points.len();
    if count >= n {
        return (0..n).collect();
    }
    if count == 0 {
        return Vec::new();
    }
    let capacity = proportional_quota(labels, count);
    let mut used: BTreeMap<ComponentId, usize> = BTreeMap::new();

    let d = points[0].len();
    let mut centroid = vec![0.0; d];
    for p in points {
        for (c, v) in centroid.iter_mut().zip(*p) {
            *c += v / n as f64;
        }
    }
    let first = (0..n)
        .min_by(|a, b| euclidean_sq(points[*a], &centroid).total_cmp(&euclidean_sq(points[*b], &centroid)))
        .expect("non-empty");

    let mut nearest = vec![f64::INFINITY; n];
    let mut chosen = vec![false; n];
    let mut picks = Vec::with_capacity(count);
    let take = |i: usize, nearest: &mut [f64], chosen: &mut [bool], used: &mut BTreeMap<ComponentId, usize>| {
        chosen[i] = true;
        *used.entry(labels[i]).or_default() += 1;
        for j in 0..n {
            let dj = euclidean_sq(points[i], points[j]);
            if dj < nearest[j] {
                nearest[j] = dj;
            }
        }
        i
    };
    picks.push(take(first, &mut nearest, &mut chosen, &mut used));
    while picks.len() < count {
        let next = (0..n)
            .filter(|j| !chosen[*j])
            .filter(|j| used.get(&labels[*j]).copied().unwrap_or(0) < capacity[&labels[*j]])
            .max_by(|a, b| nearest[*a].total_cmp(&nearest[*b]).then(b.cmp(a)));
        let Some(next) = next else { break };
        picks.push(take(next, &mut nearest, &mut chosen, &mut used));
    }
    picks
}

/// Largest-remainder split of `count` across labels, proportional to label frequency.
fn proportional_quota(labels: &[ComponentId], count: usize) -> BTreeMap<ComponentId, usize> {
    let mut sizes: BTreeMap<ComponentId, usize> = BTreeMap::new();
    for l in labels {
        *sizes.entry(*l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let mut quota: BTreeMap<ComponentId, usize> = BTreeMap::new();
    let mut rema: Vec<(f64, ComponentId)> = Vec::new();
    let mut assigned = 0;
    for (c, s) in &sizes {
        let exact = count as f64 * *s as f64 / n;
        let q = (exact.floor() as usize).min(*s);
        quota.insert(*c, q);
        assigned += q;
        rema.push((exact - q as f64, *c));
    }
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, c) in rema.iter().cycle().take(rema.len() * 2) {
        if assigned >= count {
            break;
        }
        if quota[c] < sizes[c] {
            *quota.get_mut(c).expect("label") += 1;
            assigned += 1;
        }
    }
    quota
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn takes_everything_below_cap() {
        let pts = [[0.0], [1.0]];
        let views: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert_eq!(blue_noise_sample(&views, &[ComponentId(0); 2], 5), vec![0, 1]);
    }

    #[test]
    fn respects_count_and_proportions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<[f64; 2]> = (0..300).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let labels: Vec<ComponentId> = (0..300).map(|i| ComponentId((i < 200) as u32)).collect();
        let views: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let picks = blue_noise_sample(&views, &labels, 30);
        assert_eq!(picks.len(), 30);
        let big = picks.iter().filter(|i| labels[**i] == ComponentId(1)).count();
        assert_eq!(big, 20);
        let mut sorted = picks.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 30);
    }

    #[test]
    fn spreads_better_than_a_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 2]> = (0..400).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let views: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let labels = vec![ComponentId(0); 400];
        let min_gap = |idx: &[usize]| {
            let mut best = f64::INFINITY;
            for (a, i) in idx.iter().enumerate() {
                for j in &idx[a + 1..] {
                    best = best.min(euclidean_sq(views[*i], views[*j]));
                }
            }
            best
        };
        let picks = blue_noise_sample(&views, &labels, 40);
        let prefix: Vec<usize> = (0..40).collect();
        assert!(min_gap(&picks) > min_gap(&prefix));
    }
}
