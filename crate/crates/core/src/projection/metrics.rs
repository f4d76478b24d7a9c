//! Layout quality measures.

use super::affinity::euclidean_sq;

fn neighbour_ranks(points: &[&[f64]], i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).filter(|j| *j != i).collect();
    order.sort_by(|a, b| {
        euclidean_sq(points[i], points[*a])
            .total_cmp(&euclidean_sq(points[i], points[*b]))
            .then(a.cmp(b))
    });
    order
}

/// Trustworthiness of a low-dimensional layout at neighbourhood size `k`:
/// 1 when every low-dimensional neighbour is also a high-dimensional one.
pub fn trustworthiness(high: &[&[f64]], low: &[&[f64]], k: usize) -> f64 {
    let n = high.len();
    assert!(k < n / 2, "k must be below n / 2");
    let mut penalty = 0.0;
    for i in 0..n {
        let high_order = neighbour_ranks(high, i);
        let mut rank = vec![0usize; n];
        for (r, j) in high_order.iter().enumerate() {
            rank[*j] = r + 1;
        }
        for j in neighbour_ranks(low, i).into_iter().take(k) {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

/// Mean silhouette coefficient of `points` under `labels`.
pub fn silhouette<L: PartialEq>(points: &[&[f64]], labels: &[L]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut own = (0.0, 0usize);
        let mut others: Vec<(usize, f64, usize)> = Vec::new();
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = euclidean_sq(points[i], points[j]).sqrt();
            if labels[j] == labels[i] {
                own.0 += d;
                own.1 += 1;
            } else {
                // group by the first index carrying the same label
                let key = (0..n).find(|k| labels[*k] == labels[j]).expect("label");
                match others.iter_mut().find(|o| o.0 == key) {
                    Some(o) => {
                        o.1 += d;
                        o.2 += 1;
                    }
                    None => others.push((key, d, 1)),
                }
            }
        }
        if own.1 == 0 || others.is_empty() {
            continue;
        }
        let a = own.0 / own.1 as f64;
        let b = others.iter().map(|o| o.1 / o.2 as f64).fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layout_is_trustworthy() {
        let pts: Vec<[f64; 2]> = (0..30).map(|i| [i as f64, (i * i % 7) as f64]).collect();
        let v: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert!((trustworthiness(&v, &v, 5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_groups_score_high() {
        let pts: Vec<[f64; 2]> = (0..20).map(|i| [(i / 10) as f64 * 100.0 + (i % 10) as f64 * 0.1, 0.0]).collect();
        let v: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        assert!(silhouette(&v, &labels) > 0.95);
    }
}
