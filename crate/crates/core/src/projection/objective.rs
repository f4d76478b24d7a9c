/// The combined projection objective over 2-D coordinates.
///
/// Three KL terms are weighted by `weights`:
/// 0. the full pairwise affinity `P` against Student-t affinities `Q` over
///    all points;
/// 1. center affinities of the original points against fixed 2-D centers;
/// 2. one-hot anchor affinities against the anchors' fixed 2-D positions.
///
/// Coordinates are a flat `[x0, y0, x1, y1, ...]` slice. The first
/// `n_original` points are the ones the constraint terms apply to.
#[derive(Debug, Clone)]
pub struct Objective {
    pub(crate) n: usize,
    pub(crate) n_original: usize,
    pub(crate) p: Vec<f64>,
    p_neg_entropy: f64,
    pub(crate) centers: Vec<[f64; 2]>,
    /// `n_original × centers.len()`, summing to one.
    pub(crate) pc: Vec<f64>,
    pc_neg_entropy: f64,
    /// `(point index, fixed target)` per anchor.
    pub(crate) anchors: Vec<(usize, [f64; 2])>,
    pub weights: [f64; 3],
}

fn neg_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum()
}

#[inline]
fn kernel(a: &[f64], b: &[f64; 2]) -> (f64, f64, f64) {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (1.0 / (1.0 + dx * dx + dy * dy), dx, dy)
}

impl Objective {
    pub fn new(
        n: usize,
        n_original: usize,
        p: Vec<f64>,
        centers: Vec<[f64; 2]>,
        pc: Vec<f64>,
        anchors: Vec<(usize, [f64; 2])>,
        weights: [f64; 3],
    ) -> Self {
        debug_assert_eq!(p.len(), n * n);
        debug_assert_eq!(pc.len(), n_original * centers.len());
        Objective {
            n,
            n_original,
            p_neg_entropy: neg_entropy(&p),
            p,
            pc_neg_entropy: neg_entropy(&pc),
            centers,
            pc,
            anchors,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn center_active(&self) -> bool {
        self.weights[1] > 0.0 && !self.centers.is_empty() && self.n_original > 0
    }

    fn anchor_active(&self) -> bool {
        self.weights[2] > 0.0 && !self.anchors.is_empty()
    }

    /// Objective value and gradient at `y`; `exaggeration` scales `P` in the
    /// gradient only, the returned value is always the plain objective.
    pub fn value_and_gradient(&self, y: &[f64], exaggeration: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; 2 * self.n];
        let [lambda, phi, psi] = self.weights;
        let terms = self.terms(y, exaggeration, &mut grad);
        (lambda * terms[0] + phi * terms[1] + psi * terms[2], grad)
    }

    /// The three KL divergences at `y`.
    pub fn kl_terms(&self, y: &[f64]) -> [f64; 3] {
        let mut scratch = vec![0.0; 2 * self.n];
        self.terms(y, 1.0, &mut scratch)
    }

    fn terms(&self, y: &[f64], exaggeration: f64, grad: &mut [f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        let [lambda, phi, psi] = self.weights;
        if lambda > 0.0 && self.n >= 2 {
            out[0] = self.pairwise(y, exaggeration, lambda, grad);
        }
        if self.center_active() {
            out[1] = self.center_term(y, phi, grad);
        }
        if self.anchor_active() {
            out[2] = self.anchor_term(y, psi, grad);
        }
        out
    }

    fn pairwise(&self, y: &[f64], exaggeration: f64, weight: f64, grad: &mut [f64]) -> f64 {
        let n = self.n;
        let mut z = 0.0;
        let mut p_log_u = 0.0;
        let mut p_sum = 0.0;
        for i in 0..n {
            let (yi0, yi1) = (y[2 * i], y[2 * i + 1]);
            let row = &self.p[i * n..(i + 1) * n];
            for j in i + 1..n {
                let dx = yi0 - y[2 * j];
                let dy = yi1 - y[2 * j + 1];
                let u = 1.0 / (1.0 + dx * dx + dy * dy);
                z += 2.0 * u;
                let pij = row[j];
                if pij > 0.0 {
                    p_log_u += 2.0 * pij * u.ln();
                    p_sum += 2.0 * pij;
                }
            }
        }
        let kl = self.p_neg_entropy - p_log_u + p_sum * z.ln();
        let s = exaggeration * p_sum;
        // full rows in index order: samples with identical inputs and
        // positions then receive bit-identical gradients
        for i in 0..n {
            let (yi0, yi1) = (y[2 * i], y[2 * i + 1]);
            let row = &self.p[i * n..(i + 1) * n];
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dx = yi0 - y[2 * j];
                let dy = yi1 - y[2 * j + 1];
                let u = 1.0 / (1.0 + dx * dx + dy * dy);
                let f = 4.0 * weight * (exaggeration * row[j] - s * u / z) * u;
                gx += f * dx;
                gy += f * dy;
            }
            grad[2 * i] += gx;
            grad[2 * i + 1] += gy;
        }
        kl
    }

    /// KL between a fixed-target distribution and Student-t affinities to
    /// fixed 2-D targets, with gradient `2 Σ_k (P_ik − Q_ik) u_ik (y_i − t_k)`.
    #[allow(clippy::too_many_arguments)]
    fn fixed_target_term(
        &self,
        y: &[f64],
        rows: usize,
        targets: &[[f64; 2]],
        p_at: impl Fn(usize, usize) -> f64,
        p_neg_entropy: f64,
        weight: f64,
        grad: &mut [f64],
    ) -> f64 {
        let mut z = 0.0;
        let mut p_log_u = 0.0;
        let mut p_sum = 0.0;
        for i in 0..rows {
            let yi = &y[2 * i..2 * i + 2];
            for (k, t) in targets.iter().enumerate() {
                let (u, _, _) = kernel(yi, t);
                z += u;
                let p = p_at(i, k);
                if p > 0.0 {
                    p_log_u += p * u.ln();
                    p_sum += p;
                }
            }
        }
        for i in 0..rows {
            let yi = &y[2 * i..2 * i + 2];
            let (mut gx, mut gy) = (0.0, 0.0);
            for (k, t) in targets.iter().enumerate() {
                let (u, dx, dy) = kernel(yi, t);
                let f = 2.0 * weight * (p_at(i, k) - p_sum * u / z) * u;
                gx += f * dx;
                gy += f * dy;
            }
            grad[2 * i] += gx;
            grad[2 * i + 1] += gy;
        }
        p_neg_entropy - p_log_u + p_sum * z.ln()
    }

    fn center_term(&self, y: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let k = self.centers.len();
        self.fixed_target_term(
            y,
            self.n_original,
            &self.centers,
            |i, c| self.pc[i * k + c],
            self.pc_neg_entropy,
            weight,
            grad,
        )
    }

    fn anchor_term(&self, y: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let m = self.anchors.len();
        let mass = 1.0 / m as f64;
        let targets: Vec<[f64; 2]> = self.anchors.iter().map(|a| a.1).collect();
        // anchor k sits at row anchors[k].0; P_s is one-hot on that (row, k) pair
        let mut owner = vec![usize::MAX; self.n_original];
        for (k, (i, _)) in self.anchors.iter().enumerate() {
            owner[*i] = k;
        }
        self.fixed_target_term(
            y,
            self.n_original,
            &targets,
            |i, k| if owner[i] == k { mass } else { 0.0 },
            mass.ln(),
            weight,
            grad,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::affinity::{calibrate_row, joint_affinities};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A random 20-point problem with all three terms switched on.
    pub(crate) fn random_problem(seed: u64) -> (Objective, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 20;
        let n_orig = 14;
        let x: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let mut d2 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d2[i * n + j] = (0..3).map(|a| (x[i][a] - x[j][a]).powi(2)).sum();
            }
        }
        let p = joint_affinities(&d2, n, 5.0);
        let centers = vec![[0.5, -1.0], [-2.0, 1.5], [2.5, 2.0]];
        let mut pc = Vec::new();
        for _ in 0..n_orig {
            let row: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..9.0)).collect();
            let cal = calibrate_row(&row, 1.5);
            let w = [1.0, 2.0, 1.5];
            pc.extend(cal.iter().zip(w).map(|(a, b)| a * b));
        }
        let total: f64 = pc.iter().sum();
        pc.iter_mut().for_each(|v| *v /= total);
        let anchors = (0..n_orig)
            .step_by(2)
            .map(|i| (i, [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]))
            .collect();
        let obj = Objective::new(n, n_orig, p, centers, pc, anchors, [0.5, 0.3, 0.2]);
        let y = (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        (obj, y)
    }

    pub(crate) fn gradient_error(obj: &Objective, y: &[f64]) -> f64 {
        let (_, g) = obj.value_and_gradient(y, 1.0);
        let h = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..y.len() {
            let mut a = y.to_vec();
            let mut b = y.to_vec();
            a[i] += h;
            b[i] -= h;
            let fd = (obj.value_and_gradient(&a, 1.0).0 - obj.value_and_gradient(&b, 1.0).0) / (2.0 * h);
            num += (fd - g[i]).powi(2);
            den += fd.powi(2);
        }
        (num / den).sqrt()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (obj, y) = random_problem(seed);
            let err = gradient_error(&obj, &y);
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn each_term_is_nonnegative() {
        for seed in 0..5 {
            let (obj, y) = random_problem(seed);
            for t in obj.kl_terms(&y) {
                assert!(t >= -1e-12);
            }
        }
    }

    #[test]
    fn exaggeration_only_touches_the_gradient() {
        let (obj, y) = random_problem(9);
        let (a, ga) = obj.value_and_gradient(&y, 1.0);
        let (b, gb) = obj.value_and_gradient(&y, 4.0);
        assert_eq!(a, b);
        assert_ne!(ga, gb);
    }
}
