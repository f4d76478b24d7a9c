//! Small dense helpers for row-major square matrices.

use nalgebra::DMatrix;

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// `ln |A|` from its Cholesky factor.
pub fn log_det_from_cholesky(l: &[f64], d: usize) -> f64 {
    2.0 * (0..d).map(|i| l[i * d + i].ln()).sum::<f64>()
}

/// Squared Mahalanobis norm of `v` under `A = L Lᵀ`.
pub fn mahalanobis_sq(l: &[f64], d: usize, v: &[f64]) -> f64 {
    let mut z = [0.0f64; 16];
    let mut heap;
    let z: &mut [f64] = if d <= 16 {
        &mut z[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    let mut total = 0.0;
    for i in 0..d {
        let mut s = v[i];
        for k in 0..i {
            s -= l[i * d + k] * z[k];
        }
        z[i] = s / l[i * d + i];
        total += z[i] * z[i];
    }
    total
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &[f64], d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => a[0],
        2 => {
            let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
            let mid = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            mid - rad
        }
        _ => {
            let m = DMatrix::from_row_slice(d, d, a);
            m.symmetric_eigenvalues().min()
        }
    }
}

/// Replaces `a` with `(a + aᵀ) / 2`.
pub fn symmetrize(a: &mut [f64], d: usize) {
    for i in 0..d {
        for j in i + 1..d {
            let m = 0.5 * (a[i * d + j] + a[j * d + i]);
            a[i * d + j] = m;
            a[j * d + i] = m;
        }
    }
}

/// Raises the spectrum of `a` so its smallest eigenvalue is at least `floor`.
/// Returns whether the matrix was changed.
pub fn apply_eigen_floor(a: &mut [f64], d: usize, floor: f64) -> bool {
    symmetrize(a, d);
    let lo = min_eigenvalue(a, d);
    if lo >= floor && lo.is_finite() {
        return false;
    }
    let bump = if lo.is_finite() { floor - lo } else { floor };
    for i in 0..d {
        a[i * d + i] += bump;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        let det = 4.0 * (5.0 * 3.0 - 1.0) - 2.0 * (2.0 * 3.0 - 0.6) + 0.6 * (2.0 - 5.0 * 0.6);
        assert!((log_det_from_cholesky(&l, 3) - f64::ln(det)).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_identity_is_euclidean() {
        let l = cholesky(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!((mahalanobis_sq(&l, 2, &[3.0, 4.0]) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_eigen_matches_nalgebra() {
        let a = [2.0, 0.7, 0.7, 1.0];
        let m = DMatrix::from_row_slice(2, 2, &a);
        assert!((min_eigenvalue(&a, 2) - m.symmetric_eigenvalues().min()).abs() < 1e-12);
    }

    #[test]
    fn floor_raises_singular_matrix() {
        let mut a = [1.0, 1.0, 1.0, 1.0];
        assert!(apply_eigen_floor(&mut a, 2, 1e-3));
        assert!(min_eigenvalue(&a, 2) >= 1e-3 - 1e-15);
        assert!(cholesky(&a, 2).is_some());
    }
}
