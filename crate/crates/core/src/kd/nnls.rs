//! Lawson–Hanson active-set nonnegative least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Unconstrained least squares on a column subset.
fn ls_subset(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(cols);
    let svd = sub.svd(true, true);
    let eps = svd.singular_values.max() * 1e-13;
    svd.solve(b, eps).expect("SVD was computed with U and V")
}

/// `argmin_{x >= 0} ‖A x − b‖₂`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    if a.nrows() != b.len() {
        return Err(Error::InvalidInput("nnls: dimension mismatch".into()));
    }
    let mut x = DVector::zeros(n);
    if n == 0 {
        return Ok(x);
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * b.norm().max(1e-300);
    let tol = 1e-12 * scale.max(1e-300);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 30;
    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let pick = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j_new) = pick else {
            return Ok(x);
        };
        passive[j_new] = true;
        loop {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let zs = ls_subset(a, b, &cols);
            if zs.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &j) in cols.iter().enumerate() {
                    x[j] = zs[k];
                }
                break;
            }
            // step back to the boundary of the feasible region
            let mut alpha = f64::INFINITY;
            for (k, &j) in cols.iter().enumerate() {
                if zs[k] <= 0.0 {
                    let denom = x[j] - zs[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in cols.iter().enumerate() {
                x[j] += alpha * (zs[k] - x[j]);
                if x[j] <= 1e-15 * zs.amax() {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Err(Error::Socp("nnls did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_nonnegative_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let x = nnls(&a, &b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn clamps_negative_component() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let x = nnls(&a, &b).unwrap();
        assert_eq!(x, DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn satisfies_kkt_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(1..12);
            let a = DMatrix::from_fn(6, n, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let x = nnls(&a, &b).unwrap();
            let w = a.transpose() * (&b - &a * &x);
            for j in 0..n {
                assert!(x[j] >= 0.0);
                assert!(w[j] <= 1e-10);
                if x[j] > 0.0 {
                    assert!(w[j].abs() <= 1e-10);
                }
            }
        }
    }
}
