//! Coordinate-descent lasso with unpenalized columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{BimaError, Result};
use crate::stgp::soft_threshold;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coef: DVector<f64>,
    pub sweeps: usize,
}

/// Minimize `‖y − A w‖² / (2n) + lambda · Σ_{j penalized} |w_j|`.
///
/// Columns with zero norm keep a zero coefficient.
pub fn lasso_coordinate_descent(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    penalized: &[bool],
    lambda: f64,
    max_sweeps: usize,
    tol: f64,
) -> Result<LassoFit> {
    let (n, k) = a.shape();
    if y.len() != n || penalized.len() != k {
        return Err(BimaError::InvalidArgument("lasso design shape mismatch".into()));
    }
    let nf = n as f64;
    let scale: Vec<f64> = (0..k).map(|j| a.column(j).norm_squared() / nf).collect();
    let mut w: DVector<f64> = DVector::zeros(k);
    let mut r = y.clone();
    for sweep in 1..=max_sweeps {
        let mut max_delta: f64 = 0.0;
        let mut max_w: f64 = 0.0;
        for j in 0..k {
            if scale[j] == 0.0 {
                continue;
            }
            let col = a.column(j);
            let rho = col.dot(&r) / nf + scale[j] * w[j];
            let new = if penalized[j] { soft_threshold(rho, lambda) } else { rho } / scale[j];
            let delta = new - w[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs() * scale[j].sqrt());
            max_w = max_w.max(new.abs() * scale[j].sqrt());
        }
        if max_delta <= tol * max_w.max(1e-12) {
            return Ok(LassoFit { coef: w, sweeps: sweep });
        }
    }
    Err(BimaError::InitializationFailed(format!(
        "lasso did not converge in {max_sweeps} sweeps"
    )))
}

/// Smallest penalty for which every penalized coefficient is zero, with the
/// unpenalized columns fitted by least squares first.
pub fn lasso_lambda_max(a: &DMatrix<f64>, y: &DVector<f64>, penalized: &[bool]) -> Result<f64> {
    let free: Vec<usize> = (0..a.ncols()).filter(|&j| !penalized[j]).collect();
    let r = if free.is_empty() {
        y.clone()
    } else {
        let f = DMatrix::from_fn(a.nrows(), free.len(), |i, c| a[(i, free[c])]);
        let sol = f
            .clone()
            .svd(true, true)
            .solve(y, 1e-12)
            .map_err(|e| BimaError::NumericalRank(e.to_string()))?;
        y - f * sol
    };
    let n = a.nrows() as f64;
    Ok((0..a.ncols())
        .filter(|&j| penalized[j])
        .map(|j| (a.column(j).dot(&r) / n).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_design_is_soft_thresholded_ols() {
        // With A'A/n = I the lasso solution is T_λ(A'y/n) coordinatewise.
        let n = 4;
        let a = DMatrix::from_row_slice(n, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let y = DVector::from_vec(vec![3.0, 1.0, -1.0, 0.5]);
        let fit = lasso_coordinate_descent(&a, &y, &[true, true], 0.4, 100, 1e-12).unwrap();
        let ols = a.tr_mul(&y) / n as f64;
        for j in 0..2 {
            assert!((fit.coef[j] - soft_threshold(ols[j], 0.4)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_penalty_gives_empty_fit() {
        let a = DMatrix::from_fn(10, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y = DVector::from_fn(10, |i, _| i as f64 * 0.3);
        let pen = [true, true, true, true, false];
        let lmax = lasso_lambda_max(&a, &y, &pen).unwrap();
        let fit = lasso_coordinate_descent(&a, &y, &pen, lmax * 1.001, 500, 1e-10).unwrap();
        assert!(fit.coef.rows(0, 4).iter().all(|c| *c == 0.0));
        let fit = lasso_coordinate_descent(&a, &y, &pen, lmax * 0.5, 500, 1e-10).unwrap();
        assert!(fit.coef.rows(0, 4).iter().any(|c| *c != 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let a = DMatrix::from_fn(6, 6, |i, j| 1.0 + 1e-3 * ((i + 2 * j) % 6) as f64);
        let y = DVector::from_fn(6, |i, _| i as f64);
        let res = lasso_coordinate_descent(&a, &y, &[true; 6], 1e-6, 1, 1e-14);
        assert!(matches!(res, Err(BimaError::InitializationFailed(_))));
    }
}
