//! Reference computations written independently of the engine: quadrature,
//! Jacobi eigensolver, dense Gaussian conditioning, direct log-densities and
//! Monte Carlo error bars.

use std::f64::consts::PI;

use bima_core::kernel_basis::BasisSet;
use bima_core::sem_model::{MediationDataset, MediatorState, OutcomeState};
use nalgebra::{DMatrix, DVector};

/// `K_nu(x) = ∫_0^∞ exp(-x cosh t) cosh(nu t) dt` by the trapezoid rule, which
/// converges geometrically for this analytic, doubly-exponentially decaying integrand.
/// Returned on the log scale with the `exp(-x)` factor pulled out.
pub fn ln_bessel_k_quadrature(nu: f64, x: f64) -> f64 {
    let h = 0.005;
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        let t = k as f64 * h;
        // exp(-x (cosh t - 1) + nu t) / 2 * (1 + exp(-2 nu t)), scaled by exp(x).
        let term = (-x * (t.cosh() - 1.0) + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        let w = if k == 0 { 0.5 } else { 1.0 };
        sum += w * term;
        if k > 0 && term < 1e-300_f64.max(sum * 1e-18) {
            break;
        }
        k += 1;
    }
    (sum * h).ln() - x
}

/// Matérn correlation at half-integer smoothness from elementary functions,
/// with `x = sqrt(2u) t`.
pub fn matern_half_integer(t: f64, u: f64) -> Option<f64> {
    let x = (2.0 * u).sqrt() * t;
    let poly = if u == 0.5 {
        1.0
    } else if u == 1.5 {
        1.0 + x
    } else if u == 2.5 {
        1.0 + x + x * x / 3.0
    } else {
        return None;
    };
    Some(poly * (-x).exp())
}

/// `K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}`.
pub fn bessel_k_half(x: f64) -> f64 {
    (PI / (2.0 * x)).sqrt() * (-x).exp()
}

/// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues in
/// decreasing order and matching eigenvector columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off.sqrt() <= 1e-15 * m.norm() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]));
    let vals = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &v.column(i));
    }
    (vals, vecs)
}

/// Dense Gaussian posterior of `w ~ N(mu, sigma)` after observing
/// `y = A w + e`, `e ~ N(0, noise)`, via the joint-covariance formulas.
pub fn gaussian_condition(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s_ay = sigma * a.transpose();
    let s_yy = a * &s_ay + noise;
    let inv = s_yy.try_inverse().expect("observation covariance must be invertible");
    let gain = &s_ay * inv;
    let mean = mu + &gain * (y - a * mu);
    let cov = sigma - &gain * s_ay.transpose();
    (mean, cov)
}

/// Condition `w ~ N(mu, sigma)` on the linear constraint `Bᵀ w = 0`.
pub fn condition_on_null(mu: &DVector<f64>, sigma: &DMatrix<f64>, b: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let zero = DVector::zeros(b.ncols());
    let none = DMatrix::zeros(b.ncols(), b.ncols());
    gaussian_condition(mu, sigma, &b.transpose(), &none, &zero)
}

fn soft(x: f64, nu: f64) -> f64 {
    if x > nu {
        x - nu
    } else if x < -nu {
        x + nu
    } else {
        0.0
    }
}

/// Thresholded field on the whole grid, built voxel by voxel.
pub fn field(bases: &BasisSet, theta: &[DVector<f64>], nu: f64) -> Vec<f64> {
    let mut out = vec![0.0; bases.n_voxels()];
    for (b, t) in bases.regions.iter().zip(theta) {
        for (k, &j) in b.voxels.iter().enumerate() {
            let latent: f64 = (0..b.n_basis()).map(|l| b.q[(k, l)] * t[l]).sum();
            out[j] = soft(latent, nu);
        }
    }
    out
}

fn ln_normal(x: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + x * x / var)
}

/// Outcome log posterior up to the inverse-gamma terms, summed subject by subject.
pub fn outcome_logpost_direct(st: &OutcomeState, data: &MediationDataset, bases: &BasisSet, sigma2_fixed: f64) -> f64 {
    let beta = field(bases, &st.theta_beta, st.nu_beta);
    let p = data.p() as f64;
    let mut lp = 0.0;
    for i in 0..data.n() {
        let mut mean = st.gamma * data.x[i];
        for k in 0..data.q() {
            mean += st.xi[k] * data.c[(i, k)];
        }
        for (j, b) in beta.iter().enumerate() {
            mean += b * data.m[(i, j)] / p;
        }
        lp += ln_normal(data.y[i] - mean, st.sigma2_y);
    }
    for (t, b) in st.theta_beta.iter().zip(&bases.regions) {
        for l in 0..t.len() {
            lp += ln_normal(t[l], st.sigma2_beta * b.eigvals[l]);
        }
    }
    lp += ln_normal(st.gamma, sigma2_fixed);
    lp += st.xi.iter().map(|v| ln_normal(*v, sigma2_fixed)).sum::<f64>();
    lp
}

/// Mediator residual `M_i(s) − α(s)X_i − ζ(s)ᵀC_i − η_i(s)`, voxel by voxel.
pub fn mediator_residual_direct(st: &MediatorState, data: &MediationDataset, bases: &BasisSet) -> DMatrix<f64> {
    let alpha = field(bases, &st.theta_alpha, st.nu_alpha);
    let mut r = data.m.clone();
    for (reg, b) in bases.regions.iter().enumerate() {
        for (k, &j) in b.voxels.iter().enumerate() {
            for i in 0..data.n() {
                let mut v = alpha[j] * data.x[i];
                for l in 0..b.n_basis() {
                    let mut coef = st.theta_eta[reg][(i, l)];
                    for c in 0..data.q() {
                        coef += st.theta_zeta[reg][(l, c)] * data.c[(i, c)];
                    }
                    v += b.q[(k, l)] * coef;
                }
                r[(i, j)] -= v;
            }
        }
    }
    r
}

/// Mediator log posterior in `θ_α`, dropping terms constant in `θ_α`.
pub fn mediator_logpost_alpha_direct(st: &MediatorState, data: &MediationDataset, bases: &BasisSet) -> f64 {
    let r = mediator_residual_direct(st, data, bases);
    let mut lp = r.iter().map(|e| ln_normal(*e, st.sigma2_m)).sum::<f64>();
    for (t, b) in st.theta_alpha.iter().zip(&bases.regions) {
        for l in 0..t.len() {
            lp += ln_normal(t[l], st.sigma2_alpha * b.eigvals[l]);
        }
    }
    lp
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_gradient<F: FnMut(&DVector<f64>) -> f64>(x: &DVector<f64>, h: f64, mut f: F) -> DVector<f64> {
    DVector::from_fn(x.len(), |l, _| {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[l] += h;
        dn[l] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

/// Sample moments with Monte Carlo standard errors for independent draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
    pub se_mean: f64,
    pub se_var: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    Moments {
        mean,
        var,
        se_mean: (var / n).sqrt(),
        se_var: ((m4 - var * var).max(0.0) / n).sqrt(),
    }
}

/// Standard error of the mean of a correlated sequence by non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let v = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (v / batches as f64).sqrt()
}

/// Mean and variance of `IG(shape, rate)`.
pub fn inv_gamma_moments(shape: f64, rate: f64) -> (f64, f64) {
    let mean = rate / (shape - 1.0);
    (mean, mean * mean / (shape - 2.0))
}

/// `‖A − B‖_F / ‖B‖_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Sample covariance of the rows of `draws`.
pub fn sample_covariance(draws: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = draws.nrows() as f64;
    let mean = DVector::from_fn(draws.ncols(), |j, _| draws.column(j).sum() / n);
    let mut centered = draws.clone();
    for j in 0..draws.ncols() {
        centered.column_mut(j).add_scalar_mut(-mean[j]);
    }
    let cov = centered.tr_mul(&centered) / (n - 1.0);
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_matches_half_order_closed_form() {
        for &x in &[0.05, 0.5, 1.0, 3.0, 10.0, 50.0] {
            let got = ln_bessel_k_quadrature(0.5, x);
            assert!((got - bessel_k_half(x).ln()).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let (vals, vecs) = jacobi_eigen(&a);
        let recon = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals.clone())) * vecs.transpose();
        assert!((recon - &a).amax() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn conditioning_scalar_case() {
        // w ~ N(0, 1), y = w + e with e ~ N(0, 1), y = 2: posterior N(1, 1/2).
        let (m, c) = gaussian_condition(
            &DVector::zeros(1),
            &DMatrix::identity(1, 1),
            &DMatrix::identity(1, 1),
            &DMatrix::identity(1, 1),
            &DVector::from_element(1, 2.0),
        );
        assert!((m[0] - 1.0).abs() < 1e-15 && (c[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn null_conditioning_removes_constrained_direction() {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let (m, c) = condition_on_null(&DVector::from_vec(vec![1.0, 3.0]), &DMatrix::identity(2, 2), &b);
        assert!((m[0] + 1.0).abs() < 1e-15 && (m[1] - 1.0).abs() < 1e-15);
        assert!((c[(0, 0)] - 0.5).abs() < 1e-15 && (c[(0, 1)] + 0.5).abs() < 1e-15);
    }
}
