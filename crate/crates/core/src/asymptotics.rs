//! Large-sample objects: the limiting estimating system, the extreme-value
//! limits of the bound estimators, and the normal limit of (μ̂, σ̂).

use crate::error::{Error, Result};
use crate::estimating::SystemValue;
use crate::quadrature::integrate;
use crate::specfns::{ln_normal_mass, ln_phi};
use crate::truncnorm::{std_moments, std_quantile_unchecked, StdMoments, TnParams};

pub type Mat2 = [[f64; 2]; 2];
pub type Mat4 = [[f64; 4]; 4];

pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Σ, Γ and the limiting covariance ΓΣΓᵗ of √n(μ̂ − μ₀, σ̂ − σ₀).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitCov {
    pub sigma_mat: Mat2,
    pub gamma_mat: Mat2,
    pub musigma_cov: Mat2,
}

/// Limit Ψ(θ) of the observed system for data drawn from `theta0`.
pub fn limiting_system(theta: &TnParams, theta0: &TnParams, quad_tol: f64) -> Result<SystemValue> {
    let (l, u) = theta.std_bounds();
    let (l0, u0) = theta0.std_bounds();
    let m = std_moments(l, u)?;
    let m0 = std_moments(l0, u0)?;
    let (mu0, s0) = (theta0.mu(), theta0.sigma());
    let cross = integrate(
        |t| (mu0 + s0 * std_quantile_unchecked(l0, u0, t)) * std_quantile_unchecked(l, u, t),
        0.0,
        1.0,
        quad_tol,
    )?;
    let (mu, s) = (theta.mu(), theta.sigma());
    Ok(SystemValue {
        eq_mu: mu0 + s0 * m0.alpha1 - mu - s * m.alpha1,
        eq_sigma: cross - mu * m.alpha1 - s * m.alpha2,
        eq_tau_l: theta0.tau_l() - theta.tau_l(),
        eq_tau_u: theta0.tau_u() - theta.tau_u(),
    })
}

/// Limit cdf of n·f(τ₀)·(τ̂ − τ₀) for the upper (W + 1, reflected) or lower
/// (−(W + 1)) bound estimator, W standard exponential.
pub fn bound_limit_cdf(x: f64, side: Side) -> f64 {
    match side {
        Side::Upper => {
            if x <= 1.0 {
                (x - 1.0).exp()
            } else {
                1.0
            }
        }
        Side::Lower => {
            if x >= -1.0 {
                -(-(x + 1.0)).exp_m1()
            } else {
                0.0
            }
        }
    }
}

/// Asymptotic covariance Σ(θ₀) of the first two components of √n·Ψₙ(θ₀).
pub fn sigma_matrix(theta0: &TnParams) -> Mat2 {
    let m = theta0.std_moments();
    let s2 = theta0.sigma() * theta0.sigma();
    let c = m.cov_matrix();
    let off = 0.5 * s2 * c[0][1];
    [[s2 * c[0][0], off], [off, 0.25 * s2 * c[1][1]]]
}

/// The 2×2 moment matrix whose inverse is Γ.
fn moment_matrix(m: &StdMoments) -> Mat2 {
    let c = m.cov_matrix();
    [[c[0][0], c[0][1]], [0.5 * c[1][0], 0.5 * c[1][1]]]
}

/// ∂Ψ/∂θ at θ = θ₀, rows ordered (μ, σ, τ_l, τ_u) as are the columns.
pub fn jacobian(theta0: &TnParams) -> Mat4 {
    let (l, u) = theta0.std_bounds();
    let m = theta0.std_moments();
    let ln_d = ln_normal_mass(l, u);
    // densities of TN(0, 1, l, u) at its endpoints
    let fl = (ln_phi(l) - ln_d).exp();
    let fu = (ln_phi(u) - ln_d).exp();
    let mm = moment_matrix(&m);
    [
        [-mm[0][0], -mm[0][1], fl * (l - m.alpha1), -fu * (u - m.alpha1)],
        [-mm[1][0], -mm[1][1], 0.5 * fl * (l * l - m.alpha2), -0.5 * fu * (u * u - m.alpha2)],
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
    ]
}

/// Central finite differences of [`limiting_system`] at θ₀ with step
/// `step` (relative to max(1, |θ_j|)).
pub fn jacobian_fd(theta0: &TnParams, step: f64, quad_tol: f64) -> Result<Mat4> {
    let base = theta0.to_array();
    let mut jac = [[0.0; 4]; 4];
    for j in 0..4 {
        let h = step * base[j].abs().max(1.0);
        let mut plus = base;
        let mut minus = base;
        plus[j] += h;
        minus[j] -= h;
        let fp = limiting_system(&TnParams::from_array(plus)?, theta0, quad_tol)?.to_array();
        let fm = limiting_system(&TnParams::from_array(minus)?, theta0, quad_tol)?.to_array();
        for i in 0..4 {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det4(a: &Mat4) -> f64 {
    let mut m = *a;
    let mut det = 1.0;
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    det
}

fn inv2(a: &Mat2) -> Option<Mat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn transpose2(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn musigma_limit_cov(theta0: &TnParams) -> Result<LimitCov> {
    let m = theta0.std_moments();
    let gamma = inv2(&moment_matrix(&m))
        .ok_or_else(|| Error::Invariant("moment matrix is singular".into()))?;
    let sigma = sigma_matrix(theta0);
    let mut cov = mul2(&mul2(&gamma, &sigma), &transpose2(&gamma));
    // symmetrize away rounding
    let off = 0.5 * (cov[0][1] + cov[1][0]);
    cov[0][1] = off;
    cov[1][0] = off;
    Ok(LimitCov { sigma_mat: sigma, gamma_mat: gamma, musigma_cov: cov })
}
