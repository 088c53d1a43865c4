//! Order-statistic regression weights, latent-count expectations, the UMVU
//! bound estimators and the estimating systems built from them.

use crate::error::{domain, Error, Result};
use crate::specfns::{self, ln_cdf, ln_normal_mass, ln_phi};
use crate::truncnorm::TnParams;

/// Expected numbers of parent draws below and above the truncation bounds.
/// Real valued; need not be integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentCounts {
    pub n_l: f64,
    pub n_u: f64,
}

impl LatentCounts {
    pub fn new(n_l: f64, n_u: f64) -> Result<Self> {
        if !(n_l >= 0.0 && n_u >= 0.0 && n_l.is_finite() && n_u.is_finite()) {
            return Err(domain(format!(
                "latent counts must be finite and nonnegative, got ({n_l}, {n_u})"
            )));
        }
        Ok(LatentCounts { n_l, n_u })
    }

    pub fn zero() -> Self {
        LatentCounts { n_l: 0.0, n_u: 0.0 }
    }
}

/// The four components of an estimating system, ordered (μ, σ, τ_l, τ_u).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemValue {
    pub eq_mu: f64,
    pub eq_sigma: f64,
    pub eq_tau_l: f64,
    pub eq_tau_u: f64,
}

impl SystemValue {
    pub fn to_array(&self) -> [f64; 4] {
        [self.eq_mu, self.eq_sigma, self.eq_tau_l, self.eq_tau_u]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// ξ(n, n_l, n_u, k): the standard normal quantile of the median of
/// Beta(n_l + k, n_u + n + 1 − k).
pub fn xi_weight(n: usize, counts: LatentCounts, k: usize) -> Result<f64> {
    if n == 0 || k == 0 || k > n {
        return Err(domain(format!("order index k = {k} outside 1..={n}")));
    }
    let counts = LatentCounts::new(counts.n_l, counts.n_u)?;
    Ok(xi_unchecked(n, counts, k))
}

fn xi_unchecked(n: usize, counts: LatentCounts, k: usize) -> f64 {
    let a = counts.n_l + k as f64;
    let b = counts.n_u + (n + 1 - k) as f64;
    // take the quantile on the side where the median has full precision
    if a > b {
        -specfns::quantile(specfns::median(b, a))
    } else {
        specfns::quantile(specfns::median(a, b))
    }
}

/// All weights ξ_1..ξ_n for one set of counts.
pub fn xi_weights(n: usize, counts: LatentCounts) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(domain("need at least one observation"));
    }
    let counts = LatentCounts::new(counts.n_l, counts.n_u)?;
    let mut w: Vec<f64> = Vec::with_capacity(n);
    // ξ is antisymmetric under k → n+1−k when the counts are equal
    let symmetric = counts.n_l == counts.n_u;
    for k in 1..=n {
        let mirror = n + 1 - k;
        if symmetric && mirror < k {
            let v = -w[mirror - 1];
            w.push(v);
        } else {
            w.push(xi_unchecked(n, counts, k));
        }
    }
    Ok(w)
}

/// Expected latent counts h_l = nΦ(τ*_l)/D and h_u = n(1 − Φ(τ*_u))/D.
pub fn latent_expectations(theta: &TnParams, n: usize) -> Result<LatentCounts> {
    if n == 0 {
        return Err(domain("need at least one observation"));
    }
    let (l, u) = theta.std_bounds();
    let ln_d = ln_normal_mass(l, u);
    let nf = n as f64;
    let n_l = nf * (ln_cdf(l) - ln_d).exp();
    let n_u = nf * (ln_cdf(-u) - ln_d).exp();
    LatentCounts::new(n_l, n_u)
        .map_err(|_| Error::InvalidParams(format!("latent counts overflow at bounds ({l}, {u})")))
}

/// UMVU estimates of (τ_l, τ_u) given (μ, σ) and the sample extremes.
///
/// `max_width`, when set, caps each correction at `max_width · σ`; without it
/// a correction that overflows is reported as an error.
pub fn umvu_bounds(
    mu: f64,
    sigma: f64,
    x_min: f64,
    x_max: f64,
    n: usize,
    max_width: Option<f64>,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(domain(format!("bound estimators need n >= 2, got {n}")));
    }
    if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(domain(format!("invalid location/scale ({mu}, {sigma})")));
    }
    if !(x_min.is_finite() && x_max.is_finite() && x_min <= x_max) {
        return Err(domain(format!("extremes ({x_min}, {x_max}) must be finite and ordered")));
    }
    if x_min == x_max {
        return Ok((x_min, x_max));
    }
    let w1 = (x_min - mu) / sigma;
    let wn = (x_max - mu) / sigma;
    let ln_mass = ln_normal_mass(w1, wn);
    let scale = ((n - 1) as f64).ln();
    let correction = |w: f64| -> Result<f64> {
        let c = (ln_mass - scale - ln_phi(w)).exp();
        match max_width {
            Some(cap) => Ok(c.min(cap)),
            None if c.is_finite() => Ok(c),
            None => Err(Error::CorrectionOverflow(w)),
        }
    };
    let tl = x_min - sigma * correction(w1)?;
    let tu = x_max + sigma * correction(wn)?;
    Ok((tl, tu))
}

fn check_sorted(data: &[f64]) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::Contract(format!(
            "estimating system needs at least 2 observations, got {}",
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("data contain non-finite values".into()));
    }
    if data.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract("data must be sorted ascending".into()));
    }
    Ok(())
}

/// Evaluates the system from precomputed weights. `data` must be sorted and
/// `xi.len() == data.len()`.
pub(crate) fn system_from_weights(
    data: &[f64],
    xi: &[f64],
    theta: &TnParams,
    max_width: Option<f64>,
) -> Result<SystemValue> {
    let n = data.len();
    let (mu, sigma) = (theta.mu(), theta.sigma());
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (&x, &w) in data.iter().zip(xi) {
        let r = x - mu - sigma * w;
        s1 += r;
        s2 += r * w;
    }
    let (tl, tu) = umvu_bounds(mu, sigma, data[0], data[n - 1], n, max_width)?;
    Ok(SystemValue {
        eq_mu: s1 / n as f64,
        eq_sigma: s2 / n as f64,
        eq_tau_l: tl - theta.tau_l(),
        eq_tau_u: tu - theta.tau_u(),
    })
}

/// Complete-data estimating system with the latent counts held fixed.
pub fn complete_system(data: &[f64], counts: LatentCounts, theta: &TnParams) -> Result<SystemValue> {
    complete_system_with(data, counts, theta, None)
}

/// As [`complete_system`], with an optional cap on the bound corrections
/// in units of σ.
pub fn complete_system_with(
    data: &[f64],
    counts: LatentCounts,
    theta: &TnParams,
    max_width: Option<f64>,
) -> Result<SystemValue> {
    check_sorted(data)?;
    let xi = xi_weights(data.len(), counts)?;
    system_from_weights(data, &xi, theta, max_width)
}

/// Observed estimating system: the complete system with the latent counts
/// replaced by their expectations under `theta`.
pub fn observed_system(data: &[f64], theta: &TnParams) -> Result<SystemValue> {
    observed_system_with(data, theta, None)
}

pub fn observed_system_with(
    data: &[f64],
    theta: &TnParams,
    max_width: Option<f64>,
) -> Result<SystemValue> {
    check_sorted(data)?;
    let counts = latent_expectations(theta, data.len())?;
    complete_system_with(data, counts, theta, max_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truncnorm::std_quantile;
    use approx::assert_abs_diff_eq;

    const CASES: [(f64, f64); 6] = [(-3.0, -1.0), (-2.0, 1.0), (-2.0, 2.0), (-1.0, 1.0), (-1.0, 2.0), (1.0, 3.0)];

    fn th(mu: f64, s: f64, l: f64, u: f64) -> TnParams {
        TnParams::new(mu, s, l, u).unwrap()
    }

    #[test]
    fn xi_examples() {
        let z = LatentCounts::zero();
        assert_eq!(xi_weight(1, z, 1).unwrap(), 0.0);
        assert_abs_diff_eq!(xi_weight(3, z, 2).unwrap(), 0.0, epsilon = 1e-15);
        // mpmath: npdf-quantile of 1 - 2**-0.5
        assert_abs_diff_eq!(xi_weight(2, z, 1).unwrap(), -0.544_952_135_617_360_5, epsilon = 1e-13);
        assert!(xi_weight(3, z, 0).is_err());
        assert!(xi_weight(3, z, 4).is_err());
    }

    #[test]
    fn cached_weights_match_direct() {
        for counts in [LatentCounts::zero(), LatentCounts::new(3.5, 3.5).unwrap(), LatentCounts::new(0.2, 7.1).unwrap()] {
            let w = xi_weights(17, counts).unwrap();
            for k in 1..=17 {
                assert_abs_diff_eq!(w[k - 1], xi_weight(17, counts, k).unwrap(), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn latent_examples() {
        let c = latent_expectations(&th(0.0, 1.0, -1.0, 1.0), 100).unwrap();
        assert_eq!(c.n_l, c.n_u);
        // mpmath: 100*ncdf(-1)/(ncdf(1)-ncdf(-1))
        assert_abs_diff_eq!(c.n_l, 23.239_738_674_577_204, epsilon = 1e-10);
        let c = latent_expectations(&th(0.0, 1.0, -8.0, 8.0), 100).unwrap();
        assert!(c.n_l < 1e-12 && c.n_u < 1e-12);
        // deep in the tail the count is huge but representable
        let c = latent_expectations(&th(0.0, 1.0, 8.0, 9.0), 10).unwrap();
        assert!(c.n_l.is_finite() && c.n_l > 1e15);
        assert!(latent_expectations(&th(0.0, 1.0, 40.0, 41.0), 10).is_err());
    }

    #[test]
    fn umvu_examples() {
        assert_eq!(umvu_bounds(0.0, 1.0, 0.3, 0.3, 5, None).unwrap(), (0.3, 0.3));
        let (tl, tu) = umvu_bounds(0.0, 1.0, -1.0, 1.0, 11, None).unwrap();
        // mpmath: -1 - (ncdf(1)-ncdf(-1))/(10*npdf(1))
        assert_abs_diff_eq!(tl, -1.282_137_226_928_489_6, epsilon = 1e-12);
        assert_abs_diff_eq!(tu, -tl, epsilon = 1e-14);
        let (a, _) = umvu_bounds(0.0, 1.0, -1.0, 1.0, 1001, None).unwrap();
        assert!(a > tl && a < -1.0);
        assert!(umvu_bounds(0.0, 1.0, -1.0, 1.0, 1, None).is_err());
    }

    #[test]
    fn umvu_overflow_guard() {
        let r = umvu_bounds(0.0, 1e-3, -1.0, 1.0, 10, None);
        assert!(matches!(r, Err(Error::CorrectionOverflow(_))));
        let (tl, tu) = umvu_bounds(0.0, 1e-3, -1.0, 1.0, 10, Some(10.0)).unwrap();
        assert_abs_diff_eq!(tl, -1.01, epsilon = 1e-12);
        assert_abs_diff_eq!(tu, 1.01, epsilon = 1e-12);
    }

    #[test]
    fn weight_bracketing() {
        for &(l, u) in &CASES {
            let t = th(0.0, 1.0, l, u);
            for n in [5usize, 20, 100] {
                let counts = latent_expectations(&t, n).unwrap();
                let w = xi_weights(n, counts).unwrap();
                for k in 1..=n {
                    let lo = std_quantile(l, u, (k - 1) as f64 / n as f64).unwrap();
                    let hi = std_quantile(l, u, k as f64 / n as f64).unwrap();
                    assert!(lo < w[k - 1] && w[k - 1] < hi, "case ({l},{u}) n={n} k={k}");
                }
                assert!(w.windows(2).all(|p| p[0] < p[1]));
            }
        }
    }

    #[test]
    fn riemann_sums_approach_moments() {
        let n = 10_000;
        for &(l, u) in &CASES {
            let t = th(0.0, 1.0, l, u);
            let m = t.std_moments();
            let w = xi_weights(n, latent_expectations(&t, n).unwrap()).unwrap();
            let s1 = w.iter().sum::<f64>() / n as f64;
            let s2 = w.iter().map(|x| x * x).sum::<f64>() / n as f64;
            assert!((s1 - m.alpha1).abs() < 5e-3, "case ({l},{u})");
            assert!((s2 - m.alpha2).abs() < 5e-3, "case ({l},{u})");
        }
    }

    #[test]
    fn constructed_root() {
        let (mu, sigma) = (0.4, 1.7);
        let counts = LatentCounts::new(2.0, 5.0).unwrap();
        let xi = xi_weights(9, counts).unwrap();
        let data: Vec<f64> = xi.iter().map(|w| mu + sigma * w).collect();
        let (tl, tu) = umvu_bounds(mu, sigma, data[0], data[8], 9, None).unwrap();
        let v = complete_system(&data, counts, &th(mu, sigma, tl, tu)).unwrap();
        assert!(v.norm() < 1e-14, "{v:?}");
    }

    #[test]
    fn scaling_scales_components() {
        let data = [-0.8, -0.3, 0.1, 0.2, 0.9, 1.3];
        let counts = LatentCounts::new(1.2, 0.7).unwrap();
        let t = th(0.1, 0.9, -1.5, 2.0);
        let c = 3.0;
        let scaled: Vec<f64> = data.iter().map(|x| c * x).collect();
        let ts = th(c * 0.1, c * 0.9, c * -1.5, c * 2.0);
        let a = complete_system(&data, counts, &t).unwrap().to_array();
        let b = complete_system(&scaled, counts, &ts).unwrap().to_array();
        // the σ-equation is a mean of residual·ξ, linear in the data scale
        for i in 0..4 {
            assert_abs_diff_eq!(b[i], c * a[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn observed_is_complete_at_expected_counts() {
        let data = [-0.8, -0.3, 0.1, 0.2, 0.9, 1.3];
        let t = th(0.1, 0.9, -1.5, 2.0);
        let counts = latent_expectations(&t, data.len()).unwrap();
        assert_eq!(
            observed_system(&data, &t).unwrap(),
            complete_system(&data, counts, &t).unwrap()
        );
    }

    #[test]
    fn reflection_negates_location_equation() {
        let data = [-0.9, -0.5, 0.05, 0.3, 1.1];
        let t = th(0.2, 1.1, -1.4, 1.8);
        let refl: Vec<f64> = data.iter().rev().map(|x| -x).collect();
        let tr = th(-0.2, 1.1, -1.8, 1.4);
        let a = observed_system(&data, &t).unwrap();
        let b = observed_system(&refl, &tr).unwrap();
        assert_abs_diff_eq!(a.eq_mu, -b.eq_mu, epsilon = 1e-13);
        assert_abs_diff_eq!(a.eq_sigma, b.eq_sigma, epsilon = 1e-13);
        assert_abs_diff_eq!(a.eq_tau_l, -b.eq_tau_u, epsilon = 1e-13);
    }

    #[test]
    fn unsorted_data_is_a_contract_error() {
        let t = th(0.0, 1.0, -2.0, 2.0);
        let r = observed_system(&[0.5, -0.5, 0.0], &t);
        assert!(matches!(r, Err(Error::Contract(_))));
        assert!(matches!(observed_system(&[0.5], &t), Err(Error::Contract(_))));
    }
}
