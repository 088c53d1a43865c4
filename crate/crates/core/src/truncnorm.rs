//! The four-parameter truncated normal distribution TN(μ, σ, τ_l, τ_u).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::specfns::{self, ln_normal_mass, ln_phi, normal_mass};

/// Parameters of a truncated normal: parent location and scale plus the
/// truncation bounds. Always valid once constructed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TnParams {
    mu: f64,
    sigma: f64,
    tau_l: f64,
    tau_u: f64,
}

impl TnParams {
    pub fn new(mu: f64, sigma: f64, tau_l: f64, tau_u: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && tau_l.is_finite() && tau_u.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "all parameters must be finite: ({mu}, {sigma}, {tau_l}, {tau_u})"
            )));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidParams(format!("sigma must be positive, got {sigma}")));
        }
        if tau_l >= tau_u {
            return Err(Error::InvalidParams(format!(
                "lower bound {tau_l} must be below upper bound {tau_u}"
            )));
        }
        let p = TnParams { mu, sigma, tau_l, tau_u };
        let (l, u) = p.std_bounds();
        if !(l.is_finite() && u.is_finite() && l < u) {
            return Err(Error::InvalidParams(format!(
                "standardized bounds ({l}, {u}) are not finite and ordered"
            )));
        }
        Ok(p)
    }

    /// Builds from a `[mu, sigma, tau_l, tau_u]` array.
    pub fn from_array(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn tau_l(&self) -> f64 {
        self.tau_l
    }
    pub fn tau_u(&self) -> f64 {
        self.tau_u
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.mu, self.sigma, self.tau_l, self.tau_u]
    }

    /// Standardized bounds (τ*_l, τ*_u).
    pub fn std_bounds(&self) -> (f64, f64) {
        (
            (self.tau_l - self.mu) / self.sigma,
            (self.tau_u - self.mu) / self.sigma,
        )
    }

    /// Probability mass of the parent normal inside the bounds.
    pub fn mass(&self) -> f64 {
        let (l, u) = self.std_bounds();
        normal_mass(l, u)
    }

    fn ln_mass(&self) -> f64 {
        let (l, u) = self.std_bounds();
        ln_normal_mass(l, u)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.tau_l && x <= self.tau_u
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mu) / self.sigma;
        ln_phi(z) - self.sigma.ln() - self.ln_mass()
    }

    /// Density; exactly zero outside `[tau_l, tau_u]`.
    pub fn density(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        self.ln_density(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.tau_l {
            return 0.0;
        }
        if x >= self.tau_u {
            return 1.0;
        }
        let (l, u) = self.std_bounds();
        let z = (x - self.mu) / self.sigma;
        (normal_mass(l, z) / normal_mass(l, u)).clamp(0.0, 1.0)
    }

    /// Inverse cdf for `p` in `[0, 1]`; the endpoints map to the bounds.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("probability must lie in [0, 1], got {p}")));
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.tau_l;
        }
        if p >= 1.0 {
            return self.tau_u;
        }
        let (l, u) = self.std_bounds();
        let z = std_quantile_unchecked(l, u, p);
        (self.mu + self.sigma * z).clamp(self.tau_l, self.tau_u)
    }

    /// `n` draws sorted ascending; identical for identical seeds.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    /// `n` inverse-cdf draws from the supplied generator, sorted ascending.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(domain("sample size must be at least 1"));
        }
        let mut out: Vec<f64> = (0..n)
            .map(|_| self.quantile_unchecked(rng.gen::<f64>()))
            .collect();
        out.sort_by(f64::total_cmp);
        Ok(out)
    }

    /// Sum of log densities, or `f64::NEG_INFINITY` when any point falls
    /// outside the support.
    pub fn log_likelihood(&self, data: &[f64]) -> Result<f64> {
        if data.is_empty() {
            return Err(domain("log-likelihood needs at least one observation"));
        }
        if data.iter().any(|&x| !self.contains(x)) {
            return Ok(f64::NEG_INFINITY);
        }
        let n = data.len() as f64;
        let quad: f64 = data
            .iter()
            .map(|&x| {
                let z = (x - self.mu) / self.sigma;
                ln_phi(z)
            })
            .sum();
        Ok(quad - n * (self.sigma.ln() + self.ln_mass()))
    }

    /// Raw moments of the standardized law at this parameter's bounds.
    pub fn std_moments(&self) -> StdMoments {
        let (l, u) = self.std_bounds();
        moments_unchecked(l, u)
    }

    /// Mean of the distribution, μ + σ α₁.
    pub fn mean(&self) -> f64 {
        self.mu + self.sigma * self.std_moments().alpha1
    }
}

/// Quantile J(p) of the standard truncated normal TN(0, 1, l, u).
pub fn std_quantile(l: f64, u: f64, p: f64) -> Result<f64> {
    if !(l.is_finite() && u.is_finite() && l < u) {
        return Err(domain(format!("standardized bounds ({l}, {u}) must be finite and ordered")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(std_quantile_unchecked(l, u, p))
}

pub(crate) fn std_quantile_unchecked(l: f64, u: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return l;
    }
    if p >= 1.0 {
        return u;
    }
    let z = if l > 0.0 {
        // both bounds in the upper tail: invert through survival probabilities
        let sl = specfns::sf(l);
        let su = specfns::sf(u);
        -specfns::quantile(sl - p * (sl - su))
    } else {
        let cl = specfns::cdf(l);
        specfns::quantile(cl + p * normal_mass(l, u))
    };
    z.clamp(l, u)
}

/// First four raw moments α₁..α₄ of TN(0, 1, l, u).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdMoments {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
}

impl StdMoments {
    pub fn variance(&self) -> f64 {
        self.alpha2 - self.alpha1 * self.alpha1
    }

    /// Covariance matrix of (Z, Z²).
    pub fn cov_matrix(&self) -> [[f64; 2]; 2] {
        let c = self.alpha3 - self.alpha1 * self.alpha2;
        [
            [self.variance(), c],
            [c, self.alpha4 - self.alpha2 * self.alpha2],
        ]
    }
}

/// Moments of the standard truncated normal from the derivatives of its
/// moment generating function at zero.
pub fn std_moments(l: f64, u: f64) -> Result<StdMoments> {
    if !(l.is_finite() && u.is_finite() && l < u) {
        return Err(domain(format!("standardized bounds ({l}, {u}) must be finite and ordered")));
    }
    Ok(moments_unchecked(l, u))
}

fn moments_unchecked(l: f64, u: f64) -> StdMoments {
    let ln_d = ln_normal_mass(l, u);
    // φ(b)/D, kept finite when both φ and D underflow
    let ratio = |b: f64| (ln_phi(b) - ln_d).exp();
    let (ru, rl) = (ratio(u), ratio(l));
    let d0 = ru - rl;
    let d1 = -u * ru + l * rl;
    let d2 = (u * u - 1.0) * ru - (l * l - 1.0) * rl;
    let d3 = (3.0 * u - u * u * u) * ru - (3.0 * l - l * l * l) * rl;
    StdMoments {
        alpha1: -d0,
        alpha2: 1.0 + d1,
        alpha3: -3.0 * d0 - d2,
        alpha4: 3.0 + 6.0 * d1 + d3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn th(mu: f64, s: f64, l: f64, u: f64) -> TnParams {
        TnParams::new(mu, s, l, u).unwrap()
    }

    #[test]
    fn rejects_invalid() {
        assert!(TnParams::new(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(TnParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(TnParams::new(f64::NAN, 1.0, -1.0, 1.0).is_err());
        assert!(TnParams::new(0.0, 1.0, -1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn density_examples() {
        let t = th(0.0, 1.0, -1.0, 1.0);
        assert_eq!(t.density(2.0), 0.0);
        // mpmath: npdf(0)/(ncdf(1)-ncdf(-1))
        assert_abs_diff_eq!(t.density(0.0), 0.584_368_567_256_816_6, epsilon = 1e-14);
    }

    #[test]
    fn cdf_examples() {
        let t = th(0.0, 1.0, -1.0, 1.0);
        assert_abs_diff_eq!(t.cdf(0.0), 0.5, epsilon = 1e-15);
        assert_eq!(t.cdf(1.0), 1.0);
        assert_eq!(t.cdf(-1.0), 0.0);
        let t = th(2.0, 3.0, -1.0, 5.0);
        assert_abs_diff_eq!(t.cdf(2.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn quantile_examples() {
        let t = th(0.0, 1.0, -1.0, 1.0);
        assert_abs_diff_eq!(t.quantile(0.5).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(t.quantile(0.0).unwrap(), -1.0);
        assert_eq!(t.quantile(1.0).unwrap(), 1.0);
        assert!(t.quantile(1.1).is_err());
        // mpmath: inverse of ncdf at ncdf(-2) + 0.25 (ncdf(1) - ncdf(-2))
        let t = th(0.0, 1.0, -2.0, 1.0);
        assert_abs_diff_eq!(t.quantile(0.25).unwrap(), -0.747_440_723_964_059_2, epsilon = 1e-12);
    }

    #[test]
    fn upper_tail_quantile_keeps_precision() {
        let t = th(0.0, 1.0, 9.0, 12.0);
        for &p in &[0.1, 0.5, 0.9] {
            let x = t.quantile(p).unwrap();
            assert!((t.cdf(x) - p).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_supported() {
        let t = th(0.0, 1.0, -2.0, 2.0);
        let a = t.sample(500, 42).unwrap();
        let b = t.sample(500, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| (-2.0..=2.0).contains(&x)));
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert_ne!(a, t.sample(500, 43).unwrap());
        assert!(t.sample(0, 1).is_err());
    }

    #[test]
    fn log_likelihood_examples() {
        let t = th(0.0, 1.0, -1.0, 1.0);
        assert_abs_diff_eq!(t.log_likelihood(&[0.0]).unwrap(), -0.537_223_386_902_546_7, epsilon = 1e-14);
        assert_eq!(t.log_likelihood(&[0.0, 1.5]).unwrap(), f64::NEG_INFINITY);
        assert!(t.log_likelihood(&[]).is_err());
        let data = [-0.5, 0.1, 0.7];
        let direct: f64 = data.iter().map(|&x| t.density(x).ln()).sum();
        assert_abs_diff_eq!(t.log_likelihood(&data).unwrap(), direct, epsilon = 1e-13);
    }

    #[test]
    fn log_likelihood_far_from_parent() {
        // bounds 20 sigma below the parent mean: the plain mass underflows
        let t = th(10.0, 0.25, 4.0, 5.0);
        let ll = t.log_likelihood(&[4.2, 4.5]).unwrap();
        assert!(ll.is_finite());
    }

    #[test]
    fn moment_examples() {
        let m = std_moments(-1.5, 1.5).unwrap();
        assert_abs_diff_eq!(m.alpha1, 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(m.alpha3, 0.0, epsilon = 1e-15);
        // mpmath: 1 - 2 npdf(1)/(ncdf(1)-ncdf(-1))
        let m = std_moments(-1.0, 1.0).unwrap();
        assert_abs_diff_eq!(m.alpha2, 0.291_125_094_772_793_2, epsilon = 1e-14);
        let m = std_moments(-8.0, 8.0).unwrap();
        assert_abs_diff_eq!(m.alpha1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.alpha2, 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(m.alpha3, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.alpha4, 3.0, epsilon = 1e-9);
        assert!(std_moments(1.0, 1.0).is_err());
    }
}
