//! The Expectation-Solution iteration: impute the latent counts from the
//! current estimate, then solve the complete-data system for a new one.

use crate::error::{domain, Error, Result};
use crate::estimating::{
    latent_expectations, observed_system_with, umvu_bounds, xi_weights, LatentCounts,
};
use crate::truncnorm::TnParams;

#[derive(Debug, Clone, PartialEq)]
pub struct EsConfig {
    /// Stop when |Δℓ| / max(1, |ℓ_prev|) falls below this.
    pub tol_rel_loglik: f64,
    pub max_iters: usize,
    pub mu_box: (f64, f64),
    pub sigma_box: (f64, f64),
    /// Bound corrections are capped at this many σ.
    pub width_cap_multiplier: f64,
    pub record_trace: bool,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            tol_rel_loglik: 1e-6,
            max_iters: 500,
            mu_box: (-10.0, 10.0),
            sigma_box: (1e-3, 10.0),
            width_cap_multiplier: 10.0,
            record_trace: false,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        let (ml, mh) = self.mu_box;
        let (sl, sh) = self.sigma_box;
        if !(self.tol_rel_loglik > 0.0) {
            return Err(domain("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(domain("max_iters must be positive"));
        }
        if !(ml.is_finite() && mh.is_finite() && ml <= mh) {
            return Err(domain(format!("empty mu box ({ml}, {mh})")));
        }
        if !(sl > 0.0 && sh.is_finite() && sl <= sh) {
            return Err(domain(format!("sigma box ({sl}, {sh}) must be positive and nonempty")));
        }
        if !(self.width_cap_multiplier > 0.0) {
            return Err(domain("width cap multiplier must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EsStatus {
    Converged,
    MaxIters,
    /// A box constraint on μ or σ is active at the returned estimate.
    AtBoundary,
}

impl EsStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            EsStatus::Converged => "Converged",
            EsStatus::MaxIters => "MaxIters",
            EsStatus::AtBoundary => "AtBoundary",
        }
    }
}

impl std::fmt::Display for EsStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub theta: TnParams,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsResult {
    pub theta_hat: TnParams,
    pub residual_norm: f64,
    pub iterations: usize,
    pub status: EsStatus,
    /// Whether the likelihood criterion was met, independent of boundary status.
    pub converged: bool,
    pub loglik: f64,
    pub trace: Option<Vec<TraceEntry>>,
}

/// E-step: the latent counts implied by `theta`.
pub fn e_step(theta: &TnParams, n: usize) -> Result<LatentCounts> {
    latent_expectations(theta, n)
}

/// S-step: OLS of the order statistics on their weights gives (μ, σ), which
/// are projected into the boxes; the bounds follow from the UMVU estimators.
pub fn s_step(data: &[f64], counts: LatentCounts, config: &EsConfig) -> Result<TnParams> {
    let n = data.len();
    if n < 2 {
        return Err(domain(format!("S-step needs at least 2 observations, got {n}")));
    }
    if data.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract("data must be sorted ascending".into()));
    }
    let xi = xi_weights(n, counts)?;
    let nf = n as f64;
    let xbar = data.iter().sum::<f64>() / nf;
    let wbar = xi.iter().sum::<f64>() / nf;
    let mut sww = 0.0;
    let mut swx = 0.0;
    for (&x, &w) in data.iter().zip(&xi) {
        sww += (w - wbar) * (w - wbar);
        swx += (w - wbar) * (x - xbar);
    }
    if !(sww > 0.0) {
        return Err(Error::Invariant("regression weights have zero spread".into()));
    }
    let sigma = (swx / sww).clamp(config.sigma_box.0, config.sigma_box.1);
    let mu = (xbar - sigma * wbar).clamp(config.mu_box.0, config.mu_box.1);
    let (tl, tu) = umvu_bounds(
        mu,
        sigma,
        data[0],
        data[n - 1],
        n,
        Some(config.width_cap_multiplier),
    )?;
    TnParams::new(mu, sigma, tl, tu)
}

fn at_boundary(theta: &TnParams, config: &EsConfig) -> bool {
    let (mu, sigma) = (theta.mu(), theta.sigma());
    mu <= config.mu_box.0 || mu >= config.mu_box.1 || sigma <= config.sigma_box.0 || sigma >= config.sigma_box.1
}

/// Starting value (x̄, s, x_min, x_max) for sorted data.
pub fn default_init(sorted: &[f64]) -> Result<TnParams> {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    TnParams::new(mean, var.sqrt(), sorted[0], sorted[sorted.len() - 1])
}

/// Runs the ES algorithm on `data` (any order) from `init`, or from the
/// sample moments and extremes when `init` is `None`.
pub fn fit(data: &[f64], init: Option<TnParams>, config: &EsConfig) -> Result<EsResult> {
    config.validate()?;
    let n = data.len();
    if n < 3 {
        return Err(domain(format!("fitting needs at least 3 observations, got {n}")));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(domain("data contain non-finite values"));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Err(Error::Degenerate(format!("all {n} observations equal {}", sorted[0])));
    }

    let mut theta = match init {
        Some(t) => t,
        None => default_init(&sorted)?,
    };
    let mut ll_prev = theta.log_likelihood(&sorted)?;
    let mut trace = config.record_trace.then(|| {
        vec![TraceEntry { iteration: 0, theta, loglik: ll_prev }]
    });

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let counts = e_step(&theta, n)?;
        let next = s_step(&sorted, counts, config)?;
        let ll = next.log_likelihood(&sorted)?;
        if let Some(t) = trace.as_mut() {
            t.push(TraceEntry { iteration: iterations, theta: next, loglik: ll });
        }
        theta = next;
        // an infinite previous value leaves the relative change undefined
        let done = ll_prev.is_finite() && (ll - ll_prev).abs() / ll_prev.abs().max(1.0) < config.tol_rel_loglik;
        ll_prev = ll;
        if done {
            converged = true;
            break;
        }
    }

    let residual_norm =
        observed_system_with(&sorted, &theta, Some(config.width_cap_multiplier))?.norm();
    let status = if at_boundary(&theta, config) {
        EsStatus::AtBoundary
    } else if converged {
        EsStatus::Converged
    } else {
        EsStatus::MaxIters
    };
    Ok(EsResult {
        theta_hat: theta,
        residual_norm,
        iterations,
        status,
        converged,
        loglik: ll_prev,
        trace,
    })
}
