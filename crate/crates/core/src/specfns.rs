//! Scalar special functions: the standard normal pdf, cdf and quantile, pdf
//! derivatives, and the regularized incomplete beta function with its
//! median inversion.
//!
//! The checked entry points (`std_normal_*`, `reg_inc_beta`, `beta_median`)
//! validate their arguments. The crate-internal helpers `phi`, `cdf`, `sf`
//! and `quantile` skip validation for use in inner loops.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub(crate) fn phi(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub(crate) fn ln_phi(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Lower tail Φ(x).
#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), without cancellation for large x.
#[inline]
pub(crate) fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Φ(b) − Φ(a) for a ≤ b, using whichever tail avoids cancellation.
pub(crate) fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        sf(a) - sf(b)
    } else if b <= 0.0 {
        cdf(b) - cdf(a)
    } else {
        1.0 - cdf(a) - sf(b)
    }
}

/// ln Φ(x), accurate far into the lower tail where Φ underflows.
pub(crate) fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return cdf(x).ln();
    }
    // Mills ratio asymptotic series: Φ(x) ~ φ(x)/|x| · Σ (−1)^k (2k−1)!! / x^{2k}
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) / x2;
        sum += term;
    }
    ln_phi(x) - (-x).ln() + sum.ln()
}

/// ln(Φ(b) − Φ(a)) for a < b, finite whenever the mass is positive in exact
/// arithmetic (including bounds deep in either tail).
pub(crate) fn ln_normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        // mirror into the lower tail
        return ln_normal_mass(-b, -a);
    }
    if b > 0.0 {
        return normal_mass(a, b).ln();
    }
    let lb = ln_cdf(b);
    let la = ln_cdf(a);
    lb + (-(la - lb).exp()).ln_1p()
}

/// Standard normal inverse cdf without argument checks; `p` must lie in (0, 1).
pub(crate) fn quantile(p: f64) -> f64 {
    if p > 0.5 {
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

// Rational initial approximation (relative error about 1e-9) followed by two
// Halley refinements against the erfc-based cdf. Requires 0 < p <= 0.5.
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let e = cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Standard normal density φ(x).
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("normal pdf argument must be finite, got {x}")));
    }
    Ok(phi(x))
}

/// Derivatives of φ of order 1, 2 or 3.
pub fn std_normal_pdf_deriv(x: f64, order: u32) -> Result<f64> {
    let p = std_normal_pdf(x)?;
    match order {
        1 => Ok(-x * p),
        2 => Ok((x * x - 1.0) * p),
        3 => Ok((3.0 * x - x * x * x) * p),
        _ => Err(domain(format!("derivative order must be 1, 2 or 3, got {order}"))),
    }
}

/// Standard normal distribution function Φ(x); ±∞ map to 1 and 0.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(domain("normal cdf argument is NaN"));
    }
    Ok(cdf(x))
}

/// Standard normal quantile Φ⁻¹(p) for 0 < p < 1.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("probability must lie in [0, 1], got {p}")));
    }
    if p == 0.0 || p == 1.0 {
        return Err(Error::InfiniteQuantile(p));
    }
    Ok(quantile(p))
}

// Remainder of Stirling's series: ln Γ(z) − [(z − ½) ln z − z + ½ ln 2π].
fn stirling_remainder(z: f64) -> f64 {
    if z >= 10.0 {
        let r = 1.0 / z;
        let r2 = r * r;
        r * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 * (1.0 / 1188.0)))))
    } else {
        libm::lgamma(z) - ((z - 0.5) * z.ln() - z + LN_SQRT_2PI)
    }
}

// a ln(x / x0) with x0 = a/(a+b), evaluated through ln_1p near x0.
fn scaled_log_ratio(a: f64, x: f64, x0: f64) -> f64 {
    let d = (x - x0) / x0;
    if d.abs() < 0.5 {
        a * d.ln_1p()
    } else {
        a * (x.ln() - x0.ln())
    }
}

/// ln of x^a (1−x)^b / B(a, b), arranged so large a, b do not cancel.
fn ln_beta_power(a: f64, b: f64, x: f64) -> f64 {
    let s = a + b;
    let x0 = a / s;
    let y0 = b / s;
    let centre = 0.5 * (a * b / s).ln() - LN_SQRT_2PI - stirling_remainder(a)
        - stirling_remainder(b)
        + stirling_remainder(s);
    scaled_log_ratio(a, x, x0) + scaled_log_ratio(b, 1.0 - x, y0) + centre
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

pub(crate) fn ibeta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_beta_power(a, b, x).exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_beta_power(b, a, 1.0 - x).exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    check_shape(a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("incomplete beta argument must lie in [0, 1], got {x}")));
    }
    Ok(ibeta(a, b, x))
}

fn check_shape(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(domain(format!("beta shapes must be finite and positive, got ({a}, {b})")));
    }
    Ok(())
}

/// Median of the Beta(a, b) distribution: the root of I_x(a, b) = 1/2.
pub fn beta_median(a: f64, b: f64) -> Result<f64> {
    check_shape(a, b)?;
    Ok(median(a, b))
}

pub(crate) fn median(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.5;
    }
    // Work on the side where the median is below one half, where x carries
    // full relative precision.
    if a > b {
        // a median within 2^-53 of one rounds to 1; keep the open interval
        return (1.0 - median(b, a)).min(1.0 - f64::EPSILON / 2.0);
    }
    let mut x = if a >= 1.0 {
        (a - 1.0 / 3.0) / (a + b - 2.0 / 3.0)
    } else {
        a / (a + b)
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let f = ibeta(a, b, x) - 0.5;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // f' = x^(a-1)(1-x)^(b-1)/B(a,b); Halley uses f''/f' = (a-1)/x - (b-1)/(1-x)
        let dens = (ln_beta_power(a, b, x) - x.ln() - (1.0 - x).ln()).exp();
        let newton = if dens > 0.0 && dens.is_finite() { f / dens } else { f64::NAN };
        if newton.abs() <= 1e-15 * x {
            // below the resolution of x; the bracket test would reject it
            break;
        }
        // a Newton step leaving the bracket means the local model is useless
        // (flat tails of the density); bisect instead
        let next = if x - newton > lo && x - newton < hi {
            let curv = (a - 1.0) / x - (b - 1.0) / (1.0 - x);
            let denom = 1.0 - 0.5 * newton * curv;
            let halley = if denom.abs() > 0.5 { x - newton / denom } else { x - newton };
            if halley > lo && halley < hi {
                halley
            } else {
                x - newton
            }
        } else {
            0.5 * (lo + hi)
        };
        let delta = (next - x).abs();
        x = next;
        // Halley converges cubically: once the step is below 1e-5 standard
        // deviations of the Beta law the remaining error is below 1e-15 of one.
        let spread = (x * (1.0 - x) / (a + b + 1.0)).sqrt();
        if delta <= 1e-5 * spread.min(x) || hi - lo <= 1e-16 {
            break;
        }
    }
    x.max(f64::from_bits(1))
}
