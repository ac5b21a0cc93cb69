//! Normal distribution and the closed-form asymptotic power quantities.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Power of a test at a local parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub theta: f64,
    pub power: f64,
}

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

// erf by its everywhere-positive Taylor form: 2/√π e^{-z²} Σ 2^k z^{2k+1} / (2k+1)!!.
fn erf_series(z: f64) -> f64 {
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    let mut k = 0.0;
    while term > sum * 1e-17 {
        k += 1.0;
        term *= 2.0 * z2 / (2.0 * k + 1.0);
        sum += term;
    }
    FRAC_2_SQRT_PI * (-z2).exp() * sum
}

// erfc by its continued fraction (modified Lentz), for z > 2.
fn erfc_fraction(z: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 * 0.5;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-z * z).exp() / (PI.sqrt() * f)
}

fn erfc(z: f64) -> f64 {
    if z < 0.0 {
        2.0 - erfc(-z)
    } else if z <= 2.0 {
        1.0 - erf_series(z)
    } else {
        erfc_fraction(z)
    }
}

fn cdf64(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

fn pdf64(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Standard normal CDF `Φ`.
pub fn normal_cdf<T: Real>(x: T) -> T {
    T::lit(cdf64(x.as_f64()))
}

/// `Φ^{-1}(p)`; `DomainError` unless `0 < p < 1`.
pub fn normal_quantile<T: Real>(p: T) -> Result<T> {
    let p = p.as_f64();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("quantile level {p} not in (0, 1)")));
    }
    let x = acklam(p);
    // One Halley step on Φ(x) − p, using the tail that keeps relative accuracy.
    let e = if x < 0.0 { cdf64(x) - p } else { (1.0 - p) - cdf64(-x) };
    let u = e / pdf64(x);
    Ok(T::lit(x - u / (1.0 + 0.5 * x * u)))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::DomainError(format!("alpha = {alpha} not in (0, 1)")))
    }
}

fn check_sigma(sigma1: f64) -> Result<()> {
    if sigma1 > 0.0 && sigma1.is_finite() {
        Ok(())
    } else {
        Err(Error::DegenerateGradient)
    }
}

/// `Φ(θ/σ1 − u_{1−α})`.
pub fn power_one_sided<T: Real>(theta: T, sigma1: T, alpha: T) -> Result<T> {
    let (s, a) = (sigma1.as_f64(), alpha.as_f64());
    check_sigma(s)?;
    check_alpha(a)?;
    let u: f64 = normal_quantile(1.0 - a)?;
    Ok(T::lit(cdf64(theta.as_f64() / s - u)))
}

/// `Φ(θ/σ1 − u_{1−α/2}) + Φ(−θ/σ1 − u_{1−α/2})`.
pub fn power_two_sided<T: Real>(theta: T, sigma1: T, alpha: T) -> Result<T> {
    let (s, a) = (sigma1.as_f64(), alpha.as_f64());
    check_sigma(s)?;
    check_alpha(a)?;
    let u: f64 = normal_quantile(1.0 - 0.5 * a)?;
    let z = theta.as_f64() / s;
    Ok(T::lit(cdf64(z - u) + cdf64(-z - u)))
}

/// Allocation `‖k̃2‖ / (‖k̃1‖ + ‖k̃2‖)` that maximizes asymptotic power.
pub fn d_opt<T: Real>(norm1: T, norm2: T) -> Result<T> {
    if !(norm1 > T::zero() && norm2 > T::zero()) {
        return Err(Error::DegenerateGradient);
    }
    Ok(norm2 / (norm1 + norm2))
}

/// Envelope power `Φ(tσ − u_{1−α})`, `σ = ((1−d)‖g1‖² + d‖g2‖²)^{1/2}`, of the most
/// powerful test against the curve with tangent `g`.
pub fn np_benchmark_power<T: Real>(t: T, g1_norm_sq: T, g2_norm_sq: T, d: T, alpha: T) -> Result<T> {
    let (d, a) = (d.as_f64(), alpha.as_f64());
    check_alpha(a)?;
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::InvalidArgument(format!("d = {d} not in (0, 1)")));
    }
    let sigma = ((1.0 - d) * g1_norm_sq.as_f64() + d * g2_norm_sq.as_f64()).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateTangent);
    }
    let u: f64 = normal_quantile(1.0 - a)?;
    Ok(T::lit(cdf64(t.as_f64() * sigma - u)))
}

/// Hellinger distance `(1 − exp(−‖h1 − h2‖²/8))^{1/2}` between two points of a Gaussian shift.
pub fn gauss_shift_hellinger<T: Real>(h_distance: T) -> Result<T> {
    let h = h_distance.as_f64();
    if !(h >= 0.0) {
        return Err(Error::DomainError(format!("distance {h} is negative")));
    }
    Ok(T::lit((-(-h * h / 8.0).exp_m1()).sqrt()))
}
