//! Zero-mean score functions, the local curves they generate, and the LAN diagnostics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::GradientPair;
use crate::measures::{Measure, ProductSample};
use crate::quadrature;
use crate::scalar::Real;

/// A centered, square-integrable function on the support of `base`, constant on each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent<T: Real> {
    base: Arc<Measure<T>>,
    values: Vec<T>,
    norm: T,
}

fn weighted_mean<T: Real>(masses: &[T], values: &[T]) -> T {
    masses.iter().zip(values).map(|(&m, &v)| m * v).sum()
}

impl<T: Real> Tangent<T> {
    /// Takes values aligned with the base's atoms or segments. The mean must vanish within 1e-10.
    pub fn new(base: impl Into<Arc<Measure<T>>>, values: Vec<T>) -> Result<Self> {
        let base = base.into();
        Self::check_len(&base, &values)?;
        let mean = weighted_mean(base.cell_masses(), &values);
        if mean.abs() > T::tol(1e-10) {
            return Err(Error::InvalidTangent(format!("mean is {mean}, not 0")));
        }
        Ok(Self::from_centered(base, values.into_iter().map(|v| v - mean).collect()))
    }

    /// Subtracts the mean of per-cell values.
    pub fn centered(base: impl Into<Arc<Measure<T>>>, raw: Vec<T>) -> Result<Self> {
        let base = base.into();
        Self::check_len(&base, &raw)?;
        let mean = weighted_mean(base.cell_masses(), &raw);
        Ok(Self::from_centered(base, raw.into_iter().map(|v| v - mean).collect()))
    }

    /// `raw − ∫raw dP`. On segments `raw` is first replaced by its average over each segment.
    pub fn center(base: impl Into<Arc<Measure<T>>>, raw: impl Fn(T) -> T) -> Result<Self> {
        let base = base.into();
        let values = match &*base {
            Measure::Discrete(d) => {
                let mut out = Vec::with_capacity(d.locations().len());
                for &x in d.locations() {
                    let v = raw(x);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteFunctionValue { at: x.as_f64() });
                    }
                    out.push(v);
                }
                out
            }
            Measure::PiecewiseUniform(p) => {
                let b = p.breaks();
                let mut out = Vec::with_capacity(b.len() - 1);
                for w in b.windows(2) {
                    let len = w[1] - w[0];
                    let tol = T::tol(quadrature::DEFAULT_ABS_TOL) * len;
                    out.push(quadrature::integrate(&raw, w[0], w[1], tol)? / len);
                }
                out
            }
        };
        Self::centered(base, values)
    }

    pub fn zero(base: impl Into<Arc<Measure<T>>>) -> Self {
        let base = base.into();
        let k = base.cell_count();
        Self::from_centered(base, vec![T::zero(); k])
    }

    fn check_len(base: &Measure<T>, values: &[T]) -> Result<()> {
        if values.len() != base.cell_count() {
            return Err(Error::InvalidTangent(format!(
                "{} values for {} cells",
                values.len(),
                base.cell_count()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidTangent(format!("non-finite value {v}")));
        }
        Ok(())
    }

    fn from_centered(base: Arc<Measure<T>>, values: Vec<T>) -> Self {
        let sq: T = base.cell_masses().iter().zip(&values).map(|(&m, &v)| m * v * v).sum();
        Self { base, values, norm: sq.sqrt() }
    }

    pub fn base(&self) -> &Measure<T> {
        &self.base
    }

    pub fn base_arc(&self) -> &Arc<Measure<T>> {
        &self.base
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `√∫g² dP`.
    pub fn l2_norm(&self) -> T {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    /// Value at a support point.
    pub fn at(&self, x: T) -> Result<T> {
        self.base
            .cell_of(x)
            .map(|k| self.values[k])
            .ok_or(Error::ValueOutsideSupport(x.as_f64()))
    }

    pub fn scaled(&self, a: T) -> Self {
        Self::from_centered(self.base.clone(), self.values.iter().map(|&v| v * a).collect())
    }

    /// `∫ g h dP`.
    pub fn inner(&self, other: &Tangent<T>) -> Result<T> {
        if self.base != other.base {
            return Err(Error::BaseMismatch);
        }
        let masses = self.base.cell_masses();
        Ok((0..masses.len()).map(|k| masses[k] * self.values[k] * other.values[k]).sum())
    }

    /// `c(tg) = 1 + t²/4 ∫g² dP`.
    pub fn normalizer(&self, t: T) -> T {
        T::one() + t * t * self.norm * self.norm * T::lit(0.25)
    }

    /// Density `(1 + ½tg)² / c(tg)` of the curve point relative to the base.
    pub fn curve_density(&self, x: T, t: T) -> Result<T> {
        let s = T::one() + T::lit(0.5) * t * self.at(x)?;
        Ok(s * s / self.normalizer(t))
    }

    /// Log of [`Tangent::curve_density`]; `DegenerateDensity` where `1 + ½tg = 0`.
    pub fn curve_log_density(&self, x: T, t: T) -> Result<T> {
        let u = T::lit(0.5) * t * self.at(x)?;
        let log_abs = if u > -T::one() {
            u.ln_1p()
        } else if u < -T::one() {
            (-T::one() - u).ln()
        } else {
            return Err(Error::DegenerateDensity { at: x.as_f64() });
        };
        let c = (t * t * self.norm * self.norm * T::lit(0.25)).ln_1p();
        Ok(T::lit(2.0) * log_abs - c)
    }

    /// The measure `P_tg` with density [`Tangent::curve_density`]. `t = 0` returns the base.
    pub fn curve_measure(&self, t: T) -> Result<Measure<T>> {
        if t == T::zero() {
            return Ok((*self.base).clone());
        }
        let c = self.normalizer(t);
        let half_t = T::lit(0.5) * t;
        let masses = self
            .base
            .cell_masses()
            .iter()
            .zip(&self.values)
            .map(|(&m, &g)| {
                let s = T::one() + half_t * g;
                m * s * s / c
            })
            .collect();
        self.base.with_cell_masses(masses)
    }

    /// `‖(2/t)(√(dP_tg/dP) − 1) − g‖` in `L2(P)`.
    pub fn l2_derivative_residual(&self, t: T) -> Result<T> {
        if t == T::zero() {
            return Err(Error::InvalidArgument("t must be nonzero".into()));
        }
        let c = self.normalizer(t);
        let s = c.sqrt();
        let nsq = self.norm * self.norm;
        let half = T::lit(0.5);
        let mut acc = T::zero();
        for (&m, &g) in self.base.cell_masses().iter().zip(&self.values) {
            // (2/t)(a/s − 1) = (2/t)(a² − c)/((a + s)s), and a² − c = tg + t²/4(g² − ‖g‖²).
            let a = (T::one() + half * t * g).abs();
            let num = T::lit(2.0) * g + half * t * (g * g - nsq);
            let r = num / ((a + s) * s) - g;
            acc = acc + m * r * r;
        }
        Ok(acc.sqrt())
    }
}

/// A pair of tangents `g1` on the first footpoint and `g2` on the second, acting as `g1(x) + g2(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTangent<T: Real> {
    pub g1: Tangent<T>,
    pub g2: Tangent<T>,
}

impl<T: Real> ProductTangent<T> {
    pub fn new(g1: Tangent<T>, g2: Tangent<T>) -> Self {
        Self { g1, g2 }
    }

    pub fn zero(p0: impl Into<Arc<Measure<T>>>, q0: impl Into<Arc<Measure<T>>>) -> Self {
        Self { g1: Tangent::zero(p0), g2: Tangent::zero(q0) }
    }

    pub fn scaled(&self, a: T) -> Self {
        Self { g1: self.g1.scaled(a), g2: self.g2.scaled(a) }
    }

    /// `(1−d)‖g1‖² + d‖g2‖²`.
    pub fn d_norm_sq(&self, d: T) -> T {
        let (a, b) = (self.g1.l2_norm(), self.g2.l2_norm());
        (T::one() - d) * a * a + d * b * b
    }

    /// The pair of curve measures at `t`.
    pub fn curve(&self, t: T) -> Result<(Measure<T>, Measure<T>)> {
        Ok((self.g1.curve_measure(t)?, self.g2.curve_measure(t)?))
    }

    /// `∫k̃1 g1 dP0 + ∫k̃2 g2 dQ0`.
    pub fn pairing(&self, gp: &GradientPair<T>) -> Result<T> {
        Ok(gp.k1.inner(&self.g1)? + gp.k2.inner(&self.g2)?)
    }
}

/// `(1−d)∫a1 b1 dP0 + d∫a2 b2 dQ0`.
pub fn d_inner<T: Real>(a: &ProductTangent<T>, b: &ProductTangent<T>, d: T) -> Result<T> {
    if !(d > T::zero() && d < T::one()) {
        return Err(Error::InvalidArgument(format!("d = {d} not in (0, 1)")));
    }
    Ok((T::one() - d) * a.g1.inner(&b.g1)? + d * a.g2.inner(&b.g2)?)
}

/// `n^{-1/2}(Σ g1(x_i) + Σ g2(y_j))`.
pub fn central_sequence<T: Real>(pt: &ProductTangent<T>, s: &ProductSample<T>) -> Result<T> {
    let mut acc = T::zero();
    for &x in s.x() {
        acc = acc + pt.g1.at(x)?;
    }
    for &y in s.y() {
        acc = acc + pt.g2.at(y)?;
    }
    Ok(acc / T::count(s.n()).sqrt())
}

/// Remainder of the quadratic expansion of the log-likelihood ratio of the
/// `θ/√n`-localized curves against the footpoint, evaluated at `s`.
pub fn lan_remainder<T: Real>(pt: &ProductTangent<T>, theta: T, s: &ProductSample<T>) -> Result<T> {
    if theta == T::zero() {
        return Ok(T::zero());
    }
    let t = theta / T::count(s.n()).sqrt();
    let mut log_lr = T::zero();
    for &x in s.x() {
        log_lr = log_lr + pt.g1.curve_log_density(x, t)?;
    }
    for &y in s.y() {
        log_lr = log_lr + pt.g2.curve_log_density(y, t)?;
    }
    let x_n = central_sequence(pt, s)?;
    let sigma_sq = pt.d_norm_sq(s.d_hat());
    Ok(log_lr - theta * x_n + T::lit(0.5) * theta * theta * sigma_sq)
}

/// `k̂ = k̃1/(1−d) ∘ π1 + k̃2/d ∘ π2`, the Riesz representer of the gradient under `⟨·,·⟩_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DWeightedGradient<T: Real> {
    pub k_hat: ProductTangent<T>,
    pub d: T,
    pub d_norm: T,
}

impl<T: Real> DWeightedGradient<T> {
    pub fn new(gp: &GradientPair<T>, d: T) -> Result<Self> {
        if !(d > T::zero() && d < T::one()) {
            return Err(Error::InvalidArgument(format!("d = {d} not in (0, 1)")));
        }
        let k_hat = ProductTangent::new(gp.k1.scaled(T::one() / (T::one() - d)), gp.k2.scaled(T::one() / d));
        let d_norm = d_inner(&k_hat, &k_hat, d)?.sqrt();
        Ok(Self { k_hat, d, d_norm })
    }
}

/// Tangent literal: values aligned with the base's cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TangentLiteral<T: Real> {
    pub values: Vec<T>,
}

impl<T: Real> TangentLiteral<T> {
    pub fn attach(self, base: impl Into<Arc<Measure<T>>>) -> Result<Tangent<T>> {
        Tangent::new(base, self.values)
    }
}
