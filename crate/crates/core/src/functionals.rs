//! Two-sample statistical functionals, their values and canonical gradients.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Measure, Side};
use crate::scalar::Real;
use crate::tangents::{ProductTangent, Tangent};

fn parse_call(s: &str) -> Option<(&str, Option<f64>)> {
    let s = s.trim();
    match s.find('(') {
        None => Some((s, None)),
        Some(open) => {
            let inner = s[open + 1..].strip_suffix(')')?;
            let v: f64 = inner.trim().parse().ok()?;
            v.is_finite().then_some((&s[..open], Some(v)))
        }
    }
}

fn unknown(what: &str, got: &str, registry: &str) -> Error {
    Error::InvalidArgument(format!("unknown {what} `{got}`; expected one of {registry}"))
}

/// Kernel `h(x, y)` of a von Mises functional `∫h dP⊗Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String", bound = "T: Real")]
pub enum Kernel<T: Real> {
    /// `1{x ≥ y}`
    XGeY,
    /// `x − y`
    XMinusY,
    /// `x·y`
    ProductXY,
    /// `1{x ≤ q} − 1{y ≤ q}`
    IndicatorLeq(T),
}

pub const KERNEL_REGISTRY: &str = "x_ge_y | x_minus_y | product_xy | indicator_leq(q)";

impl<T: Real> Kernel<T> {
    pub fn eval(&self, x: T, y: T) -> T {
        let ind = |b: bool| if b { T::one() } else { T::zero() };
        match *self {
            Kernel::XGeY => ind(x >= y),
            Kernel::XMinusY => x - y,
            Kernel::ProductXY => x * y,
            Kernel::IndicatorLeq(q) => ind(x <= q) - ind(y <= q),
        }
    }
}

impl<T: Real> fmt::Display for Kernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::XGeY => f.write_str("x_ge_y"),
            Kernel::XMinusY => f.write_str("x_minus_y"),
            Kernel::ProductXY => f.write_str("product_xy"),
            Kernel::IndicatorLeq(q) => write!(f, "indicator_leq({})", q.as_f64()),
        }
    }
}

impl<T: Real> FromStr for Kernel<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match parse_call(s) {
            Some(("x_ge_y", None)) => Ok(Kernel::XGeY),
            Some(("x_minus_y", None)) => Ok(Kernel::XMinusY),
            Some(("product_xy", None)) => Ok(Kernel::ProductXY),
            Some(("indicator_leq", Some(q))) => Ok(Kernel::IndicatorLeq(T::lit(q))),
            _ => Err(unknown("kernel", s, KERNEL_REGISTRY)),
        }
    }
}

/// Score `h` on `[0, 1]` of an invariant functional `∫h(F_Q) dP`, with its derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InvariantScore {
    /// `h(u) = u`
    Id,
    /// `h(u) = u²`
    Square,
}

pub const INVARIANT_REGISTRY: &str = "id | square";

impl InvariantScore {
    pub fn h<T: Real>(&self, u: T) -> T {
        match self {
            InvariantScore::Id => u,
            InvariantScore::Square => u * u,
        }
    }

    pub fn hdot<T: Real>(&self, u: T) -> T {
        match self {
            InvariantScore::Id => T::one(),
            InvariantScore::Square => T::lit(2.0) * u,
        }
    }

    /// Bound on `|ḣ|` over `[0, 1]`.
    pub fn bound(&self) -> f64 {
        match self {
            InvariantScore::Id => 1.0,
            InvariantScore::Square => 2.0,
        }
    }
}

impl fmt::Display for InvariantScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvariantScore::Id => "id",
            InvariantScore::Square => "square",
        })
    }
}

impl FromStr for InvariantScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "id" => Ok(InvariantScore::Id),
            "square" => Ok(InvariantScore::Square),
            _ => Err(unknown("invariant score", s, INVARIANT_REGISTRY)),
        }
    }
}

/// One-sample integrand `f` of the mean functional `∫f dP`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String", bound = "T: Real")]
pub enum Score<T: Real> {
    Id,
    NegId,
    Square,
    One,
    IndicatorLeq(T),
    NegIndicatorLeq(T),
}

pub const SCORE_REGISTRY: &str =
    "id | neg_id | square | one | indicator_leq(q) | neg_indicator_leq(q)";

impl<T: Real> Score<T> {
    pub fn eval(&self, x: T) -> T {
        let ind = |b: bool| if b { T::one() } else { T::zero() };
        match *self {
            Score::Id => x,
            Score::NegId => -x,
            Score::Square => x * x,
            Score::One => T::one(),
            Score::IndicatorLeq(q) => ind(x <= q),
            Score::NegIndicatorLeq(q) => -ind(x <= q),
        }
    }

    /// `∫f dm` in closed form.
    pub fn mean(&self, m: &Measure<T>) -> T {
        match *self {
            Score::Id => m.mean(),
            Score::NegId => -m.mean(),
            Score::Square => m.integrate_poly(&[T::zero(), T::zero(), T::one()]),
            Score::One => T::one(),
            Score::IndicatorLeq(q) => m.cdf(q, Side::RightClosed),
            Score::NegIndicatorLeq(q) => -m.cdf(q, Side::RightClosed),
        }
    }
}

impl<T: Real> fmt::Display for Score<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Id => f.write_str("id"),
            Score::NegId => f.write_str("neg_id"),
            Score::Square => f.write_str("square"),
            Score::One => f.write_str("one"),
            Score::IndicatorLeq(q) => write!(f, "indicator_leq({})", q.as_f64()),
            Score::NegIndicatorLeq(q) => write!(f, "neg_indicator_leq({})", q.as_f64()),
        }
    }
}

impl<T: Real> FromStr for Score<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match parse_call(s) {
            Some(("id", None)) => Ok(Score::Id),
            Some(("neg_id", None)) => Ok(Score::NegId),
            Some(("square", None)) => Ok(Score::Square),
            Some(("one", None)) => Ok(Score::One),
            Some(("indicator_leq", Some(q))) => Ok(Score::IndicatorLeq(T::lit(q))),
            Some(("neg_indicator_leq", Some(q))) => Ok(Score::NegIndicatorLeq(T::lit(q))),
            _ => Err(unknown("score", s, SCORE_REGISTRY)),
        }
    }
}

macro_rules! string_serde {
    ($ty:ty $(, $g:ident)?) => {
        impl$(<$g: Real>)? TryFrom<String> for $ty {
            type Error = Error;
            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }
        impl$(<$g: Real>)? From<$ty> for String {
            fn from(v: $ty) -> String {
                v.to_string()
            }
        }
    };
}

string_serde!(Kernel<T>, T);
string_serde!(Score<T>, T);
string_serde!(InvariantScore);

/// How a composite functional combines the two one-sample means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeOp {
    Sum,
    Product,
    Quotient,
}

impl CompositeOp {
    pub fn apply<T: Real>(&self, a: T, b: T) -> Result<T> {
        match self {
            CompositeOp::Sum => Ok(a + b),
            CompositeOp::Product => Ok(a * b),
            CompositeOp::Quotient if b == T::zero() => Err(Error::QuotientByZero),
            CompositeOp::Quotient => Ok(a / b),
        }
    }

    /// Partial derivatives `(∂/∂a, ∂/∂b)` at `(a, b)`.
    pub fn partials<T: Real>(&self, a: T, b: T) -> Result<(T, T)> {
        match self {
            CompositeOp::Sum => Ok((T::one(), T::one())),
            CompositeOp::Product => Ok((b, a)),
            CompositeOp::Quotient if b == T::zero() => Err(Error::QuotientByZero),
            CompositeOp::Quotient => Ok((T::one() / b, -a / (b * b))),
        }
    }
}

/// A functional `k(P⊗Q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Real")]
pub enum Functional<T: Real> {
    /// `∫h dP⊗Q`
    #[serde(rename = "vonmises")]
    VonMises { h: Kernel<T> },
    /// `P⊗Q(X ≥ Y)`
    Wilcoxon,
    /// `∫h(F_Q) dP`
    Invariant { h: InvariantScore },
    /// `op(∫f1 dP, ∫f2 dQ)`
    Composite { op: CompositeOp, f1: Score<T>, f2: Score<T> },
}

pub const FUNCTIONAL_REGISTRY: &str = "wilcoxon | vonmises | invariant | composite";

/// Canonical gradient `k̃1 ∘ π1 + k̃2 ∘ π2` at a footpoint, with the functional's value there.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair<T: Real> {
    pub k1: Tangent<T>,
    pub k2: Tangent<T>,
    pub value: T,
}

impl<T: Real> GradientPair<T> {
    /// `(‖k̃1‖², ‖k̃2‖²)`.
    pub fn norms_sq(&self) -> (T, T) {
        let (a, b) = (self.k1.l2_norm(), self.k2.l2_norm());
        (a * a, b * b)
    }

    /// Both components vanish up to rounding; no test can be built on this gradient.
    pub fn is_degenerate(&self) -> bool {
        let (a, b) = self.norms_sq();
        let scale = T::one() + self.value.abs();
        (a + b).sqrt() <= T::tol(1e-12) * scale
    }

    pub fn as_product_tangent(&self) -> ProductTangent<T> {
        ProductTangent::new(self.k1.clone(), self.k2.clone())
    }
}

/// Projection of a gradient onto the tangent space of the model.
pub trait TangentProjection<T: Real> {
    fn project(&self, gp: GradientPair<T>) -> GradientPair<T>;
}

/// Tangent space equal to all centered square-integrable functions: projection is the identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullFamily;

impl<T: Real> TangentProjection<T> for FullFamily {
    fn project(&self, gp: GradientPair<T>) -> GradientPair<T> {
        gp
    }
}

/// `∫F_Q dP` with `F_Q` right-closed.
fn integral_of_cdf<T: Real>(p: &Measure<T>, q: &Measure<T>, h: InvariantScore) -> Result<T> {
    p.integrate_split(|x| Ok(h.h(q.cdf(x, Side::RightClosed))), q.kinks())
}

impl<T: Real> Functional<T> {
    pub fn evaluate(&self, p: &Measure<T>, q: &Measure<T>) -> Result<T> {
        match self {
            Functional::Wilcoxon | Functional::VonMises { h: Kernel::XGeY } => {
                integral_of_cdf(p, q, InvariantScore::Id)
            }
            Functional::VonMises { h: Kernel::XMinusY } => Ok(p.mean() - q.mean()),
            Functional::VonMises { h: Kernel::ProductXY } => Ok(p.mean() * q.mean()),
            Functional::VonMises { h: Kernel::IndicatorLeq(c) } => {
                Ok(p.cdf(*c, Side::RightClosed) - q.cdf(*c, Side::RightClosed))
            }
            Functional::Invariant { h } => integral_of_cdf(p, q, *h),
            Functional::Composite { op, f1, f2 } => op.apply(f1.mean(p), f2.mean(q)),
        }
    }

    /// Canonical gradient at `P0⊗Q0` under full families.
    ///
    /// Gradient components are stored per atom, so both footpoints must be discrete.
    pub fn gradient(&self, p0: &Measure<T>, q0: &Measure<T>) -> Result<GradientPair<T>> {
        self.gradient_projected(p0, q0, &FullFamily)
    }

    pub fn gradient_projected(
        &self,
        p0: &Measure<T>,
        q0: &Measure<T>,
        projection: &impl TangentProjection<T>,
    ) -> Result<GradientPair<T>> {
        let (dp, dq) = match (p0.as_discrete(), q0.as_discrete()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Unsupported(
                    "gradients need discrete footpoints (values are stored per atom)".into(),
                ))
            }
        };
        let value = self.evaluate(p0, q0)?;
        let xs = dp.locations();
        let ys = dq.locations();
        let (raw1, raw2): (Vec<T>, Vec<T>) = match self {
            Functional::Wilcoxon => (
                xs.iter().map(|&x| q0.cdf(x, Side::RightClosed)).collect(),
                ys.iter().map(|&y| T::one() - p0.cdf(y, Side::LeftOpen)).collect(),
            ),
            Functional::VonMises { h } => (
                xs.iter().map(|&x| dq.atoms().map(|(y, v)| h.eval(x, y) * v).sum()).collect(),
                ys.iter().map(|&y| dp.atoms().map(|(x, w)| h.eval(x, y) * w).sum()).collect(),
            ),
            Functional::Invariant { h } => {
                let fq: Vec<T> = xs.iter().map(|&x| q0.cdf(x, Side::RightClosed)).collect();
                let slope: Vec<T> = fq.iter().map(|&u| h.hdot(u)).collect();
                (
                    fq.iter().map(|&u| h.h(u)).collect(),
                    ys.iter()
                        .map(|&y| {
                            dp.atoms()
                                .zip(&slope)
                                .filter(|((x, _), _)| *x >= y)
                                .map(|((_, w), &s)| w * s)
                                .sum()
                        })
                        .collect(),
                )
            }
            Functional::Composite { op, f1, f2 } => {
                let (c1, c2) = op.partials(f1.mean(p0), f2.mean(q0))?;
                (
                    xs.iter().map(|&x| c1 * f1.eval(x)).collect(),
                    ys.iter().map(|&y| c2 * f2.eval(y)).collect(),
                )
            }
        };
        let k1 = Tangent::centered(Arc::new(p0.clone()), raw1)?;
        let k2 = Tangent::centered(Arc::new(q0.clone()), raw2)?;
        Ok(projection.project(GradientPair { k1, k2, value }))
    }

    /// `(k(P_tg1 ⊗ Q_tg2) − k(P0⊗Q0)) / t`.
    pub fn directional_derivative(
        &self,
        p0: &Measure<T>,
        q0: &Measure<T>,
        pt: &ProductTangent<T>,
        t: T,
    ) -> Result<T> {
        if t == T::zero() {
            return Err(Error::InvalidArgument("t must be nonzero".into()));
        }
        let (pt_p, pt_q) = pt.curve(t)?;
        Ok((self.evaluate(&pt_p, &pt_q)? - self.evaluate(p0, q0)?) / t)
    }

    /// `(k(P_tg) − k(P_−tg)) / 2t`, second-order accurate in `t`.
    pub fn central_derivative(&self, pt: &ProductTangent<T>, t: T) -> Result<T> {
        if t == T::zero() {
            return Err(Error::InvalidArgument("t must be nonzero".into()));
        }
        let (a_p, a_q) = pt.curve(t)?;
        let (b_p, b_q) = pt.curve(-t)?;
        Ok((self.evaluate(&a_p, &a_q)? - self.evaluate(&b_p, &b_q)?) / (T::lit(2.0) * t))
    }
}
