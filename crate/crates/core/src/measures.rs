//! Exactly representable probability measures on the real line.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::scalar::Real;

/// Which side of a jump the CDF takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `m((-inf, t])`
    RightClosed,
    /// `m((-inf, t))`
    LeftOpen,
}

fn check_total<T: Real>(what: &str, masses: &mut [T]) -> Result<()> {
    let total: T = masses.iter().copied().sum();
    let dev = (total - T::one()).abs();
    if dev <= T::tol(1e-12) {
        return Ok(());
    }
    if dev <= T::tol(1e-9) {
        for m in masses.iter_mut() {
            *m = *m / total;
        }
        return Ok(());
    }
    Err(Error::InvalidMeasure(format!("{what} sum to {total}, expected 1")))
}

fn prefix_sums<T: Real>(masses: &[T]) -> Vec<T> {
    let mut cum = Vec::with_capacity(masses.len() + 1);
    let mut acc = T::zero();
    cum.push(acc);
    for &m in masses {
        acc = acc + m;
        cum.push(acc);
    }
    cum
}

fn clamp_unit<T: Real>(p: T) -> T {
    p.max(T::zero()).min(T::one())
}

/// Finitely many atoms with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    locs: Vec<T>,
    weights: Vec<T>,
    cum: Vec<T>,
}

impl<T: Real> DiscreteMeasure<T> {
    /// Builds from `(location, weight)` pairs in any order.
    pub fn new(mut atoms: Vec<(T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for &(x, w) in &atoms {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::InvalidMeasure("non-finite atom".into()));
            }
            if w <= T::zero() {
                return Err(Error::InvalidMeasure(format!("atom {x} has weight {w} <= 0")));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        if atoms.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::InvalidMeasure("duplicate atom location".into()));
        }
        let locs: Vec<T> = atoms.iter().map(|a| a.0).collect();
        let mut weights: Vec<T> = atoms.iter().map(|a| a.1).collect();
        check_total("weights", &mut weights)?;
        let cum = prefix_sums(&weights);
        Ok(Self { locs, weights, cum })
    }

    pub fn from_parts(locs: &[T], weights: &[T]) -> Result<Self> {
        if locs.len() != weights.len() {
            return Err(Error::InvalidMeasure("locations and weights differ in length".into()));
        }
        Self::new(locs.iter().copied().zip(weights.iter().copied()).collect())
    }

    /// Equal weights on the given locations.
    pub fn uniform(locs: &[T]) -> Result<Self> {
        let w = T::one() / T::count(locs.len().max(1));
        Self::new(locs.iter().map(|&x| (x, w)).collect())
    }

    pub fn point(x: T) -> Result<Self> {
        Self::new(vec![(x, T::one())])
    }

    pub fn locations(&self) -> &[T] {
        &self.locs
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.locs.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn index_of(&self, x: T) -> Option<usize> {
        let k = self.locs.partition_point(|&a| a < x);
        (k < self.locs.len() && self.locs[k] == x).then_some(k)
    }

    pub fn cdf(&self, t: T, side: Side) -> T {
        let k = match side {
            Side::RightClosed => self.locs.partition_point(|&a| a <= t),
            Side::LeftOpen => self.locs.partition_point(|&a| a < t),
        };
        clamp_unit(self.cum[k])
    }

    fn quantile(&self, u: T) -> T {
        let k = self.cum[1..].partition_point(|&c| c <= u);
        self.locs[k.min(self.locs.len() - 1)]
    }
}

/// Density constant on each segment between consecutive breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseUniformMeasure<T> {
    breaks: Vec<T>,
    masses: Vec<T>,
    cum: Vec<T>,
}

impl<T: Real> PiecewiseUniformMeasure<T> {
    /// `masses[k]` is the probability of `[breaks[k], breaks[k+1]]`. Zero masses are allowed.
    pub fn new(breaks: Vec<T>, mut masses: Vec<T>) -> Result<Self> {
        if breaks.len() < 2 || breaks.len() != masses.len() + 1 {
            return Err(Error::InvalidMeasure(format!(
                "{} breakpoints cannot carry {} segment masses",
                breaks.len(),
                masses.len()
            )));
        }
        if breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite breakpoint".into()));
        }
        if breaks.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidMeasure("breakpoints must be strictly increasing".into()));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < T::zero()) {
            return Err(Error::InvalidMeasure("segment masses must be finite and >= 0".into()));
        }
        check_total("segment masses", &mut masses)?;
        let cum = prefix_sums(&masses);
        Ok(Self { breaks, masses, cum })
    }

    /// Uniform distribution on `[a, b]`.
    pub fn uniform(a: T, b: T) -> Result<Self> {
        Self::new(vec![a, b], vec![T::one()])
    }

    pub fn breaks(&self) -> &[T] {
        &self.breaks
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn segment_of(&self, x: T) -> Option<usize> {
        let last = *self.breaks.last().expect("two breaks");
        if x < self.breaks[0] || x > last {
            return None;
        }
        let k = self.breaks[1..].partition_point(|&b| b <= x);
        Some(k.min(self.masses.len() - 1))
    }

    pub fn density(&self, x: T) -> T {
        match self.segment_of(x) {
            Some(k) => self.masses[k] / (self.breaks[k + 1] - self.breaks[k]),
            None => T::zero(),
        }
    }

    pub fn cdf(&self, t: T) -> T {
        if t <= self.breaks[0] {
            return T::zero();
        }
        if t >= *self.breaks.last().expect("two breaks") {
            return T::one();
        }
        let k = self.breaks[1..].partition_point(|&b| b <= t);
        let (a, b) = (self.breaks[k], self.breaks[k + 1]);
        clamp_unit(self.cum[k] + self.masses[k] * (t - a) / (b - a))
    }

    fn quantile(&self, u: T) -> T {
        let n = self.masses.len();
        let mut k = self.cum[1..].partition_point(|&c| c <= u);
        if k >= n {
            k = (0..n).rev().find(|&i| self.masses[i] > T::zero()).expect("positive mass");
            return self.breaks[k + 1];
        }
        let (a, b) = (self.breaks[k], self.breaks[k + 1]);
        let frac = ((u - self.cum[k]) / self.masses[k]).max(T::zero()).min(T::one());
        (a + frac * (b - a)).min(b)
    }
}

/// Either kind of measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Literal<T>", into = "Literal<T>", bound = "T: Real")]
pub enum Measure<T: Real> {
    Discrete(DiscreteMeasure<T>),
    PiecewiseUniform(PiecewiseUniformMeasure<T>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Real")]
enum Literal<T> {
    Discrete { atoms: Vec<(T, T)> },
    Pwuniform { breaks: Vec<T>, masses: Vec<T> },
}

impl<T: Real> TryFrom<Literal<T>> for Measure<T> {
    type Error = Error;

    fn try_from(lit: Literal<T>) -> Result<Self> {
        match lit {
            Literal::Discrete { atoms } => Ok(DiscreteMeasure::new(atoms)?.into()),
            Literal::Pwuniform { breaks, masses } => {
                Ok(PiecewiseUniformMeasure::new(breaks, masses)?.into())
            }
        }
    }
}

impl<T: Real> From<Measure<T>> for Literal<T> {
    fn from(m: Measure<T>) -> Self {
        match m {
            Measure::Discrete(d) => Literal::Discrete { atoms: d.atoms().collect() },
            Measure::PiecewiseUniform(p) => Literal::Pwuniform { breaks: p.breaks, masses: p.masses },
        }
    }
}

impl<T: Real> From<DiscreteMeasure<T>> for Measure<T> {
    fn from(m: DiscreteMeasure<T>) -> Self {
        Measure::Discrete(m)
    }
}

impl<T: Real> From<PiecewiseUniformMeasure<T>> for Measure<T> {
    fn from(m: PiecewiseUniformMeasure<T>) -> Self {
        Measure::PiecewiseUniform(m)
    }
}

impl<T: Real> Measure<T> {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Measure::Discrete(_))
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure<T>> {
        match self {
            Measure::Discrete(d) => Some(d),
            Measure::PiecewiseUniform(_) => None,
        }
    }

    /// Atoms or segments. Tangent values are stored per cell.
    pub fn cell_count(&self) -> usize {
        self.cell_masses().len()
    }

    pub fn cell_masses(&self) -> &[T] {
        match self {
            Measure::Discrete(d) => &d.weights,
            Measure::PiecewiseUniform(p) => &p.masses,
        }
    }

    /// Cell containing `x`, `None` off the support. Interior breakpoints belong to the right segment.
    pub fn cell_of(&self, x: T) -> Option<usize> {
        match self {
            Measure::Discrete(d) => d.index_of(x),
            Measure::PiecewiseUniform(p) => p.segment_of(x),
        }
    }

    /// Same kind, same cells, new masses. Atoms whose mass drops to zero are removed.
    pub fn with_cell_masses(&self, masses: Vec<T>) -> Result<Self> {
        match self {
            Measure::Discrete(d) => {
                let atoms = d
                    .locs
                    .iter()
                    .copied()
                    .zip(masses)
                    .filter(|&(_, w)| w > T::zero())
                    .collect();
                Ok(DiscreteMeasure::new(atoms)?.into())
            }
            Measure::PiecewiseUniform(p) => {
                Ok(PiecewiseUniformMeasure::new(p.breaks.clone(), masses)?.into())
            }
        }
    }

    pub fn cdf(&self, t: T, side: Side) -> T {
        match self {
            Measure::Discrete(d) => d.cdf(t, side),
            Measure::PiecewiseUniform(p) => p.cdf(t),
        }
    }

    /// Generalized inverse of the CDF at `u` in `[0, 1)`.
    pub fn quantile(&self, u: T) -> T {
        match self {
            Measure::Discrete(d) => d.quantile(u),
            Measure::PiecewiseUniform(p) => p.quantile(u),
        }
    }

    /// Points where integrands built from this measure (CDF, density) may have kinks or jumps.
    pub fn kinks(&self) -> &[T] {
        match self {
            Measure::Discrete(d) => &d.locs,
            Measure::PiecewiseUniform(p) => &p.breaks,
        }
    }

    /// `∫ f dm`: an exact sum for atoms, adaptive quadrature (absolute tolerance 1e-10) for segments.
    pub fn integrate(&self, f: impl Fn(T) -> T) -> Result<T> {
        self.integrate_split(|x| Ok(f(x)), &[])
    }

    /// [`Measure::integrate`] for a fallible integrand, splitting quadrature at `breaks`.
    pub fn integrate_split(&self, f: impl Fn(T) -> Result<T>, breaks: &[T]) -> Result<T> {
        match self {
            Measure::Discrete(d) => {
                let mut acc = T::zero();
                for (x, w) in d.atoms() {
                    let v = f(x)?;
                    if !v.is_finite() {
                        return Err(Error::NonFiniteFunctionValue { at: x.as_f64() });
                    }
                    acc = acc + v * w;
                }
                Ok(acc)
            }
            Measure::PiecewiseUniform(p) => {
                let live = p.masses.iter().filter(|m| **m > T::zero()).count();
                let tol = T::tol(quadrature::DEFAULT_ABS_TOL) / T::count(live);
                let mut acc = T::zero();
                for (k, &m) in p.masses.iter().enumerate() {
                    if m == T::zero() {
                        continue;
                    }
                    let (a, b) = (p.breaks[k], p.breaks[k + 1]);
                    let len = b - a;
                    let raw = quadrature::integrate_with_breaks(&f, a, b, breaks, tol * len / m)?;
                    acc = acc + raw * m / len;
                }
                Ok(acc)
            }
        }
    }

    /// `∫ p(x) dm` for the polynomial with coefficients `coeffs[k]` of `x^k`, in closed form.
    pub fn integrate_poly(&self, coeffs: &[T]) -> T {
        let eval = |x: T| coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c);
        match self {
            Measure::Discrete(d) => d.atoms().map(|(x, w)| eval(x) * w).sum(),
            Measure::PiecewiseUniform(p) => {
                let anti = |x: T| {
                    coeffs
                        .iter()
                        .enumerate()
                        .rev()
                        .fold(T::zero(), |acc, (k, &c)| acc * x + c / T::count(k + 1))
                        * x
                };
                p.masses
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| **m > T::zero())
                    .map(|(k, &m)| {
                        let (a, b) = (p.breaks[k], p.breaks[k + 1]);
                        (anti(b) - anti(a)) / (b - a) * m
                    })
                    .sum()
            }
        }
    }

    pub fn mean(&self) -> T {
        self.integrate_poly(&[T::zero(), T::one()])
    }

    /// `count` i.i.d. draws by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<T> {
        (0..count).map(|_| self.quantile(T::lit(rng.gen::<f64>()))).collect()
    }
}

fn masses_on_common_cells<T: Real>(p: &Measure<T>, q: &Measure<T>) -> Option<Vec<(T, T)>> {
    match (p, q) {
        (Measure::Discrete(a), Measure::Discrete(b)) => {
            let mut out = Vec::with_capacity(a.locs.len() + b.locs.len());
            let (mut i, mut j) = (0, 0);
            while i < a.locs.len() || j < b.locs.len() {
                let take_a = j >= b.locs.len() || (i < a.locs.len() && a.locs[i] <= b.locs[j]);
                let take_b = i >= a.locs.len() || (j < b.locs.len() && b.locs[j] <= a.locs[i]);
                let pa = if take_a { a.weights[i] } else { T::zero() };
                let pb = if take_b { b.weights[j] } else { T::zero() };
                out.push((pa, pb));
                i += take_a as usize;
                j += take_b as usize;
            }
            Some(out)
        }
        (Measure::PiecewiseUniform(a), Measure::PiecewiseUniform(b)) => {
            let mut pts: Vec<T> = a.breaks.iter().chain(b.breaks.iter()).copied().collect();
            pts.sort_by(|u, v| u.partial_cmp(v).expect("finite"));
            pts.dedup();
            Some(
                pts.windows(2)
                    .map(|w| {
                        let mid = (w[0] + w[1]) * T::lit(0.5);
                        let len = w[1] - w[0];
                        (a.density(mid) * len, b.density(mid) * len)
                    })
                    .collect(),
            )
        }
        _ => None,
    }
}

/// Total variation distance `sup_B |p(B) - q(B)|`.
///
/// A discrete and a piecewise-uniform measure are mutually singular, so mixed pairs give 1.
pub fn tv_distance<T: Real>(p: &Measure<T>, q: &Measure<T>) -> T {
    match masses_on_common_cells(p, q) {
        Some(cells) => {
            let s: T = cells.iter().map(|&(a, b)| (a - b).abs()).sum();
            clamp_unit(s * T::lit(0.5))
        }
        None => T::one(),
    }
}

/// Hellinger distance `(½∫(√f_p − √f_q)²)^{1/2}`; 1 for mixed kinds.
pub fn hellinger<T: Real>(p: &Measure<T>, q: &Measure<T>) -> T {
    match masses_on_common_cells(p, q) {
        Some(cells) => {
            let s: T = cells
                .iter()
                .map(|&(a, b)| {
                    let d = a.sqrt() - b.sqrt();
                    d * d
                })
                .sum();
            clamp_unit(s * T::lit(0.5)).sqrt()
        }
        None => T::one(),
    }
}

/// `∫∫ h(x, y) dp(x) dq(y)`.
///
/// Double sum for two discrete measures, nested quadrature otherwise. The inner
/// quadrature splits at `y = x`, where indicator kernels jump.
pub fn product_integrate<T: Real>(
    p: &Measure<T>,
    q: &Measure<T>,
    h: impl Fn(T, T) -> T,
) -> Result<T> {
    let h = &h;
    p.integrate_split(|x| q.integrate_split(|y| Ok(h(x, y)), &[x]), q.kinks())
}

/// Two independent samples: `x` of size n1 and `y` of size n2.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSample<T> {
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Real> ProductSample<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::TooFewObservations { needed: 1, got: x.len().min(y.len()) });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample contains a non-finite value".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn n1(&self) -> usize {
        self.x.len()
    }

    pub fn n2(&self) -> usize {
        self.y.len()
    }

    pub fn n(&self) -> usize {
        self.x.len() + self.y.len()
    }

    /// `n2 / n`.
    pub fn d_hat(&self) -> T {
        T::count(self.n2()) / T::count(self.n())
    }

    /// Draws `n1` points from `p` and then `n2` from `q`.
    pub fn draw<R: Rng + ?Sized>(
        p: &Measure<T>,
        q: &Measure<T>,
        n1: usize,
        n2: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let x = p.sample(rng, n1);
        let y = q.sample(rng, n2);
        Self::new(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn disc(atoms: &[(f64, f64)]) -> Measure<f64> {
        DiscreteMeasure::new(atoms.to_vec()).unwrap().into()
    }

    #[test]
    fn integrate_examples() {
        let point = disc(&[(3.0, 1.0)]);
        assert_eq!(point.integrate(|x| x).unwrap(), 3.0);
        let two = disc(&[(1.0, 0.5), (2.0, 0.5)]);
        assert_eq!(two.integrate(|x| x * x).unwrap(), 2.5);
        let pw: Measure<f64> = PiecewiseUniformMeasure::new(vec![0.0, 1.0, 3.0], vec![0.25, 0.75])
            .unwrap()
            .into();
        assert!((pw.integrate(|_| 1.0).unwrap() - 1.0).abs() < 1e-12);
        let exact = pw.integrate_poly(&[0.0, 0.0, 1.0]);
        let quad = pw.integrate(|x| x * x).unwrap();
        assert!((exact - quad).abs() < 1e-10);
        assert!((exact - (0.25 / 3.0 + 0.75 * 26.0 / 6.0)).abs() < 1e-14);
    }

    #[test]
    fn integrate_rejects_nan() {
        let m = disc(&[(0.0, 0.5), (1.0, 0.5)]);
        let r = m.integrate(|x| if x > 0.5 { f64::INFINITY } else { 0.0 });
        assert_eq!(r, Err(Error::NonFiniteFunctionValue { at: 1.0 }));
    }

    #[test]
    fn cdf_sides() {
        let m = disc(&[(0.0, 1.0)]);
        assert_eq!(m.cdf(0.0, Side::RightClosed), 1.0);
        assert_eq!(m.cdf(0.0, Side::LeftOpen), 0.0);
        let u: Measure<f64> = DiscreteMeasure::uniform(&[1.0, 2.0, 3.0]).unwrap().into();
        assert!((u.cdf(2.0, Side::RightClosed) - 2.0 / 3.0).abs() < 1e-15);
        let pw: Measure<f64> = PiecewiseUniformMeasure::uniform(0.0, 2.0).unwrap().into();
        assert_eq!(pw.cdf(0.5, Side::LeftOpen), 0.25);
        assert_eq!(pw.cdf(5.0, Side::RightClosed), 1.0);
    }

    #[test]
    fn constructor_validation() {
        assert!(DiscreteMeasure::new(vec![(0.0, 0.5), (0.0, 0.5)]).is_err());
        assert!(DiscreteMeasure::new(vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(DiscreteMeasure::new(vec![(0.0, 0.5), (1.0, 0.6)]).is_err());
        let m = DiscreteMeasure::new(vec![(1.0, 0.5), (0.0, 0.5 + 5e-10)]).unwrap();
        assert_eq!(m.locations(), &[0.0, 1.0]);
        let s: f64 = m.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(PiecewiseUniformMeasure::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(PiecewiseUniformMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn distance_examples() {
        let p = disc(&[(0.0, 0.5), (1.0, 0.5)]);
        let q = disc(&[(0.0, 1.0)]);
        assert_eq!(tv_distance(&p, &p), 0.0);
        assert_eq!(tv_distance(&p, &q), 0.5);
        assert_eq!(tv_distance(&disc(&[(0.0, 1.0)]), &disc(&[(1.0, 1.0)])), 1.0);
        assert_eq!(hellinger(&disc(&[(0.0, 1.0)]), &disc(&[(1.0, 1.0)])), 1.0);
        assert_eq!(hellinger(&p, &p), 0.0);
        let r = disc(&[(0.0, 0.9), (1.0, 0.1)]);
        let expect = (1.0 - (0.45f64.sqrt() + 0.05f64.sqrt())).sqrt();
        assert!((hellinger(&p, &r) - expect).abs() < 1e-12);
        let c: Measure<f64> = PiecewiseUniformMeasure::uniform(0.0, 1.0).unwrap().into();
        assert_eq!(tv_distance(&p, &c), 1.0);
        assert_eq!(hellinger(&c, &p), 1.0);
    }

    #[test]
    fn continuous_distances_on_refinement() {
        let a: Measure<f64> = PiecewiseUniformMeasure::uniform(0.0, 1.0).unwrap().into();
        let b: Measure<f64> = PiecewiseUniformMeasure::uniform(0.5, 1.5).unwrap().into();
        assert!((tv_distance(&a, &b) - 0.5).abs() < 1e-15);
        assert!((hellinger(&a, &b) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn product_integrate_examples() {
        let u = disc(&[(1.0, 0.5), (2.0, 0.5)]);
        let ge = |x: f64, y: f64| if x >= y { 1.0 } else { 0.0 };
        assert_eq!(product_integrate(&u, &u, ge).unwrap(), 0.75);
        assert_eq!(product_integrate(&u, &u, |_, _| 4.0).unwrap(), 4.0);
        let p = disc(&[(1.0, 1.0)]);
        let q = disc(&[(0.0, 1.0)]);
        assert_eq!(product_integrate(&p, &q, ge).unwrap(), 1.0);
        let c: Measure<f64> = PiecewiseUniformMeasure::uniform(0.0, 1.0).unwrap().into();
        let v = product_integrate(&c, &c, ge).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sampling() {
        let m = disc(&[(7.0, 1.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.sample(&mut rng, 5), vec![7.0; 5]);
        let u = disc(&[(0.0, 0.5), (1.0, 0.5)]);
        let draws = u.sample(&mut rng, 100_000);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
        let a = u.sample(&mut ChaCha8Rng::seed_from_u64(9), 50);
        let b = u.sample(&mut ChaCha8Rng::seed_from_u64(9), 50);
        assert_eq!(a, b);
    }

    #[test]
    fn pwuniform_sampling_skips_empty_segments() {
        let m: Measure<f64> =
            PiecewiseUniformMeasure::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.5, 0.0, 0.5]).unwrap().into();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x in m.sample(&mut rng, 10_000) {
            assert!(!(x > 1.0 && x < 2.0));
            assert!((0.0..=3.0).contains(&x));
        }
        assert_eq!(m.quantile(0.25), 0.5);
        assert_eq!(m.quantile(0.75), 2.5);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = disc(&[(0.1, 0.3), (1.0 / 3.0, 0.7)]);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.starts_with(r#"{"kind":"discrete","atoms":[[0.1,0.3]"#));
        let back: Measure<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let pw: Measure<f64> =
            serde_json::from_str(r#"{"kind":"pwuniform","breaks":[0,0.7,2],"masses":[0.3,0.7]}"#).unwrap();
        let again: Measure<f64> = serde_json::from_str(&serde_json::to_string(&pw).unwrap()).unwrap();
        assert_eq!(again, pw);
        let bad = serde_json::from_str::<Measure<f64>>(r#"{"kind":"discrete","atoms":[[0,0.5]]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn generic_over_f32() {
        let m: Measure<f32> = DiscreteMeasure::uniform(&[1.0f32, 2.0]).unwrap().into();
        assert_eq!(m.integrate(|x| x * x).unwrap(), 2.5f32);
    }

    fn arb_discrete(max: usize) -> impl Strategy<Value = Measure<f64>> {
        proptest::collection::vec((0u8..6, 1u32..100), 1..=max).prop_filter_map("distinct", |raw| {
            let mut seen = std::collections::BTreeMap::new();
            for (loc, w) in raw {
                seen.insert(loc, w);
            }
            let total: u32 = seen.values().sum();
            let atoms = seen
                .into_iter()
                .map(|(l, w)| (l as f64, w as f64 / total as f64))
                .collect();
            DiscreteMeasure::new(atoms).ok().map(Measure::from)
        })
    }

    proptest! {
        #[test]
        fn tv_is_sup_over_events(p in arb_discrete(4), q in arb_discrete(4)) {
            let mut support: Vec<f64> = p.kinks().iter().chain(q.kinks()).copied().collect();
            support.sort_by(|a, b| a.partial_cmp(b).unwrap());
            support.dedup();
            let mut best: f64 = 0.0;
            for mask in 0u32..(1 << support.len()) {
                let set: Vec<f64> = (0..support.len())
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| support[i])
                    .collect();
                let ind = |x: f64| if set.contains(&x) { 1.0 } else { 0.0 };
                let gap = p.integrate(ind).unwrap() - q.integrate(ind).unwrap();
                best = best.max(gap.abs());
            }
            prop_assert!((tv_distance(&p, &q) - best).abs() < 1e-12);
        }

        #[test]
        fn hellinger_sandwiches_tv(p in arb_discrete(5), q in arb_discrete(5)) {
            let tv = tv_distance(&p, &q);
            let h = hellinger(&p, &q);
            prop_assert!(h * h <= tv + 1e-12);
            prop_assert!(tv <= std::f64::consts::SQRT_2 * h + 1e-12);
        }

        #[test]
        fn test_functions_move_by_at_most_twice_tv(
            p in arb_discrete(5),
            q in arb_discrete(5),
            phi in proptest::collection::vec(0.0f64..=1.0, 6),
        ) {
            let f = |x: f64| phi[x as usize];
            let gap = (p.integrate(f).unwrap() - q.integrate(f).unwrap()).abs();
            prop_assert!(gap <= 2.0 * tv_distance(&p, &q) + 1e-12);
        }

        #[test]
        fn integrate_is_linear(p in arb_discrete(5), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let lhs = p.integrate(|x| a * x.sin() + b * x * x).unwrap();
            let rhs = a * p.integrate(f64::sin).unwrap() + b * p.integrate(|x| x * x).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
