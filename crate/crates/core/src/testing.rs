//! Two-sample tests built on the canonical gradient: statistics, critical values, and reports.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::normal_quantile;
use crate::error::{Error, Result};
use crate::functionals::{CompositeOp, Functional, GradientPair, Kernel, Score};
use crate::measures::{Measure, ProductSample};
use crate::scalar::Real;
use crate::tangents::Tangent;

/// One-sided tests reject large values, two-sided tests large absolute values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sided {
    #[default]
    One,
    Two,
}

impl FromStr for Sided {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Sided::One),
            "two" => Ok(Sided::Two),
            _ => Err(Error::InvalidArgument(format!("sided must be `one` or `two`, got `{s}`"))),
        }
    }
}

/// Exhaustive enumeration is used up to this many group assignments.
pub const EXHAUSTIVE_LIMIT: u64 = 200_000;
/// Default number of random assignments beyond [`EXHAUSTIVE_LIMIT`].
pub const DEFAULT_PERMUTATIONS: usize = 100_000;

/// Where the critical value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CriticalValueSource {
    /// Gradient and variance at a known footpoint.
    Exact,
    /// Sample variances of a composite sum functional.
    PluginSum,
    /// Delta-method variance of a composite product functional.
    PluginProduct,
    /// Wilcoxon functional with U-statistic variance estimates.
    UstatW,
    /// Rank statistic with its permutation distribution; `b` random assignments when
    /// enumeration is too large.
    Permutation { b: usize },
}

impl CriticalValueSource {
    pub fn tag(&self) -> &'static str {
        match self {
            CriticalValueSource::Exact => "exact",
            CriticalValueSource::PluginSum => "plugin_sum",
            CriticalValueSource::PluginProduct => "plugin_product",
            CriticalValueSource::UstatW => "ustat_w",
            CriticalValueSource::Permutation { .. } => "permutation",
        }
    }
}

impl fmt::Display for CriticalValueSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriticalValueSource::Permutation { b } if *b != DEFAULT_PERMUTATIONS => {
                write!(f, "permutation({b})")
            }
            other => f.write_str(other.tag()),
        }
    }
}

impl FromStr for CriticalValueSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "exact" => return Ok(CriticalValueSource::Exact),
            "plugin_sum" => return Ok(CriticalValueSource::PluginSum),
            "plugin_product" => return Ok(CriticalValueSource::PluginProduct),
            "ustat_w" => return Ok(CriticalValueSource::UstatW),
            "permutation" => return Ok(CriticalValueSource::Permutation { b: DEFAULT_PERMUTATIONS }),
            _ => {}
        }
        s.strip_prefix("permutation(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|b| b.trim().parse().ok())
            .map(|b| CriticalValueSource::Permutation { b })
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown source `{s}`; expected exact | plugin_sum | plugin_product | ustat_w | permutation(B)"
                ))
            })
    }
}

impl TryFrom<String> for CriticalValueSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CriticalValueSource> for String {
    fn from(s: CriticalValueSource) -> String {
        s.to_string()
    }
}

/// What to test and how.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpec<T: Real> {
    pub functional: Functional<T>,
    /// Boundary `a` of the hypothesis `k ≤ a`. Defaults: footpoint value (exact), ½ (Wilcoxon sources).
    pub null_value: Option<T>,
    pub sided: Sided,
    pub alpha: T,
    pub source: CriticalValueSource,
}

impl<T: Real> TestSpec<T> {
    pub fn new(functional: Functional<T>, source: CriticalValueSource) -> Self {
        Self { functional, null_value: None, sided: Sided::One, alpha: T::lit(0.05), source }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::DomainError(format!("alpha = {} not in (0, 1)", self.alpha)));
        }
        if let CriticalValueSource::Permutation { b } = self.source {
            if b < 1000 {
                return Err(Error::InvalidArgument(format!("permutation needs B >= 1000, got {b}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestReport<T: Real> {
    pub statistic: T,
    pub critical_value: T,
    /// Rejection probability when the statistic sits exactly on the critical value.
    pub gamma: T,
    pub reject: bool,
    /// Estimated or exact asymptotic standard deviation; absent for permutation tests.
    pub sigma1: Option<T>,
    pub source: String,
    /// Uniform draw that settled a randomized verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_uniform: Option<T>,
}

fn need(n: usize, k: usize) -> Result<()> {
    if n < k {
        Err(Error::TooFewObservations { needed: k, got: n })
    } else {
        Ok(())
    }
}

fn sqrt_n<T: Real>(s: &ProductSample<T>) -> T {
    T::count(s.n()).sqrt()
}

fn mean_of<T: Real>(v: impl Iterator<Item = T>) -> (T, usize) {
    let (mut acc, mut n) = (T::zero(), 0);
    for x in v {
        acc = acc + x;
        n += 1;
    }
    (acc / T::count(n.max(1)), n)
}

/// Mean and `(n−1)`-denominator variance.
fn mean_var<T: Real>(v: &[T]) -> (T, T) {
    let (m, n) = mean_of(v.iter().copied());
    let ss: T = v.iter().map(|&x| (x - m) * (x - m)).sum();
    (m, ss / T::count(n - 1))
}

/// `T_n = (√n/n1)Σk̃1(x_i) + (√n/n2)Σk̃2(y_j)`.
pub fn t_statistic<T: Real>(gp: &GradientPair<T>, s: &ProductSample<T>) -> Result<T> {
    let mut a = T::zero();
    for &x in s.x() {
        a = a + gp.k1.at(x)?;
    }
    let mut b = T::zero();
    for &y in s.y() {
        b = b + gp.k2.at(y)?;
    }
    Ok(sqrt_n(s) * (a / T::count(s.n1()) + b / T::count(s.n2())))
}

/// `σ1 = (‖k̃1‖²/(1−d) + ‖k̃2‖²/d)^{1/2}`.
pub fn sigma1_exact<T: Real>(gp: &GradientPair<T>, d: T) -> Result<T> {
    if !(d > T::zero() && d < T::one()) {
        return Err(Error::InvalidArgument(format!("d = {d} not in (0, 1)")));
    }
    if gp.is_degenerate() {
        return Err(Error::DegenerateGradient);
    }
    let (a, b) = gp.norms_sq();
    Ok((a / (T::one() - d) + b / d).sqrt())
}

/// `u_{1−α}σ1` one-sided, `u_{1−α/2}σ1` two-sided.
pub fn critical_value<T: Real>(alpha: T, sided: Sided, sigma1: T) -> Result<T> {
    if !(sigma1 > T::zero()) {
        return Err(Error::DegenerateGradient);
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::DomainError(format!("alpha = {alpha} not in (0, 1)")));
    }
    let level = match sided {
        Sided::One => T::one() - alpha,
        Sided::Two => T::one() - alpha * T::lit(0.5),
    };
    Ok(normal_quantile(level)? * sigma1)
}

/// `(n/n1·σ̂²(f1) + n/n2·σ̂²(f2))^{1/2}` with unbiased sample variances.
pub fn sigma1_plugin_sum<T: Real>(
    s: &ProductSample<T>,
    f1: impl Fn(T) -> T,
    f2: impl Fn(T) -> T,
) -> Result<T> {
    need(s.n1().min(s.n2()), 2)?;
    let a: Vec<T> = s.x().iter().map(|&x| f1(x)).collect();
    let b: Vec<T> = s.y().iter().map(|&y| f2(y)).collect();
    let n = T::count(s.n());
    let (_, va) = mean_var(&a);
    let (_, vb) = mean_var(&b);
    Ok((n / T::count(s.n1()) * va + n / T::count(s.n2()) * vb).sqrt())
}

/// `(n/n1·f̄2²σ̂²(f1) + n/n2·f̄1²σ̂²(f2))^{1/2}`.
pub fn sigma1_plugin_product<T: Real>(
    s: &ProductSample<T>,
    f1: impl Fn(T) -> T,
    f2: impl Fn(T) -> T,
) -> Result<T> {
    need(s.n1().min(s.n2()), 2)?;
    let a: Vec<T> = s.x().iter().map(|&x| f1(x)).collect();
    let b: Vec<T> = s.y().iter().map(|&y| f2(y)).collect();
    let n = T::count(s.n());
    let (ma, va) = mean_var(&a);
    let (mb, vb) = mean_var(&b);
    Ok((n / T::count(s.n1()) * mb * mb * va + n / T::count(s.n2()) * ma * ma * vb).sqrt())
}

/// Unbiased estimate of `∫(∫h(x, y) dQ(y))² dP(x)` from the pairs `j ≠ k` of the second sample.
pub fn u_variance_estimator<T: Real>(h: impl Fn(T, T) -> T, s: &ProductSample<T>) -> Result<T> {
    need(s.n2(), 2)?;
    let mut acc = T::zero();
    for &x in s.x() {
        let (mut lin, mut sq) = (T::zero(), T::zero());
        for &y in s.y() {
            let v = h(x, y);
            lin = lin + v;
            sq = sq + v * v;
        }
        acc = acc + lin * lin - sq;
    }
    let (n1, n2) = (T::count(s.n1()), T::count(s.n2()));
    Ok(acc / (n1 * n2 * (n2 - T::one())))
}

fn sorted<T: Real>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    out
}

/// `(ŵ1, ŵ2)`: [`u_variance_estimator`] with kernel `1{x ≤ y} − ½`, conditioned on `x` and on `y`.
pub fn wilcoxon_w_estimators<T: Real>(s: &ProductSample<T>) -> Result<(T, T)> {
    need(s.n1().min(s.n2()), 2)?;
    let (n1, n2) = (s.n1(), s.n2());
    let ys = sorted(s.y());
    let xs = sorted(s.x());
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    let mut a1 = T::zero();
    for &x in s.x() {
        let ge = n2 - ys.partition_point(|&y| y < x);
        let c = T::count(ge) - half * T::count(n2);
        a1 = a1 + c * c - quarter * T::count(n2);
    }
    let mut a2 = T::zero();
    for &y in s.y() {
        let le = xs.partition_point(|&x| x <= y);
        let c = T::count(le) - half * T::count(n1);
        a2 = a2 + c * c - quarter * T::count(n1);
    }
    let (f1, f2) = (T::count(n1), T::count(n2));
    Ok((a1 / (f1 * f2 * (f2 - T::one())), a2 / (f2 * f1 * (f1 - T::one()))))
}

/// `#{(i, j) : y_j ≤ x_i}`.
pub fn pair_count<T: Real>(s: &ProductSample<T>) -> u64 {
    let ys = sorted(s.y());
    s.x().iter().map(|&x| ys.partition_point(|&y| y <= x) as u64).sum()
}

/// `√n(U/(n1 n2) − ½)` with `U = #{y_j ≤ x_i}`; ties are allowed.
pub fn wilcoxon_tilde_statistic<T: Real>(s: &ProductSample<T>) -> T {
    let u = T::lit(pair_count(s) as f64);
    let pairs = T::count(s.n1()) * T::count(s.n2());
    sqrt_n(s) * (u / pairs - T::lit(0.5))
}

fn has_ties<T: Real>(s: &ProductSample<T>) -> bool {
    let mut pooled: Vec<T> = s.x().iter().chain(s.y()).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    pooled.windows(2).any(|w| w[0] == w[1])
}

/// Sum of the pooled ranks of the first sample; `TiedObservations` if any value repeats.
pub fn first_sample_rank_sum<T: Real>(s: &ProductSample<T>) -> Result<u64> {
    if has_ties(s) {
        return Err(Error::TiedObservations);
    }
    let n1 = s.n1() as u64;
    Ok(n1 * (n1 + 1) / 2 + pair_count(s))
}

/// `2S − n1(n+1)` from the rank sum `S`; zero-centered under exchangeability.
fn rank_key(rank_sum: u64, n1: usize, n2: usize) -> i64 {
    2 * rank_sum as i64 - (n1 * (n1 + n2 + 1)) as i64
}

fn rank_scale<T: Real>(n1: usize, n2: usize) -> T {
    T::count(n1 + n2).sqrt() / (T::lit(2.0) * T::count(n1) * T::count(n2))
}

/// `(1/(n1√n))ΣR_x − (1/(n2√n))ΣR_y` over pooled ranks. Requires no ties.
pub fn rank_statistic<T: Real>(s: &ProductSample<T>) -> Result<T> {
    let key = rank_key(first_sample_rank_sum(s)?, s.n1(), s.n2());
    Ok(rank_scale::<T>(s.n1(), s.n2()) * T::lit(key as f64))
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Permutation law of the rank statistic for sample sizes `(n1, n2)`.
///
/// Without ties it does not depend on the data, so one instance serves every sample of
/// the same sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPermutationNull {
    n1: usize,
    n2: usize,
    exhaustive: bool,
    /// `(key, count)` sorted by key, where `key = 2S − n1(n+1)`.
    counts: Vec<(i64, u64)>,
    total: u64,
}

impl RankPermutationNull {
    /// Enumerates every assignment when there are at most [`EXHAUSTIVE_LIMIT`], else draws `b`.
    pub fn new<R: Rng + ?Sized>(n1: usize, n2: usize, b: usize, rng: &mut R) -> Self {
        if binomial(n1 + n2, n1) <= EXHAUSTIVE_LIMIT {
            Self::exhaustive(n1, n2)
        } else {
            Self::sampled(n1, n2, b, rng)
        }
    }

    pub fn exhaustive(n1: usize, n2: usize) -> Self {
        let n = n1 + n2;
        let mut idx: Vec<usize> = (0..n1).collect();
        let mut tally: HashMap<i64, u64> = HashMap::new();
        loop {
            let s: usize = idx.iter().map(|i| i + 1).sum();
            *tally.entry(rank_key(s as u64, n1, n2)).or_default() += 1;
            // Next n1-combination of 0..n in lexicographic order.
            let mut i = n1;
            while i > 0 && idx[i - 1] == n - n1 + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..n1 {
                idx[j] = idx[j - 1] + 1;
            }
        }
        Self::from_tally(n1, n2, true, tally)
    }

    pub fn sampled<R: Rng + ?Sized>(n1: usize, n2: usize, b: usize, rng: &mut R) -> Self {
        let n = n1 + n2;
        let mut tally: HashMap<i64, u64> = HashMap::new();
        for _ in 0..b {
            let s: usize = index::sample(rng, n, n1).iter().map(|i| i + 1).sum();
            *tally.entry(rank_key(s as u64, n1, n2)).or_default() += 1;
        }
        Self::from_tally(n1, n2, false, tally)
    }

    fn from_tally(n1: usize, n2: usize, exhaustive: bool, tally: HashMap<i64, u64>) -> Self {
        let mut counts: Vec<(i64, u64)> = tally.into_iter().collect();
        counts.sort_unstable();
        let total = counts.iter().map(|c| c.1).sum();
        Self { n1, n2, exhaustive, counts, total }
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    /// Law of the test key: `key` one-sided, `|key|` two-sided, as `(value, probability)` ascending.
    pub fn law(&self, sided: Sided) -> Vec<(i64, f64)> {
        let mut folded: Vec<(i64, u64)> = match sided {
            Sided::One => self.counts.clone(),
            Sided::Two => {
                let mut m: HashMap<i64, u64> = HashMap::new();
                for &(k, c) in &self.counts {
                    *m.entry(k.abs()).or_default() += c;
                }
                m.into_iter().collect()
            }
        };
        folded.sort_unstable();
        let total = self.total as f64;
        folded.into_iter().map(|(k, c)| (k, c as f64 / total)).collect()
    }

    /// Critical key `c` and weight `γ` with `P(K > c) + γ·P(K = c) = α`.
    pub fn critical_key(&self, alpha: f64, sided: Sided) -> (i64, f64) {
        let mut folded: Vec<(i64, u64)> = match sided {
            Sided::One => self.counts.clone(),
            Sided::Two => {
                let mut m: HashMap<i64, u64> = HashMap::new();
                for &(k, c) in &self.counts {
                    *m.entry(k.abs()).or_default() += c;
                }
                m.into_iter().collect()
            }
        };
        folded.sort_unstable_by(|a, b| b.0.cmp(&a.0));
        let budget = alpha * self.total as f64;
        let mut above: u64 = 0;
        for &(k, c) in &folded {
            if (above + c) as f64 >= budget {
                let gamma = (budget - above as f64) / c as f64;
                return (k, gamma.clamp(0.0, 1.0));
            }
            above += c;
        }
        let (k, _) = *folded.last().expect("nonempty law");
        (k, 1.0)
    }

    /// Critical value on the scale of [`rank_statistic`] and its randomization weight.
    pub fn critical<T: Real>(&self, alpha: T, sided: Sided) -> (T, T) {
        let (k, g) = self.critical_key(alpha.as_f64(), sided);
        (rank_scale::<T>(self.n1, self.n2) * T::lit(k as f64), T::lit(g))
    }

    /// Exact rejection probability of the randomized test `(c, γ)` under this law.
    pub fn rejection_probability(&self, key: i64, gamma: f64, sided: Sided) -> f64 {
        let law = self.law(sided);
        let above: f64 = law.iter().filter(|(k, _)| *k > key).map(|(_, p)| p).sum();
        let at: f64 = law.iter().filter(|(k, _)| *k == key).map(|(_, p)| p).sum();
        above + gamma * at
    }
}

/// Permutation critical value `(c, γ)` of the rank statistic at level `α`.
pub fn permutation_critical<T: Real, R: Rng + ?Sized>(
    s: &ProductSample<T>,
    alpha: T,
    sided: Sided,
    b: usize,
    rng: &mut R,
) -> Result<(T, T)> {
    if has_ties(s) {
        return Err(Error::TiedObservations);
    }
    Ok(RankPermutationNull::new(s.n1(), s.n2(), b, rng).critical(alpha, sided))
}

/// `n^{-1/2} Σ k̃(z_i)`; reject when it exceeds `u_{1−α}‖k̃‖`.
pub fn one_sample_statistic<T: Real>(k_tilde: &Tangent<T>, z: &[T]) -> Result<T> {
    need(z.len(), 1)?;
    let mut acc = T::zero();
    for &v in z {
        acc = acc + k_tilde.at(v)?;
    }
    Ok(acc / T::count(z.len()).sqrt())
}

/// A test with everything that does not depend on the data computed once.
#[derive(Debug)]
pub struct PreparedTest<T: Real> {
    spec: TestSpec<T>,
    a: T,
    exact: Option<(GradientPair<T>, (T, T))>,
    scores: Option<(Score<T>, Score<T>)>,
    null_seed: u64,
    nulls: Mutex<HashMap<(usize, usize), Arc<RankPermutationNull>>>,
}

impl<T: Real> PreparedTest<T> {
    /// `footpoint` is required by the exact source and ignored otherwise.
    pub fn new(spec: TestSpec<T>, footpoint: Option<(&Measure<T>, &Measure<T>)>) -> Result<Self> {
        spec.validate()?;
        let wilcoxon_like = matches!(
            spec.functional,
            Functional::Wilcoxon | Functional::VonMises { h: Kernel::XGeY }
        );
        let mismatch = || {
            Error::InvalidArgument(format!(
                "source `{}` does not apply to this functional",
                spec.source.tag()
            ))
        };
        let mut exact = None;
        let mut scores = None;
        let a = match spec.source {
            CriticalValueSource::Exact => {
                let (p0, q0) = footpoint.ok_or_else(|| {
                    Error::InvalidArgument("the exact source needs footpoint measures".into())
                })?;
                let gp = spec.functional.gradient(p0, q0)?;
                if gp.is_degenerate() {
                    return Err(Error::DegenerateGradient);
                }
                let a = gp.value;
                if let Some(given) = spec.null_value {
                    if (given - a).abs() > T::tol(1e-9) * (T::one() + a.abs()) {
                        return Err(Error::InvalidArgument(format!(
                            "null value {given} differs from the functional at the footpoint ({a})"
                        )));
                    }
                }
                let norms = gp.norms_sq();
                exact = Some((gp, norms));
                a
            }
            CriticalValueSource::PluginSum | CriticalValueSource::PluginProduct => {
                let want = if spec.source == CriticalValueSource::PluginSum {
                    CompositeOp::Sum
                } else {
                    CompositeOp::Product
                };
                match spec.functional {
                    Functional::Composite { op, f1, f2 } if op == want => scores = Some((f1, f2)),
                    _ => return Err(mismatch()),
                }
                spec.null_value.ok_or_else(|| {
                    Error::InvalidArgument("plug-in sources need a null value".into())
                })?
            }
            CriticalValueSource::UstatW => {
                if !wilcoxon_like {
                    return Err(mismatch());
                }
                spec.null_value.unwrap_or(T::lit(0.5))
            }
            CriticalValueSource::Permutation { .. } => {
                if !wilcoxon_like {
                    return Err(mismatch());
                }
                let a = spec.null_value.unwrap_or(T::lit(0.5));
                if a != T::lit(0.5) {
                    return Err(Error::InvalidArgument(
                        "the permutation test is for the null value 1/2".into(),
                    ));
                }
                a
            }
        };
        Ok(Self { spec, a, exact, scores, null_seed: 0, nulls: Mutex::new(HashMap::new()) })
    }

    /// Seed for the random assignments of a sampled permutation law.
    pub fn with_null_seed(mut self, seed: u64) -> Self {
        self.null_seed = seed;
        self
    }

    pub fn spec(&self) -> &TestSpec<T> {
        &self.spec
    }

    pub fn null_value(&self) -> T {
        self.a
    }

    pub fn gradient(&self) -> Option<&GradientPair<T>> {
        self.exact.as_ref().map(|e| &e.0)
    }

    /// Cached permutation law for the given sizes.
    pub fn permutation_null(&self, n1: usize, n2: usize) -> Arc<RankPermutationNull> {
        let b = match self.spec.source {
            CriticalValueSource::Permutation { b } => b,
            _ => DEFAULT_PERMUTATIONS,
        };
        let mut cache = self.nulls.lock().expect("permutation cache");
        cache
            .entry((n1, n2))
            .or_insert_with(|| {
                let seed = self.null_seed ^ ((n1 as u64) << 32 | n2 as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Arc::new(RankPermutationNull::new(n1, n2, b, &mut rng))
            })
            .clone()
    }

    /// Runs the test; `rng` is used only for the auxiliary draw of randomized verdicts.
    pub fn run<R: Rng + ?Sized>(&self, s: &ProductSample<T>, rng: &mut R) -> Result<TestReport<T>> {
        let sided = self.spec.sided;
        let alpha = self.spec.alpha;
        let rn = sqrt_n(s);
        let (statistic, sigma1) = match self.spec.source {
            CriticalValueSource::Exact => {
                let (gp, (a, b)) = self.exact.as_ref().expect("prepared");
                let d = s.d_hat();
                let sigma = (*a / (T::one() - d) + *b / d).sqrt();
                (t_statistic(gp, s)?, sigma)
            }
            CriticalValueSource::PluginSum => {
                let (f1, f2) = self.scores.expect("prepared");
                let sigma = sigma1_plugin_sum(s, |x| f1.eval(x), |y| f2.eval(y))?;
                let (m1, _) = mean_of(s.x().iter().map(|&x| f1.eval(x)));
                let (m2, _) = mean_of(s.y().iter().map(|&y| f2.eval(y)));
                (rn * (m1 + m2 - self.a), sigma)
            }
            CriticalValueSource::PluginProduct => {
                let (f1, f2) = self.scores.expect("prepared");
                let sigma = sigma1_plugin_product(s, |x| f1.eval(x), |y| f2.eval(y))?;
                let (m1, _) = mean_of(s.x().iter().map(|&x| f1.eval(x)));
                let (m2, _) = mean_of(s.y().iter().map(|&y| f2.eval(y)));
                (rn * m1 * m2 - rn * self.a, sigma)
            }
            CriticalValueSource::UstatW => {
                let (w1, w2) = wilcoxon_w_estimators(s)?;
                let n = T::count(s.n());
                let v = n / T::count(s.n1()) * w1 + n / T::count(s.n2()) * w2;
                let u = T::lit(pair_count(s) as f64) / (T::count(s.n1()) * T::count(s.n2()));
                (rn * (u - self.a), v.max(T::zero()).sqrt())
            }
            CriticalValueSource::Permutation { .. } => return self.run_permutation(s, rng),
        };
        let critical = critical_value(alpha, sided, sigma1)?;
        let tested = match sided {
            Sided::One => statistic,
            Sided::Two => statistic.abs(),
        };
        Ok(TestReport {
            statistic,
            critical_value: critical,
            gamma: T::zero(),
            reject: tested > critical,
            sigma1: Some(sigma1),
            source: self.spec.source.tag().to_string(),
            aux_uniform: None,
        })
    }

    fn run_permutation<R: Rng + ?Sized>(
        &self,
        s: &ProductSample<T>,
        rng: &mut R,
    ) -> Result<TestReport<T>> {
        let (n1, n2) = (s.n1(), s.n2());
        let key = rank_key(first_sample_rank_sum(s)?, n1, n2);
        let null = self.permutation_null(n1, n2);
        let sided = self.spec.sided;
        let (c_key, gamma) = null.critical_key(self.spec.alpha.as_f64(), sided);
        let tested = match sided {
            Sided::One => key,
            Sided::Two => key.abs(),
        };
        let u: f64 = rng.gen();
        let reject = tested > c_key || (tested == c_key && u < gamma);
        let scale = rank_scale::<T>(n1, n2);
        Ok(TestReport {
            statistic: scale * T::lit(key as f64),
            critical_value: scale * T::lit(c_key as f64),
            gamma: T::lit(gamma),
            reject,
            sigma1: None,
            source: self.spec.source.tag().to_string(),
            aux_uniform: Some(T::lit(u)),
        })
    }
}

/// One-shot test. `seed` drives the auxiliary draw and any sampled permutation law.
pub fn run_test<T: Real>(
    spec: &TestSpec<T>,
    s: &ProductSample<T>,
    footpoint: Option<(&Measure<T>, &Measure<T>)>,
    seed: u64,
) -> Result<TestReport<T>> {
    let prepared = PreparedTest::new(spec.clone(), footpoint)?.with_null_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    prepared.run(s, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiscreteMeasure;

    fn sample(x: &[f64], y: &[f64]) -> ProductSample<f64> {
        ProductSample::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn base(locs: &[f64]) -> Arc<Measure<f64>> {
        Arc::new(DiscreteMeasure::uniform(locs).unwrap().into())
    }

    fn pair(k1: Vec<f64>, k2: Vec<f64>, b1: &[f64], b2: &[f64]) -> GradientPair<f64> {
        GradientPair {
            k1: Tangent::new(base(b1), k1).unwrap(),
            k2: Tangent::new(base(b2), k2).unwrap(),
            value: 0.0,
        }
    }

    #[test]
    fn statistic_examples() {
        let z = pair(vec![0.0, 0.0], vec![0.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]);
        let s = sample(&[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(t_statistic(&z, &s).unwrap(), 0.0);
        let g = pair(vec![-1.0, 1.0], vec![0.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]);
        let s = sample(&[1.0, 1.0], &[0.0, 1.0]);
        assert_eq!(t_statistic(&g, &s).unwrap(), 2.0 / 2.0 * 2.0);
    }

    #[test]
    fn sigma1_examples() {
        let g = pair(vec![-1.0, 1.0], vec![-1.0, 1.0], &[0.0, 1.0], &[0.0, 1.0]);
        assert_eq!(sigma1_exact(&g, 0.5).unwrap(), 2.0);
        let h = pair(vec![-1.0, 1.0], vec![0.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]);
        assert!((sigma1_exact(&h, 0.2).unwrap() - 1.0 / 0.8f64.sqrt()).abs() < 1e-15);
        let z = pair(vec![0.0, 0.0], vec![0.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]);
        assert_eq!(sigma1_exact(&z, 0.5), Err(Error::DegenerateGradient));
    }

    #[test]
    fn critical_value_examples() {
        assert_eq!(critical_value(0.5, Sided::One, 1.0).unwrap(), 0.0);
        assert!((critical_value(0.05_f64, Sided::One, 1.0).unwrap() - 1.6449).abs() < 1e-4);
        let two = critical_value(0.05, Sided::Two, 1.3).unwrap();
        let one = critical_value(0.025, Sided::One, 1.3).unwrap();
        assert_eq!(two, one);
        assert_eq!(critical_value(0.05, Sided::One, 0.0), Err(Error::DegenerateGradient));
    }

    #[test]
    fn plugin_examples() {
        let s = sample(&[0.0, 2.0], &[5.0, 7.0]);
        assert_eq!(sigma1_plugin_sum(&s, |_| 1.0, |_| 2.0).unwrap(), 0.0);
        assert_eq!(sigma1_plugin_sum(&s, |x| x, |_| 3.0).unwrap(), 2.0);
        let p = sigma1_plugin_product(&s, |x| x, |_| 1.0).unwrap();
        assert!((p - (4.0f64 / 2.0).sqrt() * 2f64.sqrt()).abs() < 1e-15);
        let zero_mean = sample(&[-1.0, 1.0], &[5.0, 7.0]);
        let q = sigma1_plugin_product(&zero_mean, |x| x, |y| y).unwrap();
        assert!((q - (2.0 * 36.0 * 2.0f64).sqrt()).abs() < 1e-12);
        let short = sample(&[1.0], &[1.0, 2.0]);
        assert!(matches!(
            sigma1_plugin_sum(&short, |x| x, |y| y),
            Err(Error::TooFewObservations { .. })
        ));
    }

    #[test]
    fn u_variance_examples() {
        let s = sample(&[0.3], &[1.0, 2.0]);
        assert_eq!(u_variance_estimator(|_, _| 0.0, &s).unwrap(), 0.0);
        let h = |x: f64, y: f64| x * y - 0.1;
        let v = u_variance_estimator(h, &s).unwrap();
        assert!((v - h(0.3, 1.0) * h(0.3, 2.0)).abs() < 1e-15);
        assert!(u_variance_estimator(h, &sample(&[0.3], &[1.0])).is_err());
    }

    #[test]
    fn w_estimators_examples() {
        let below = sample(&[0.0, 1.0, 2.0], &[5.0, 6.0]);
        let (w1, w2) = wilcoxon_w_estimators(&below).unwrap();
        assert_eq!((w1, w2), (0.25, 0.25));
        let above = sample(&[10.0, 11.0], &[5.0, 6.0, 7.0]);
        assert_eq!(wilcoxon_w_estimators(&above).unwrap(), (0.25, 0.25));
    }

    #[test]
    fn w_estimators_match_generic_estimator() {
        let s = sample(&[0.1, 0.9, 0.4, 0.5, 0.2], &[0.3, 0.5, 0.8, 0.05]);
        let (w1, w2) = wilcoxon_w_estimators(&s).unwrap();
        let k = |x: f64, y: f64| if x <= y { 0.5 } else { -0.5 };
        let g1 = u_variance_estimator(k, &s).unwrap();
        let swapped = sample(s.y(), s.x());
        let g2 = u_variance_estimator(|y, x| k(x, y), &swapped).unwrap();
        assert!((w1 - g1).abs() < 1e-15 && (w2 - g2).abs() < 1e-15);
    }

    #[test]
    fn tilde_statistic_examples() {
        let s = sample(&[1.0, 2.0], &[3.0, 4.0, 5.0]);
        assert!((wilcoxon_tilde_statistic(&s) + 5f64.sqrt() / 2.0).abs() < 1e-15);
        let s = sample(&[6.0, 7.0], &[3.0, 4.0, 5.0]);
        assert!((wilcoxon_tilde_statistic(&s) - 5f64.sqrt() / 2.0).abs() < 1e-15);
        let s = sample(&[1.0, 3.0, 5.0], &[2.0, 4.0, 6.0]);
        // pairs y ≤ x: (2,3), (2,5), (4,5) → U = 3 of 9.
        assert!((wilcoxon_tilde_statistic(&s) - 6f64.sqrt() * (3.0 / 9.0 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn rank_statistic_examples() {
        let v = rank_statistic(&sample(&[1.0], &[2.0])).unwrap();
        assert!((v + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let v = rank_statistic(&sample(&[3.0], &[1.0, 2.0])).unwrap();
        assert!((v - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(rank_statistic(&sample(&[1.0], &[1.0])), Err(Error::TiedObservations));
    }

    #[test]
    fn rank_statistic_matches_rank_formula() {
        let s = sample(&[0.7, 0.1, 2.5], &[0.3, 1.1, 0.2, 9.0]);
        let pooled = sorted(&[s.x(), s.y()].concat());
        let rank = |v: f64| (pooled.iter().position(|&p| p == v).unwrap() + 1) as f64;
        let n = 7f64;
        let direct = s.x().iter().map(|&x| rank(x)).sum::<f64>() / (3.0 * n.sqrt())
            - s.y().iter().map(|&y| rank(y)).sum::<f64>() / (4.0 * n.sqrt());
        assert!((rank_statistic(&s).unwrap() - direct).abs() < 1e-14);
        assert!((wilcoxon_tilde_statistic(&s) - direct).abs() < 1e-14);
    }

    #[test]
    fn permutation_two_point_law() {
        let null = RankPermutationNull::exhaustive(1, 1);
        let (key, gamma) = null.critical_key(0.5, Sided::One);
        assert_eq!(key, 1);
        assert_eq!(gamma, 1.0);
        assert!((null.rejection_probability(key, gamma, Sided::One) - 0.5).abs() < 1e-15);
        let (key, gamma) = null.critical_key(0.25, Sided::One);
        assert_eq!((key, gamma), (1, 0.5));
    }

    #[test]
    fn permutation_enumerates_all_assignments() {
        let null = RankPermutationNull::exhaustive(2, 2);
        let law = null.law(Sided::One);
        // rank sums of 2-subsets of {1..4}: 3,4,5,5,6,7 → keys 2S − 10.
        let expect = [(-4, 1.0 / 6.0), (-2, 1.0 / 6.0), (0, 2.0 / 6.0), (2, 1.0 / 6.0), (4, 1.0 / 6.0)];
        assert_eq!(law.len(), expect.len());
        for ((k, p), (ek, ep)) in law.iter().zip(expect) {
            assert_eq!(*k, ek);
            assert!((p - ep).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample(&[0.5, 0.7], &[0.1, 0.2]);
        let (c, g) = permutation_critical(&s, 0.1, Sided::One, 1000, &mut rng).unwrap();
        assert!((c - rank_scale::<f64>(2, 2) * 4.0).abs() < 1e-15);
        assert!((g - 0.6).abs() < 1e-12);
    }

    #[test]
    fn run_test_examples() {
        let p: Measure<f64> = DiscreteMeasure::uniform(&[0.0, 1.0]).unwrap().into();
        let spec = TestSpec::new(Functional::Wilcoxon, CriticalValueSource::Exact);
        let s = sample(&[0.0, 1.0], &[0.0, 1.0]);
        let r = run_test(&spec, &s, Some((&p, &p)), 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        let mut two = spec.clone();
        two.sided = Sided::Two;
        let r2 = run_test(&two, &s, Some((&p, &p)), 1).unwrap();
        assert!(r2.critical_value > r.critical_value);
        assert!(run_test(&spec, &s, None, 1).is_err());
        let point: Measure<f64> = DiscreteMeasure::point(0.0).unwrap().into();
        assert_eq!(
            run_test(&spec, &sample(&[0.0], &[0.0]), Some((&point, &point)), 1),
            Err(Error::DegenerateGradient)
        );
    }

    #[test]
    fn mean_difference_is_welch_type() {
        let f = Functional::Composite { op: CompositeOp::Sum, f1: Score::Id, f2: Score::NegId };
        let mut spec = TestSpec::new(f, CriticalValueSource::PluginSum);
        spec.null_value = Some(0.25);
        let s = sample(&[1.0, 2.0, 4.0], &[0.5, 1.5]);
        let r = run_test(&spec, &s, None, 0).unwrap();
        let n = 5f64;
        assert!((r.statistic - n.sqrt() * (7.0 / 3.0 - 1.0 - 0.25)).abs() < 1e-14);
        let vx = ((1.0f64 - 7.0 / 3.0).powi(2) + (2.0f64 - 7.0 / 3.0).powi(2) + (4.0f64 - 7.0 / 3.0).powi(2)) / 2.0;
        let vy = 0.5;
        let c = 1.6448536269514722 * (n / 3.0 * vx + n / 2.0 * vy).sqrt();
        assert!((r.critical_value - c).abs() < 1e-12);
    }

    #[test]
    fn source_mismatch_and_validation() {
        let spec = TestSpec::new(Functional::Wilcoxon, CriticalValueSource::PluginSum);
        assert!(run_test(&spec, &sample(&[0.0, 1.0], &[0.0, 1.0]), None, 0).is_err());
        let spec = TestSpec::<f64>::new(Functional::Wilcoxon, CriticalValueSource::Permutation { b: 10 });
        assert!(spec.validate().is_err());
        let mut spec = TestSpec::new(Functional::Wilcoxon, CriticalValueSource::UstatW);
        spec.alpha = 1.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn permutation_report_is_reproducible() {
        let spec = TestSpec::new(Functional::Wilcoxon, CriticalValueSource::Permutation { b: 5000 });
        let s = sample(&[0.3, 2.2, 1.7, 0.9], &[0.1, 0.5, 0.4]);
        let a = run_test(&spec, &s, None, 77).unwrap();
        let b = run_test(&spec, &s, None, 77).unwrap();
        assert_eq!(a, b);
        assert!(a.aux_uniform.is_some() && a.sigma1.is_none());
        let json = serde_json::to_string(&a).unwrap();
        assert!(json.starts_with(r#"{"statistic":"#));
        assert!(json.contains(r#""source":"permutation""#));
    }

    #[test]
    fn one_sample_examples() {
        let b = base(&[0.0, 1.0]);
        let z = Tangent::zero(b.clone());
        assert_eq!(one_sample_statistic(&z, &[0.0, 1.0]).unwrap(), 0.0);
        let g = Tangent::new(b, vec![-1.0, 1.0]).unwrap();
        assert_eq!(one_sample_statistic(&g, &[1.0; 4]).unwrap(), 2.0);
        assert!(one_sample_statistic(&g, &[0.5]).is_err());
    }

    #[test]
    fn sources_parse() {
        assert_eq!("ustat_w".parse::<CriticalValueSource>().unwrap(), CriticalValueSource::UstatW);
        assert_eq!(
            "permutation(2000)".parse::<CriticalValueSource>().unwrap(),
            CriticalValueSource::Permutation { b: 2000 }
        );
        assert!("bootstrap".parse::<CriticalValueSource>().is_err());
    }
}
