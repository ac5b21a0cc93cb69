//! Seeded, parallel simulation studies of level, power, joint law, LAN remainder and allocation.
//!
//! Replicate `r` of grid point `i` always uses the same random stream, derived from the
//! seed and `(i, r)` alone, so results do not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{d_opt, normal_cdf, power_one_sided, power_two_sided};
use crate::error::{Error, Result};
use crate::functionals::{Functional, GradientPair};
use crate::measures::{Measure, ProductSample};
use crate::tangents::{central_sequence, lan_remainder, ProductTangent};
use crate::testing::{sigma1_exact, CriticalValueSource, PreparedTest, Sided, TestSpec};

/// Default replications per grid point.
pub const DEFAULT_REPS: usize = 10_000;
/// Default total sample sizes.
pub const DEFAULT_N_GRID: [usize; 3] = [100, 400, 1600];

/// A simulation study.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub p0: Measure<f64>,
    pub q0: Measure<f64>,
    pub functional: Functional<f64>,
    /// Direction of the local alternatives; required by power, joint, LAN and allocation studies.
    pub tangent: Option<ProductTangent<f64>>,
    pub n_grid: Vec<usize>,
    /// Target fraction of the second sample.
    pub d: f64,
    pub reps: usize,
    pub alpha: f64,
    pub sided: Sided,
    pub seed: u64,
    pub source: CriticalValueSource,
    pub null_value: Option<f64>,
}

impl SimConfig {
    pub fn new(p0: Measure<f64>, q0: Measure<f64>, functional: Functional<f64>) -> Self {
        Self {
            p0,
            q0,
            functional,
            tangent: None,
            n_grid: DEFAULT_N_GRID.to_vec(),
            d: 0.5,
            reps: DEFAULT_REPS,
            alpha: 0.05,
            sided: Sided::One,
            seed: 0,
            source: CriticalValueSource::Exact,
            null_value: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 100 {
            return Err(Error::InvalidArgument(format!("need at least 100 replications, got {}", self.reps)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::DomainError(format!("alpha = {} not in (0, 1)", self.alpha)));
        }
        if self.n_grid.is_empty() {
            return Err(Error::InvalidArgument("empty n grid".into()));
        }
        for &n in &self.n_grid {
            split(n, self.d)?;
        }
        if let Some(pt) = &self.tangent {
            if *pt.g1.base() != self.p0 || *pt.g2.base() != self.q0 {
                return Err(Error::BaseMismatch);
            }
        }
        Ok(())
    }

    fn spec(&self) -> TestSpec<f64> {
        TestSpec {
            functional: self.functional.clone(),
            null_value: self.null_value,
            sided: self.sided,
            alpha: self.alpha,
            source: self.source,
        }
    }

    fn prepared(&self) -> Result<PreparedTest<f64>> {
        Ok(PreparedTest::new(self.spec(), Some((&self.p0, &self.q0)))?.with_null_seed(self.seed))
    }

    fn tangent(&self) -> Result<&ProductTangent<f64>> {
        self.tangent
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("this study needs a tangent".into()))
    }
}

/// `n2 = round(d·n)`, `n1 = n − n2`, both at least 2.
pub fn split(n: usize, d: f64) -> Result<(usize, usize)> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::InvalidArgument(format!("d = {d} not in (0, 1)")));
    }
    let n2 = (d * n as f64).round() as usize;
    let n1 = n.saturating_sub(n2);
    if n1 < 2 || n2 < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n1.min(n2) });
    }
    Ok((n1, n2))
}

/// Stream for replicate `r` of grid point `point`.
pub fn replicate_rng(seed: u64, point: usize, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) | r as u64);
    rng
}

/// How the local alternative shrinks with `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Localization {
    /// `t_n = θ / (√n ⟨k̃, g⟩)`, so `√n(k(P_tn⊗Q_tn) − k0) → θ`.
    Implicit,
    /// `t_n = θ(1 + c/√n) / (√n ⟨k̃, g⟩)`: asymptotically equivalent to `Implicit`.
    Perturbed { c: f64 },
    /// `t_n = θ/√n`; the implied local parameter is `θ⟨k̃, g⟩` and may be zero.
    Direct,
}

impl Localization {
    /// Curve time at sample size `n` and the implied local parameter.
    pub fn time(&self, theta: f64, n: usize, pairing: f64) -> Result<(f64, f64)> {
        let rn = (n as f64).sqrt();
        match *self {
            Localization::Direct => Ok((theta / rn, theta * pairing)),
            _ if pairing == 0.0 => Err(Error::OrthogonalTangent),
            Localization::Implicit => Ok((theta / (rn * pairing), theta)),
            Localization::Perturbed { c } => Ok((theta * (1.0 + c / rn) / (rn * pairing), theta)),
        }
    }
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub n: usize,
    pub theta_or_d: f64,
    pub rate: f64,
    pub se: f64,
    pub analytic: Option<f64>,
    pub diagnostic: Option<f64>,
    /// Rate further than `max(0.03, 4·se)` from the analytic value.
    pub flagged: bool,
}

impl SimRow {
    fn new(n: usize, x: f64, hits: usize, reps: usize, analytic: Option<f64>, diagnostic: Option<f64>) -> Self {
        let rate = hits as f64 / reps as f64;
        let se = (rate * (1.0 - rate) / reps as f64).sqrt();
        let flagged = analytic.is_some_and(|a| (rate - a).abs() > (4.0 * se).max(0.03));
        Self { n, theta_or_d: x, rate, se, analytic, diagnostic, flagged }
    }
}

/// Second moments of `(T_n, X_n)` under the footpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStats {
    pub n: usize,
    pub var_t: f64,
    /// Covariance of `T_n` with `X_n / ⟨k̃, g⟩`; tends to 1.
    pub cov_tx: f64,
    pub var_x: f64,
    pub sigma1_sq: f64,
    /// `⟨k̃, g⟩^{-2}((1−d)‖g1‖² + d‖g2‖²)`, the limit of `var_x`.
    pub sigma2_sq: f64,
    /// Kolmogorov distance between `T_n/σ1` and the standard normal.
    pub ks_distance: f64,
}

/// Distribution of `|R_{n,θ}|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanStats {
    pub n: usize,
    pub median_abs: f64,
    pub q90_abs: f64,
    /// Replicates where the curve density vanished at a sampled point.
    pub degenerate: usize,
}

/// Where empirical and analytic power peak over the allocation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DScanSummary {
    pub argmax_empirical: f64,
    pub argmax_analytic: f64,
    pub d_opt: f64,
}

/// Output of a study.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub joint: Vec<JointStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lan: Vec<LanStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_scan: Option<DScanSummary>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SimResult {
    pub const CSV_HEADER: &'static str = "n,theta_or_d,rate,se,analytic,diagnostic";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n,
                r.theta_or_d,
                r.rate,
                r.se,
                opt(r.analytic),
                opt(r.diagnostic)
            ));
        }
        out
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }
}

fn analytic_power(theta: f64, sigma1: f64, alpha: f64, sided: Sided) -> Result<f64> {
    match sided {
        Sided::One => power_one_sided(theta, sigma1, alpha),
        Sided::Two => power_two_sided(theta, sigma1, alpha),
    }
}

fn gradient(cfg: &SimConfig) -> Result<GradientPair<f64>> {
    let gp = cfg.functional.gradient(&cfg.p0, &cfg.q0)?;
    if gp.is_degenerate() {
        return Err(Error::DegenerateGradient);
    }
    Ok(gp)
}

fn rejections(
    test: &PreparedTest<f64>,
    p: &Measure<f64>,
    q: &Measure<f64>,
    (n1, n2): (usize, usize),
    seed: u64,
    point: usize,
    reps: usize,
) -> Result<usize> {
    let verdicts: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, point, r);
            let s = ProductSample::draw(p, q, n1, n2, &mut rng)?;
            Ok(test.run(&s, &mut rng)?.reject)
        })
        .collect::<Result<_>>()?;
    Ok(verdicts.into_iter().filter(|&v| v).count())
}

/// Rejection rate of the configured test under `P0^{n1} ⊗ Q0^{n2}` for each `n`.
pub fn simulate_level(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let test = cfg.prepared()?;
    let mut rows = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let sizes = split(n, cfg.d)?;
        let hits = rejections(&test, &cfg.p0, &cfg.q0, sizes, cfg.seed, i, cfg.reps)?;
        rows.push(SimRow::new(n, 0.0, hits, cfg.reps, Some(cfg.alpha), None));
    }
    Ok(SimResult { rows, ..Default::default() })
}

/// Rejection rate along local alternatives with the configured tangent, next to the
/// asymptotic power. The diagnostic column holds the curve time `t_n`.
pub fn simulate_power(cfg: &SimConfig, theta_grid: &[f64], localization: Localization) -> Result<SimResult> {
    cfg.validate()?;
    let pt = cfg.tangent()?;
    let gp = gradient(cfg)?;
    let pairing = pt.pairing(&gp)?;
    let test = cfg.prepared()?;
    let mut rows = Vec::new();
    let mut point = 0;
    for &n in &cfg.n_grid {
        let sizes = split(n, cfg.d)?;
        let d_hat = sizes.1 as f64 / n as f64;
        let sigma1 = sigma1_exact(&gp, d_hat)?;
        for &theta in theta_grid {
            let (t, implied) = localization.time(theta, n, pairing)?;
            let (p, q) = pt.curve(t)?;
            let hits = rejections(&test, &p, &q, sizes, cfg.seed, point, cfg.reps)?;
            let analytic = analytic_power(implied, sigma1, cfg.alpha, cfg.sided)?;
            rows.push(SimRow::new(n, theta, hits, cfg.reps, Some(analytic), Some(t)));
            point += 1;
        }
    }
    Ok(SimResult { rows, ..Default::default() })
}

fn ks_to_normal(mut z: Vec<f64>) -> f64 {
    z.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f: f64 = normal_cdf(v);
            ((i + 1) as f64 / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

/// Empirical covariance of `(T_n, X_n)` under the footpoint, with `X_n` divided by
/// `⟨k̃, g⟩` so that the limiting covariance is 1. Rows carry the null rejection rate
/// and, as diagnostic, the empirical covariance.
pub fn simulate_joint(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let pt = cfg.tangent()?;
    let gp = gradient(cfg)?;
    let pairing = pt.pairing(&gp)?;
    let scale = if pairing == 0.0 { 1.0 } else { 1.0 / pairing };
    let test = cfg.prepared()?;
    let mut result = SimResult::default();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let (n1, n2) = split(n, cfg.d)?;
        let d_hat = n2 as f64 / n as f64;
        let sigma1 = sigma1_exact(&gp, d_hat)?;
        let draws: Vec<(f64, f64, bool)> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(cfg.seed, i, r);
                let s = ProductSample::draw(&cfg.p0, &cfg.q0, n1, n2, &mut rng)?;
                let report = test.run(&s, &mut rng)?;
                let x = central_sequence(pt, &s)? * scale;
                Ok((crate::testing::t_statistic(&gp, &s)?, x, report.reject))
            })
            .collect::<Result<_>>()?;
        let m = draws.len() as f64;
        let mt = draws.iter().map(|d| d.0).sum::<f64>() / m;
        let mx = draws.iter().map(|d| d.1).sum::<f64>() / m;
        let (mut vt, mut vx, mut cxy) = (0.0, 0.0, 0.0);
        for &(t, x, _) in &draws {
            vt += (t - mt) * (t - mt);
            vx += (x - mx) * (x - mx);
            cxy += (t - mt) * (x - mx);
        }
        let (vt, vx, cxy) = (vt / (m - 1.0), vx / (m - 1.0), cxy / (m - 1.0));
        let hits = draws.iter().filter(|d| d.2).count();
        let ks = ks_to_normal(draws.iter().map(|d| d.0 / sigma1).collect());
        result.rows.push(SimRow::new(n, 0.0, hits, cfg.reps, Some(cfg.alpha), Some(cxy)));
        result.joint.push(JointStats {
            n,
            var_t: vt,
            cov_tx: cxy,
            var_x: vx,
            sigma1_sq: sigma1 * sigma1,
            sigma2_sq: pt.d_norm_sq(d_hat) * scale * scale,
            ks_distance: ks,
        });
    }
    Ok(result)
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Distribution of the LAN remainder `|R_{n,θ}|` under the footpoint. Rows carry the
/// fraction of degenerate replicates as rate and the median `|R|` as diagnostic.
pub fn simulate_lan(cfg: &SimConfig, theta: f64) -> Result<SimResult> {
    cfg.validate()?;
    let pt = cfg.tangent()?;
    let mut result = SimResult::default();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let (n1, n2) = split(n, cfg.d)?;
        let draws: Vec<Option<f64>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(cfg.seed, i, r);
                let s = ProductSample::draw(&cfg.p0, &cfg.q0, n1, n2, &mut rng)?;
                match lan_remainder(pt, theta, &s) {
                    Ok(v) => Ok(Some(v.abs())),
                    Err(Error::DegenerateDensity { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let degenerate = draws.iter().filter(|d| d.is_none()).count();
        let mut abs: Vec<f64> = draws.into_iter().flatten().collect();
        abs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let median = quantile_sorted(&abs, 0.5);
        let stats = LanStats { n, median_abs: median, q90_abs: quantile_sorted(&abs, 0.9), degenerate };
        result.rows.push(SimRow::new(n, theta, degenerate, cfg.reps, None, Some(median)));
        result.lan.push(stats);
    }
    Ok(result)
}

/// Power over an allocation grid at fixed `θ` and the first `n` of the grid, with the
/// tangent localized implicitly.
pub fn simulate_d_scan(cfg: &SimConfig, d_grid: &[f64], theta: f64) -> Result<SimResult> {
    cfg.validate()?;
    if d_grid.is_empty() {
        return Err(Error::InvalidArgument("empty d grid".into()));
    }
    let pt = cfg.tangent()?;
    let gp = gradient(cfg)?;
    let (a, b) = gp.norms_sq();
    let best = d_opt(a.sqrt(), b.sqrt())?;
    let pairing = pt.pairing(&gp)?;
    let n = cfg.n_grid[0];
    let (t, _) = Localization::Implicit.time(theta, n, pairing)?;
    let (p, q) = pt.curve(t)?;
    let test = cfg.prepared()?;
    let mut rows = Vec::new();
    for (i, &d) in d_grid.iter().enumerate() {
        let sizes = split(n, d)?;
        let d_hat = sizes.1 as f64 / n as f64;
        let sigma1 = sigma1_exact(&gp, d_hat)?;
        let analytic = analytic_power(theta, sigma1, cfg.alpha, cfg.sided)?;
        let hits = rejections(&test, &p, &q, sizes, cfg.seed, i, cfg.reps)?;
        rows.push(SimRow::new(n, d, hits, cfg.reps, Some(analytic), Some(d_hat)));
    }
    let argmax = |key: &dyn Fn(&SimRow) -> f64| {
        rows.iter()
            .fold((f64::NEG_INFINITY, f64::NAN), |acc, r| {
                if key(r) > acc.0 {
                    (key(r), r.theta_or_d)
                } else {
                    acc
                }
            })
            .1
    };
    let summary = DScanSummary {
        argmax_empirical: argmax(&|r| r.rate),
        argmax_analytic: argmax(&|r| r.analytic.unwrap_or(f64::NAN)),
        d_opt: best,
    };
    Ok(SimResult { rows, d_scan: Some(summary), ..Default::default() })
}
