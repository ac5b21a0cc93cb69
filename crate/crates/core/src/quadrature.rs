//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Absolute tolerance used by the measure integrals.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 48;

fn checked<T: Real>(f: &impl Fn(T) -> Result<T>, x: T) -> Result<T> {
    let v = f(x)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteFunctionValue { at: x.as_f64() })
    }
}

fn gk15<T: Real>(f: &impl Fn(T) -> Result<T>, a: T, b: T) -> Result<(T, T)> {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let fc = checked(f, mid)?;
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for k in 0..7 {
        let dx = half * T::lit(XGK[k]);
        let s = checked(f, mid - dx)? + checked(f, mid + dx)?;
        kron = kron + s * T::lit(WGK[k]);
        if k % 2 == 1 {
            gauss = gauss + s * T::lit(WG[k / 2]);
        }
    }
    Ok((kron * half, ((kron - gauss) * half).abs()))
}

fn adapt<T: Real>(
    f: &impl Fn(T) -> Result<T>,
    a: T,
    b: T,
    tol: T,
    depth: u32,
) -> Result<T> {
    let (val, err) = gk15(f, a, b)?;
    if err <= tol || depth >= MAX_DEPTH || (b - a).abs() <= T::epsilon() * (a.abs() + b.abs()) {
        return Ok(val);
    }
    let m = (a + b) * T::lit(0.5);
    let half_tol = tol * T::lit(0.5);
    Ok(adapt(f, a, m, half_tol, depth + 1)? + adapt(f, m, b, half_tol, depth + 1)?)
}

/// Integrates a fallible integrand over `[a, b]` to absolute tolerance `tol`.
pub fn integrate_fallible<T: Real>(
    f: impl Fn(T) -> Result<T>,
    a: T,
    b: T,
    tol: T,
) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    if a > b {
        return Ok(-integrate_fallible(f, b, a, tol)?);
    }
    adapt(&f, a, b, tol, 0)
}

/// Integrates `f` over `[a, b]`; `NonFiniteFunctionValue` if `f` is NaN or infinite at a node.
pub fn integrate<T: Real>(f: impl Fn(T) -> T, a: T, b: T, tol: T) -> Result<T> {
    integrate_fallible(|x| Ok(f(x)), a, b, tol)
}

/// Like [`integrate`] but also splits at the given interior points.
///
/// Use this when `f` has kinks or jumps at known locations.
pub fn integrate_with_breaks<T: Real>(
    f: impl Fn(T) -> Result<T>,
    a: T,
    b: T,
    breaks: &[T],
    tol: T,
) -> Result<T> {
    let mut pts: Vec<T> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.sort_by(|u, v| u.partial_cmp(v).expect("finite break"));
    pts.dedup();
    let pieces = pts.len() + 1;
    let piece_tol = tol / T::count(pieces);
    let mut lo = a;
    let mut total = T::zero();
    for p in pts.into_iter().chain(std::iter::once(b)) {
        total = total + integrate_fallible(&f, lo, p, piece_tol)?;
        lo = p;
    }
    Ok(total)
}
