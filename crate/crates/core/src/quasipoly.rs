//! Characteristic quasi-polynomials `chi(z) = z^2 - c z + a + b exp(-z h)`.
//!
//! These are the linearization symbols of the profile equation at a steady
//! state. Real roots are isolated exactly by cascading critical points:
//! `chi''` has at most one real zero (closed form), which splits the line into
//! monotone pieces of `chi'`; the zeros of `chi'` in turn split it into
//! monotone pieces of `chi`, each holding at most one root. Complex roots are
//! counted with the argument principle applied to `exp(z h) chi(z)`, which has
//! the same zeros but stays bounded on the left half-plane.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::newton_bracketed;

/// Residual bound on `|chi|` for reported simple roots.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-11;
/// `|chi|` threshold at a critical point for reporting a double root.
pub const DOUBLE_ROOT_CHI_TOL: f64 = 1e-9;
/// `|chi'|` threshold for a double root.
pub const DOUBLE_ROOT_DCHI_TOL: f64 = 1e-7;

const NEWTON_MAX_ITER: usize = 50;
const WINDOW_RETRIES: usize = 5;

/// Coefficients of `chi(z) = z^2 - c z + a + b exp(-z h)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub h: f64,
}

impl CharParams {
    /// Validated constructor: `c > 0`, `h >= 0`, all finite.
    pub fn new(a: f64, b: f64, c: f64, h: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite() && h.is_finite()) {
            return Err(Error::InvalidParameter("non-finite characteristic coefficient".into()));
        }
        if c <= 0.0 {
            return Err(Error::InvalidParameter(format!("speed c must be > 0, got {c}")));
        }
        if h < 0.0 {
            return Err(Error::InvalidParameter(format!("h = c*tau must be >= 0, got {h}")));
        }
        Ok(Self { a, b, c, h })
    }

    /// Linearization symbol for an arbitrary speed (used for asymptotics of
    /// computed profiles, where `c` may be zero or negative). Requires `h >= 0`.
    pub(crate) fn linearization(a: f64, b: f64, c: f64, h: f64) -> Self {
        Self { a, b, c, h: h.max(0.0) }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        z * z - self.c * z + self.a + self.b * (-z * self.h).exp()
    }

    pub fn deriv(&self, z: Complex64) -> Complex64 {
        2.0 * z - self.c - self.b * self.h * (-z * self.h).exp()
    }

    /// `exp(z h) chi(z)`: same zeros as `chi`, bounded as `Re z -> -inf`.
    fn eval_scaled(&self, z: Complex64) -> Complex64 {
        (z * z - self.c * z + self.a) * (z * self.h).exp() + self.b
    }

    /// Derivative of [`Self::eval_scaled`].
    fn deriv_scaled(&self, z: Complex64) -> Complex64 {
        let poly = z * z - self.c * z + self.a;
        (2.0 * z - self.c + self.h * poly) * (z * self.h).exp()
    }

    fn scaled_magnitude(&self, z: Complex64) -> f64 {
        ((z * z).norm() + (self.c * z).norm() + self.a.abs()) * (z.re * self.h).exp() + self.b.abs()
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        x * x - self.c * x + self.a + self.b * (-x * self.h).exp()
    }

    pub fn deriv_real(&self, x: f64) -> f64 {
        2.0 * x - self.c - self.b * self.h * (-x * self.h).exp()
    }

    pub fn second_real(&self, x: f64) -> f64 {
        2.0 + self.b * self.h * self.h * (-x * self.h).exp()
    }

    /// Partial derivative of `chi(x)` with respect to `c` when `h = c * tau`.
    pub fn dchi_dc_real(&self, x: f64, tau: f64) -> f64 {
        -x - self.b * x * tau * (-x * self.h).exp()
    }
}

/// Evaluates `chi(z)`.
pub fn eval_char(params: &CharParams, z: Complex64) -> Complex64 {
    params.eval(z)
}

/// A real root with multiplicity (1 or 2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealRoot {
    pub value: f64,
    pub multiplicity: u32,
}

/// Window `[re_min, re_max] x [-im_max, im_max]` in the complex plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_max: f64) -> Self {
        Self { re_min, re_max, im_max }
    }

    fn is_degenerate(&self) -> bool {
        !(self.re_min < self.re_max && self.im_max > 0.0)
            || !(self.re_min.is_finite() && self.re_max.is_finite() && self.im_max.is_finite())
    }

    fn inflate(&self) -> Self {
        let dx = 5e-3 * (self.re_max - self.re_min).max(1e-3);
        let dy = 5e-3 * self.im_max.max(1e-3);
        Self { re_min: self.re_min - dx, re_max: self.re_max + dx, im_max: self.im_max + dy }
    }
}

/// Root structure of `chi` inside a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub params: CharParams,
    pub real_roots: Vec<RealRoot>,
    pub complex_pairs_in_window: usize,
    pub window: Rect,
    /// Argument-principle count over `window`.
    pub total_in_window: usize,
    pub dominant_real: Option<f64>,
}

/// Unique positive real root of `chi` when `a + b < 0`.
pub fn dominant_positive_root(params: &CharParams) -> Result<f64> {
    if params.a + params.b >= 0.0 {
        return Err(Error::NoPositiveRoot(params.a + params.b));
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while params.eval_real(hi) <= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 1100 {
            return Err(Error::Bracket("positive root bracket overflow".into()));
        }
    }
    Ok(newton_bracketed(
        |x| params.eval_real(x),
        |x| params.deriv_real(x),
        0.0,
        hi,
        ROOT_RESIDUAL_TOL,
        NEWTON_MAX_ITER + 1100,
    ))
}

fn zero_of_second(params: &CharParams) -> Option<f64> {
    // chi'' = 2 + b h^2 exp(-x h) vanishes only for b < 0, h > 0.
    if params.b < 0.0 && params.h > 0.0 {
        Some((-params.b * params.h * params.h / 2.0).ln() / params.h)
    } else {
        None
    }
}

/// Zeros of a function that is monotone on every piece between consecutive
/// breakpoints.
fn piecewise_monotone_zeros<F, D>(f: F, df: D, breaks: &[f64]) -> Vec<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut out: Vec<f64> = Vec::new();
    for w in breaks.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 <= x0 {
            continue;
        }
        let (f0, f1) = (f(x0), f(x1));
        if f0 == 0.0 {
            if out.last().is_none_or(|&l| l != x0) {
                out.push(x0);
            }
            continue;
        }
        if f1 == 0.0 {
            out.push(x1);
            continue;
        }
        if (f0 < 0.0) != (f1 < 0.0) {
            out.push(newton_bracketed(&f, &df, x0, x1, 0.0, NEWTON_MAX_ITER + 200));
        }
    }
    out
}

/// Critical points of `chi` (zeros of `chi'`) in `[lo, hi]`.
fn critical_points(params: &CharParams, lo: f64, hi: f64) -> Vec<f64> {
    let mut breaks = vec![lo];
    if let Some(x2) = zero_of_second(params) {
        if x2 > lo && x2 < hi {
            breaks.push(x2);
        }
    }
    breaks.push(hi);
    piecewise_monotone_zeros(|x| params.deriv_real(x), |x| params.second_real(x), &breaks)
}

/// All real roots of `chi` in `[lo, hi]` with multiplicity.
pub fn real_roots(params: &CharParams, lo: f64, hi: f64) -> Result<Vec<RealRoot>> {
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("real_roots needs lo < hi, got [{lo}, {hi}]")));
    }
    let crit = critical_points(params, lo, hi);
    let mut doubles: Vec<f64> = Vec::new();
    let mut breaks = vec![lo];
    for &z in &crit {
        if z > lo && z < hi {
            breaks.push(z);
            if params.eval_real(z).abs() < DOUBLE_ROOT_CHI_TOL
                && params.deriv_real(z).abs() < DOUBLE_ROOT_DCHI_TOL
            {
                doubles.push(z);
            }
        }
    }
    breaks.push(hi);

    let mut roots: Vec<RealRoot> = Vec::new();
    for w in breaks.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        // A monotone piece that starts or ends at a double root holds no other root.
        if doubles.contains(&x0) || doubles.contains(&x1) {
            continue;
        }
        let (f0, f1) = (params.eval_real(x0), params.eval_real(x1));
        let root = if f0 == 0.0 {
            Some(x0)
        } else if f1 == 0.0 {
            Some(x1)
        } else if (f0 < 0.0) != (f1 < 0.0) {
            Some(newton_bracketed(
                |x| params.eval_real(x),
                |x| params.deriv_real(x),
                x0,
                x1,
                0.0,
                NEWTON_MAX_ITER + 200,
            ))
        } else {
            None
        };
        if let Some(r) = root {
            if roots.last().is_none_or(|l| l.value != r) {
                roots.push(RealRoot { value: r, multiplicity: 1 });
            }
        }
    }
    for z in doubles {
        roots.push(RealRoot { value: z, multiplicity: 2 });
    }
    roots.sort_by(|x, y| x.value.total_cmp(&y.value));
    Ok(roots)
}

/// An interval guaranteed to contain every real root of `chi`.
pub fn real_root_bounds(params: &CharParams) -> (f64, f64) {
    let p = params;
    let mut lo = -1.0;
    let mut hi = 1.0;
    // Left of `lo` chi is monotone and of constant sign once chi, chi' and
    // chi'' have settled into their asymptotic signs.
    for _ in 0..2000 {
        let (f, d, s) = (p.eval_real(lo), p.deriv_real(lo), p.second_real(lo));
        let settled = if p.h == 0.0 || p.b == 0.0 {
            f > 0.0 && d < 0.0
        } else if p.b < 0.0 {
            f < 0.0 && d > 0.0 && s < 0.0
        } else {
            f > 0.0 && d < 0.0
        };
        if settled || !f.is_finite() {
            break;
        }
        lo *= 1.5;
    }
    for _ in 0..2000 {
        let (f, d, s) = (p.eval_real(hi), p.deriv_real(hi), p.second_real(hi));
        if (f > 0.0 && d > 0.0 && s > 0.0) || !f.is_finite() {
            break;
        }
        hi *= 1.5;
    }
    (lo, hi)
}

/// Every real root of `chi`.
pub fn all_real_roots(params: &CharParams) -> Vec<RealRoot> {
    let (lo, hi) = real_root_bounds(params);
    real_roots(params, lo, hi).unwrap_or_default()
}

/// Largest negative real root with its multiplicity, if any.
pub fn largest_negative_root(params: &CharParams) -> Option<RealRoot> {
    all_real_roots(params).into_iter().rfind(|r| r.value < 0.0)
}

/// Total multiplicity of a root list.
pub fn total_multiplicity(roots: &[RealRoot]) -> usize {
    roots.iter().map(|r| r.multiplicity as usize).sum()
}

/// Default search window: `re in [-30, max(5, 2 lambda_1)]`,
/// `|im| <= 60 / max(h, 0.1)`.
pub fn default_window(params: &CharParams) -> Rect {
    let lam = dominant_positive_root(params).unwrap_or(0.0);
    Rect::new(-30.0, 5f64.max(2.0 * lam), 60.0 / params.h.max(0.1))
}

fn boundary_clear(params: &CharParams, rect: &Rect) -> bool {
    const SAMPLES: usize = 1000;
    let corners = corners(rect);
    for k in 0..4 {
        let (za, zb) = (corners[k], corners[(k + 1) % 4]);
        for i in 0..=SAMPLES {
            let z = za + (zb - za) * (i as f64 / SAMPLES as f64);
            let v = params.eval_scaled(z).norm();
            if !(v > 1e-10 * params.scaled_magnitude(z)) {
                return false;
            }
        }
    }
    true
}

fn corners(rect: &Rect) -> [Complex64; 4] {
    [
        Complex64::new(rect.re_min, -rect.im_max),
        Complex64::new(rect.re_max, -rect.im_max),
        Complex64::new(rect.re_max, rect.im_max),
        Complex64::new(rect.re_min, rect.im_max),
    ]
}

/// Accumulated change of `arg F` along the segment `za -> zb`, with steps
/// small enough that each increment stays below pi/4, agrees with its two
/// half-steps, and `F` is close to linear (`|dz F'| < |F| / 2` at the start,
/// middle and end). `None` when the step collapses (a zero on the path).
fn phase_change(params: &CharParams, za: Complex64, zb: Complex64) -> Option<f64> {
    let seg = zb - za;
    let point = |s: f64| za + seg * s;
    let mut s = 0.0;
    let mut ds: f64 = 1.0 / 64.0;
    let mut fs = params.eval_scaled(point(0.0));
    let mut total = 0.0;
    while s < 1.0 {
        let step = ds.min(1.0 - s);
        let fe = params.eval_scaled(point(s + step));
        let fm = params.eval_scaled(point(s + 0.5 * step));
        let d = (fe / fs).arg();
        let d1 = (fm / fs).arg();
        let d2 = (fe / fm).arg();
        let dz = (seg * step).norm();
        let linear = |z: Complex64, f: Complex64| dz * params.deriv_scaled(z).norm() < 0.5 * f.norm();
        let ok = d.is_finite()
            && d.abs() < std::f64::consts::FRAC_PI_4
            && (d1 + d2 - d).abs() < 1e-9
            && fe.norm() > 0.0
            && linear(point(s), fs)
            && linear(point(s + 0.5 * step), fm)
            && linear(point(s + step), fe);
        if ok {
            total += d;
            s += step;
            fs = fe;
            ds = step * 1.5;
        } else {
            ds = step * 0.5;
            if ds < 1e-13 {
                return None;
            }
        }
    }
    Some(total)
}

fn winding(params: &CharParams, rect: &Rect) -> Option<usize> {
    let c = corners(rect);
    let mut total = 0.0;
    for k in 0..4 {
        total += phase_change(params, c[k], c[(k + 1) % 4])?;
    }
    let turns = total / std::f64::consts::TAU;
    let n = turns.round();
    if (turns - n).abs() > 0.05 || n < 0.0 {
        return None;
    }
    Some(n as usize)
}

fn count_with_window(params: &CharParams, rect: &Rect) -> Result<(usize, Rect)> {
    if rect.is_degenerate() {
        return Err(Error::IllPosedWindow(format!(
            "empty interior: re [{}, {}], im_max {}",
            rect.re_min, rect.re_max, rect.im_max
        )));
    }
    let mut r = *rect;
    for _ in 0..=WINDOW_RETRIES {
        if boundary_clear(params, &r) {
            if let Some(n) = winding(params, &r) {
                return Ok((n, r));
            }
        }
        r = r.inflate();
    }
    Err(Error::IllPosedWindow(format!(
        "a root stays on the boundary after {WINDOW_RETRIES} inflations"
    )))
}

/// Number of zeros (with multiplicity) of `chi` inside `rect`.
pub fn count_roots_in_rect(params: &CharParams, rect: &Rect) -> Result<usize> {
    count_with_window(params, rect).map(|(n, _)| n)
}

/// Full root report over `window` (defaults to [`default_window`]).
pub fn root_report(params: &CharParams, window: Option<Rect>) -> Result<RootReport> {
    let window = window.unwrap_or_else(|| default_window(params));
    let (total, window) = count_with_window(params, &window)?;
    let real = real_roots(params, window.re_min, window.re_max)?;
    let real_count = total_multiplicity(&real);
    if real_count > total || !(total - real_count).is_multiple_of(2) {
        return Err(Error::DomainInconsistency(format!(
            "argument principle counts {total} zeros but {real_count} real zeros were found"
        )));
    }
    let complex_pairs = (total - real_count) / 2;

    let dominant_real = match real.last() {
        Some(top) if top.multiplicity == 1 => {
            let delta = 1e-6 * top.value.abs().max(1.0);
            let strip = Rect::new(top.value - delta, window.re_max, window.im_max);
            match count_roots_in_rect(params, &strip) {
                Ok(1) => Some(top.value),
                _ => None,
            }
        }
        _ => None,
    };

    Ok(RootReport {
        params: *params,
        real_roots: real,
        complex_pairs_in_window: complex_pairs,
        window,
        total_in_window: total,
        dominant_real,
    })
}
