//! Monotonicity domain `D(a, b) = {(tau, c): 0 < c <= clin(tau)}` of the
//! characteristic function `chi(z) = z^2 - c z + a + b exp(-z c tau)` with
//! `a, b < 0`.
//!
//! Inside the domain `chi` has three real zeros counting multiplicity (two
//! negative, one positive); on the boundary the negative pair merges into a
//! double zero; outside only the positive zero survives. The boundary is the
//! tangency condition `A(c, h) = B(c, h)` with `h = c tau`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect, newton_bracketed};
use crate::par::{self, Exec};
use crate::quasipoly::{self, CharParams, RealRoot};

const E: f64 = std::f64::consts::E;

/// Negative coefficients `(a_-, b_-)` of the characteristic function at `e3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    a_minus: f64,
    b_minus: f64,
}

impl DomainParams {
    pub fn new(a_minus: f64, b_minus: f64) -> Result<Self> {
        if !(a_minus < 0.0 && b_minus < 0.0) || !a_minus.is_finite() || !b_minus.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "domain needs a_- < 0 and b_- < 0, got ({a_minus}, {b_minus})"
            )));
        }
        Ok(Self { a_minus, b_minus })
    }

    pub fn a_minus(&self) -> f64 {
        self.a_minus
    }

    pub fn b_minus(&self) -> f64 {
        self.b_minus
    }

    /// Characteristic function at speed `c` and delay `tau`.
    pub fn char_params(&self, tau: f64, c: f64) -> Result<CharParams> {
        CharParams::new(self.a_minus, self.b_minus, c, c * tau)
    }

    /// `ln A(c, h) - ln B(c, h)`; positive inside the domain.
    fn log_gap(&self, c: f64, h: f64) -> f64 {
        let (aa, ab) = (self.a_minus.abs(), self.b_minus.abs());
        let s = (c * c * h * h + 4.0 + 4.0 * aa * h * h).sqrt();
        let ln_a = (2.0 + s).ln() - 1.0 - 2.0 * h.ln() - ab.ln();
        let ln_b = (2.0 + 2.0 * aa * h * h) / (c * h + s);
        ln_a - ln_b
    }

    /// `A(c, h)`.
    pub fn frak_a(&self, c: f64, h: f64) -> f64 {
        let s = (c * c * h * h + 4.0 + 4.0 * self.a_minus.abs() * h * h).sqrt();
        (2.0 + s) / (E * h * h * self.b_minus.abs())
    }

    /// `B(c, h)`.
    pub fn frak_b(&self, c: f64, h: f64) -> f64 {
        let aa = self.a_minus.abs();
        let s = (c * c * h * h + 4.0 + 4.0 * aa * h * h).sqrt();
        ((2.0 + 2.0 * aa * h * h) / (c * h + s)).exp()
    }
}

/// `clin(tau)`: either `+inf` or a finite positive speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ClinValue {
    Infinite,
    Finite(f64),
}

impl ClinValue {
    pub fn is_infinite(&self) -> bool {
        matches!(self, ClinValue::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ClinValue::Finite(v) => Some(v),
            ClinValue::Infinite => None,
        }
    }

    /// `c <= clin`.
    pub fn admits(&self, c: f64) -> bool {
        match *self {
            ClinValue::Infinite => true,
            ClinValue::Finite(v) => c <= v,
        }
    }
}

impl fmt::Display for ClinValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClinValue::Infinite => f.write_str("inf"),
            ClinValue::Finite(v) => f.write_str(&crate::formats::num(*v)),
        }
    }
}

/// Sampled boundary `tau -> clin(tau)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainCurve {
    pub params: DomainParams,
    pub points: Vec<(f64, ClinValue)>,
}

impl DomainCurve {
    /// CSV with header `tau,clin`; infinite values are written as `inf`.
    pub fn to_csv(&self) -> String {
        use crate::formats::{csv, num};
        csv(&["tau", "clin"], self.points.iter().map(|(t, v)| vec![num(*t), v.to_string()]))
    }
}

/// `tau_#`: unique root of `e |b| tau exp(|a| tau) = 1`.
pub fn tau_sharp(params: &DomainParams) -> f64 {
    let (aa, ab) = (params.a_minus.abs(), params.b_minus.abs());
    let f = |t: f64| E * ab * t * (aa * t).exp() - 1.0;
    let df = |t: f64| E * ab * (aa * t).exp() * (1.0 + aa * t);
    let hi = 1.0 / (E * ab);
    let coarse = bisect(f, 0.0, hi, 1e-6 * hi, 60);
    let lo = (coarse - 1e-5 * hi).max(0.0);
    let up = (coarse + 1e-5 * hi).min(hi);
    if f(lo) < 0.0 && f(up) > 0.0 {
        newton_bracketed(f, df, lo, up, 1e-14, 100)
    } else {
        newton_bracketed(f, df, 0.0, hi, 1e-14, 200)
    }
}

/// `(omega, theta)`: `omega < 0` solves `-2 a = b exp(-omega) (2 + omega)` and
/// `theta = sqrt(2 omega / b) exp(omega / 2)`.
pub fn theta(params: &DomainParams) -> (f64, f64) {
    let (a, b) = (params.a_minus, params.b_minus);
    // (2 + w) e^{-w} is increasing on (-inf, -1), so the root lies below -2.
    let f = |w: f64| b * (-w).exp() * (2.0 + w) + 2.0 * a;
    let df = |w: f64| b * (-w).exp() * (-1.0 - w);
    let mut lo = -50.0;
    while f(lo) <= 0.0 && lo > -700.0 {
        lo *= 1.5;
    }
    let omega = newton_bracketed(f, df, lo, -2.0, 1e-14, 300);
    let th = (2.0 * omega / b).sqrt() * (omega / 2.0).exp();
    (omega, th)
}

/// `clin(tau)`.
pub fn clin(params: &DomainParams, tau: f64) -> Result<ClinValue> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    if tau <= tau_sharp(params) {
        return Ok(ClinValue::Infinite);
    }
    let gap = |c: f64| params.log_gap(c, c * tau);
    let lo = 1e-8;
    if gap(lo) <= 0.0 {
        return Err(Error::Bracket(format!("clin({tau}): no admissible speed above {lo}")));
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while gap(hi) >= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 1000 {
            return Err(Error::Bracket(format!("clin({tau}): upper bracket overflow")));
        }
    }
    let c = bisect(gap, lo, hi, 0.0, 200);
    Ok(ClinValue::Finite(c))
}

/// Diagnostics of a membership query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDiagnostics {
    pub clin: ClinValue,
    pub real_roots: Vec<RealRoot>,
    /// Real zeros of `chi_-` counted with multiplicity.
    pub root_count: usize,
    pub double_root: Option<f64>,
    /// `c` lies within the numerical resolution of the boundary.
    pub near_boundary: bool,
}

const BOUNDARY_REL_TOL: f64 = 1e-7;

/// Whether `(tau, c)` lies in the domain, cross-checked against the real-root
/// count of `chi_-` (3 inside, 1 outside; 2 at `tau = 0` where `chi_-` is a
/// quadratic).
pub fn in_domain(params: &DomainParams, tau: f64, c: f64) -> Result<(bool, DomainDiagnostics)> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("c must be > 0, got {c}")));
    }
    let cl = clin(params, tau)?;
    let inside = cl.admits(c);
    let cp = params.char_params(tau, c)?;
    let roots = quasipoly::all_real_roots(&cp);
    let count = quasipoly::total_multiplicity(&roots);
    let double_root = roots.iter().find(|r| r.multiplicity == 2).map(|r| r.value);
    let near_boundary = cl.finite().is_some_and(|v| (c - v).abs() <= BOUNDARY_REL_TOL * v);

    let expected_inside = if cp.h == 0.0 { 2 } else { 3 };
    let agrees = if inside { count == expected_inside } else { count == 1 };
    if !agrees && !near_boundary {
        return Err(Error::DomainInconsistency(format!(
            "(tau, c) = ({tau}, {c}): clin = {cl} says inside = {inside}, but chi_- has {count} real zeros"
        )));
    }
    Ok((
        inside,
        DomainDiagnostics { clin: cl, real_roots: roots, root_count: count, double_root, near_boundary },
    ))
}

/// Boundary in `(h, c)` coordinates: `0` for `h <= theta`, else the unique
/// positive solution of `A(c, h) = B(c, h)` at fixed `h`.
pub fn c_e(params: &DomainParams, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::InvalidParameter(format!("h must be >= 0, got {h}")));
    }
    let (_, h_star) = theta(params);
    if h <= h_star {
        return Ok(0.0);
    }
    // A increases and B decreases in c at fixed h.
    let gap = |c: f64| params.log_gap(c, h);
    if gap(0.0) >= 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while gap(hi) <= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 1000 {
            return Err(Error::Bracket(format!("c_E({h}): upper bracket overflow")));
        }
    }
    Ok(bisect(gap, 0.0, hi, 0.0, 200))
}

/// Samples `clin` on `[0, tau_max]`: a few uniform points on `[0, tau_#]`
/// followed by geometrically clustered points starting at `tau_# + 1e-4`.
pub fn trace_boundary(params: &DomainParams, tau_max: f64, n_points: usize) -> Result<DomainCurve> {
    trace_boundary_with(Exec::default(), params, tau_max, n_points)
}

pub fn trace_boundary_with(
    exec: Exec,
    params: &DomainParams,
    tau_max: f64,
    n_points: usize,
) -> Result<DomainCurve> {
    let ts = tau_sharp(params);
    if !(tau_max > ts) {
        return Err(Error::AllInfinite { tau_max, tau_sharp: ts });
    }
    if n_points < 2 {
        return Err(Error::InvalidParameter("trace_boundary needs n_points >= 2".into()));
    }
    let taus = boundary_grid(ts, tau_max, n_points);
    let vals = par::map(exec, &taus, |&t| clin(params, t));
    let mut points = Vec::with_capacity(taus.len());
    for (t, v) in taus.into_iter().zip(vals) {
        points.push((t, v?));
    }
    Ok(DomainCurve { params: *params, points })
}

fn boundary_grid(ts: f64, tau_max: f64, n_points: usize) -> Vec<f64> {
    const FIRST_OFFSET: f64 = 1e-4;
    let n_inf = (n_points / 10).max(1);
    let n_fin = n_points - n_inf;
    let mut taus: Vec<f64> = if n_inf == 1 {
        vec![0.0]
    } else {
        (0..n_inf).map(|k| ts * k as f64 / (n_inf - 1) as f64).collect()
    };
    let span = tau_max - ts;
    if span <= FIRST_OFFSET || n_fin == 1 {
        taus.push(tau_max);
    } else {
        let ratio = (span / FIRST_OFFSET).powf(1.0 / (n_fin - 1) as f64);
        for k in 0..n_fin {
            let t = if k + 1 == n_fin { tau_max } else { ts + FIRST_OFFSET * ratio.powi(k as i32) };
            taus.push(t);
        }
    }
    taus.dedup_by(|a, b| *a <= *b);
    taus
}
