//! A posteriori checks of computed fronts.
//!
//! The residual here is evaluated independently of the solver: delayed values
//! come from Neville's scheme on the four nearest nodes rather than from
//! precomputed Lagrange weights, so an assembly error in one path shows up as
//! a disagreement between the two.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ModelSpec, SteadyStates};
use crate::numeric::linear_fit;
use crate::profile::{left_rate, right_rate, WaveProfile};

/// Relative size of the tolerated decrease between neighbouring nodes.
pub const MONO_REL_TOL: f64 = 1e-9;
/// Deviations below this fraction of `e3 - e1` are treated as noise.
pub const NOISE_REL: f64 = 1e-10;
/// Tail deviations (relative to `e3 - e1`) used for exponent fits: small enough
/// to be in the linear regime, large enough to sit above rounding.
pub const FIT_FLOOR_REL: f64 = 1e-10;
pub const FIT_CEIL_REL: f64 = 1e-3;

/// A log-linear fit of a tail: decay rate and coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub rate: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub residual_inf: f64,
    pub monotone: bool,
    pub first_nonmonotone_t: Option<f64>,
    /// Most negative central-difference slope over interior nodes.
    pub min_slope: f64,
    /// Sign changes of `phi - e3` past the upper midpoint.
    pub tail_sign_changes: usize,
    /// `e1 < phi < e3` at interior nodes.
    pub within_bounds: bool,
    pub left_exponent_fit: Option<ExponentFit>,
    pub right_exponent_fit: Option<ExponentFit>,
    pub predicted_left: f64,
    pub predicted_right: Option<f64>,
    pub right_multiplicity: Option<u32>,
    pub notes: Vec<String>,
}

impl VerifyReport {
    /// Relative mismatch between fitted and predicted decay rates, where both exist.
    pub fn rate_errors(&self) -> (Option<f64>, Option<f64>) {
        let rel = |fit: Option<ExponentFit>, th: Option<f64>| match (fit, th) {
            (Some(f), Some(t)) if t != 0.0 => Some(((f.rate - t) / t).abs()),
            _ => None,
        };
        (rel(self.left_exponent_fit, Some(self.predicted_left)), rel(self.right_exponent_fit, self.predicted_right))
    }
}

/// Value at `x` of the polynomial through `(xs, ys)`.
fn neville(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = ((x - xs[i + k]) * p[i] + (xs[i] - x) * p[i + 1]) / (xs[i] - xs[i + k]);
        }
    }
    p[0]
}

/// `phi'' - c phi' + g(phi, phi(t - h))` at interior nodes.
pub fn residual(profile: &WaveProfile, model: &ModelSpec, states: &SteadyStates) -> Result<Vec<f64>> {
    let n = profile.n;
    let dt = profile.dt();
    let (phi, t) = (&profile.phi, &profile.t);
    let rho = if profile.h > 0.0 { left_rate(model, states, profile.c, profile.tau)?.0 } else { 0.0 };
    let delayed = |i: usize| -> f64 {
        if profile.h <= 0.0 {
            return phi[i];
        }
        let s = t[i] - profile.h;
        if s < t[0] {
            return states.e1 + (phi[0] - states.e1) * (rho * (s - t[0])).exp();
        }
        let k = (((s - t[0]) / dt).floor() as usize).clamp(1, n - 2);
        neville(&t[k - 1..k + 3], &phi[k - 1..k + 3], s)
    };
    Ok((1..n)
        .map(|i| {
            let d2 = (phi[i + 1] - 2.0 * phi[i] + phi[i - 1]) / (dt * dt);
            let d1 = (phi[i + 1] - phi[i - 1]) / (2.0 * dt);
            d2 - profile.c * d1 + model.g(phi[i], delayed(i))
        })
        .collect())
}

/// Sign changes of `phi - e3` after `phi` first reaches `(e2 + e3) / 2`,
/// ignoring deviations below `noise`.
pub fn tail_sign_changes(profile: &WaveProfile, states: &SteadyStates, noise: f64) -> usize {
    let mid = 0.5 * (states.e2 + states.e3);
    let Some(start) = profile.phi.iter().position(|&p| p >= mid) else {
        return 0;
    };
    let mut count = 0;
    let mut last = 0.0f64;
    for &p in &profile.phi[start..] {
        let d = p - states.e3;
        if d.abs() <= noise {
            continue;
        }
        if last != 0.0 && d.signum() != last.signum() {
            count += 1;
        }
        last = d;
    }
    count
}

/// Log-linear fit of `|dev|` against `t` over samples with `floor < |dev| < ceil`,
/// if they span a decade.
pub fn exponent_fit(t: &[f64], dev: &[f64], floor: f64, ceil: f64, log_t_correction: bool) -> Option<ExponentFit> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (&ti, &d) in t.iter().zip(dev) {
        let a = d.abs();
        if a > floor && a < ceil {
            let mut y = a.ln();
            if log_t_correction && ti.abs() > 1.0 {
                y -= ti.abs().ln();
            }
            xs.push(ti);
            ys.push(y);
            lo = lo.min(a);
            hi = hi.max(a);
        }
    }
    if xs.len() < 5 || hi < 10.0 * lo {
        return None;
    }
    linear_fit(&xs, &ys).map(|(rate, _, r_squared)| ExponentFit { rate, r_squared })
}

pub fn verify(profile: &WaveProfile, model: &ModelSpec, states: &SteadyStates) -> Result<VerifyReport> {
    let span = states.span();
    let n = profile.n;
    let dt = profile.dt();
    let res = residual(profile, model, states)?;
    let residual_inf = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let phi = &profile.phi;

    let mono_tol = MONO_REL_TOL * span / dt;
    let slopes: Vec<f64> = (1..n).map(|i| (phi[i + 1] - phi[i - 1]) / (2.0 * dt)).collect();
    let min_slope = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let first_nonmonotone_t = slopes.iter().position(|&d| d < -mono_tol).map(|k| profile.t[k + 1]);
    let noise = NOISE_REL * span;
    let tail = tail_sign_changes(profile, states, noise.max(10.0 * profile.residual_inf * dt * dt));
    let within_bounds = phi[1..n].iter().all(|&p| p > states.e1 - noise && p < states.e3 + noise);

    let mut notes = Vec::new();
    let mid = n / 2;
    let (lo, hi) = (FIT_FLOOR_REL * span, FIT_CEIL_REL * span);
    let left_fit = exponent_fit(
        &profile.t[..=mid],
        &phi[..=mid].iter().map(|p| p - states.e1).collect::<Vec<_>>(),
        lo,
        hi,
        false,
    );
    let predicted_left = left_rate(model, states, profile.c, profile.tau)?.0;
    let right = right_rate(model, states, profile.c, profile.tau)?;
    let double = matches!(right, Some((_, 2, _)));
    let right_fit = if tail > 0 {
        notes.push("oscillating tail: right exponent fit skipped".into());
        None
    } else {
        let fit = exponent_fit(
            &profile.t[mid..],
            &phi[mid..].iter().map(|p| p - states.e3).collect::<Vec<_>>(),
            lo,
            hi,
            double,
        );
        if fit.is_none() {
            notes.push("right tail spans less than a decade inside the fit band".into());
        }
        fit
    };
    if left_fit.is_none() {
        notes.push("left tail spans less than a decade inside the fit band".into());
    }
    if right.is_none() {
        notes.push("no negative real root at e3: oscillating tail expected".into());
    }
    if !within_bounds {
        notes.push("profile leaves [e1, e3] at interior nodes".into());
    }
    Ok(VerifyReport {
        residual_inf,
        monotone: first_nonmonotone_t.is_none(),
        first_nonmonotone_t,
        min_slope,
        tail_sign_changes: tail,
        within_bounds,
        left_exponent_fit: left_fit,
        right_exponent_fit: right_fit,
        predicted_left,
        predicted_right: right.map(|r| r.0),
        right_multiplicity: right.map(|r| r.1),
        notes,
    })
}
