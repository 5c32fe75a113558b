//! Exact wave speeds and profiles for the piecewise-linear toy model
//!
//! `phi'' - c phi' - phi + f(phi(t - c tau)) = 0`, with `f(u) = p u` for
//! `u < kappa` and `f(u) = 1 + q (u - 1)` above the threshold.
//!
//! The steady states are `e1 = 0`, `e3 = 1`. On the left the profile is the
//! exponential `kappa exp(mu1 (t + c tau))`; on the right it solves a linear
//! delay equation whose unstable mode is suppressed exactly when `K(c) = kappa`.

use serde::{Deserialize, Serialize};

use crate::domain::{self, DomainParams};
use crate::error::{Error, Result};
use crate::numeric::bisect;
use crate::par::{self, Exec};
use crate::quasipoly::{self, CharParams, Rect};

/// Toy model parameters: threshold `kappa` and the two slopes of `f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    kappa: f64,
    p: f64,
    q: f64,
}

impl ToyParams {
    pub fn new(kappa: f64, p: f64, q: f64) -> Result<Self> {
        let ok = kappa > 0.0 && kappa < 1.0 && p > 0.0 && p < 1.0 && q < 0.0 && q.is_finite();
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "toy model needs 0 < kappa < 1, 0 < p < 1, q < 0; got kappa = {kappa}, p = {p}, q = {q}"
            )));
        }
        Ok(Self { kappa, p, q })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// The birth function `f`.
    pub fn f(&self, u: f64) -> f64 {
        if u < self.kappa {
            self.p * u
        } else {
            1.0 + self.q * (u - 1.0)
        }
    }

    /// Linearization of the right state, `(a_-, b_-) = (-1, q)`.
    pub fn right_domain(&self) -> DomainParams {
        DomainParams::new(-1.0, self.q).expect("q < 0 by construction")
    }
}

/// Which propagation direction the toy model selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Positive,
    Negative,
}

/// Speed of the toy front at one delay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpeedResult {
    pub tau: f64,
    /// Signed speed.
    pub c: f64,
    pub mu1: f64,
    pub lambda1: f64,
    pub monotone: bool,
    /// `K(c)`; positive branch only.
    pub k_value: Option<f64>,
    pub warnings: Vec<String>,
}

/// `k_* = kappa (1 + sqrt((1 - p) / (1 - q)))`.
pub fn k_star(params: &ToyParams) -> f64 {
    params.kappa * (1.0 + ((1.0 - params.p) / (1.0 - params.q)).sqrt())
}

/// `P = int_0^1 (-u + f(u)) du` in closed form.
pub fn frak_p(params: &ToyParams) -> f64 {
    let (k, p, q) = (params.kappa, params.p, params.q);
    ((1.0 - q) * (1.0 - k).powi(2) - (1.0 - p) * k * k) / 2.0
}

/// `P` by adaptive quadrature, split at the discontinuity.
pub fn frak_p_quadrature(params: &ToyParams) -> f64 {
    let g = |u: f64| -u + params.f(u);
    let k = params.kappa;
    crate::numeric::simpson(g, 0.0, k, 1e-12) + crate::numeric::simpson(g, k, 1.0, 1e-12)
}

pub fn branch(params: &ToyParams) -> Result<Branch> {
    let ks = k_star(params);
    if (ks - 1.0).abs() <= 1e-9 {
        return Err(Error::InvalidParameter(format!("degenerate branch: k* = {ks}")));
    }
    Ok(if ks < 1.0 { Branch::Positive } else { Branch::Negative })
}

/// Positive root of `z^2 - |c| z - 1 + slope exp(-|c| tau z)`.
fn positive_root(slope: f64, c_abs: f64, tau: f64) -> Result<f64> {
    quasipoly::dominant_positive_root(&CharParams::new(-1.0, slope, c_abs, c_abs * tau)?)
}

/// `mu1`: positive root for slope `p`.
pub fn char_root_mu1(params: &ToyParams, c_abs: f64, tau: f64) -> Result<f64> {
    positive_root(params.p, c_abs, tau)
}

/// `lambda1`: positive root for slope `q`.
pub fn char_root_lambda1(params: &ToyParams, c_abs: f64, tau: f64) -> Result<f64> {
    positive_root(params.q, c_abs, tau)
}

/// `lambda1 - mu1` without cancellation: subtracting the two characteristic
/// equations gives `(lambda1 - mu1)(lambda1 + mu1 - c) = p e^{-mu1 h} - q e^{-lambda1 h}`.
fn root_gap(params: &ToyParams, c_abs: f64, tau: f64) -> Result<(f64, f64, f64)> {
    let mu = char_root_mu1(params, c_abs, tau)?;
    let lam = char_root_lambda1(params, c_abs, tau)?;
    let h = c_abs * tau;
    let gap = (params.p * (-mu * h).exp() - params.q * (-lam * h).exp()) / (lam + mu - c_abs);
    Ok((mu, lam, gap))
}

/// `mu1 / lambda1` at speed `c_abs`.
pub fn root_ratio(params: &ToyParams, c_abs: f64, tau: f64) -> Result<f64> {
    Ok(1.0 - ratio_deficit(params, c_abs, tau)?)
}

/// `1 - mu1 / lambda1`, accurate even when both roots agree to many digits.
pub fn ratio_deficit(params: &ToyParams, c_abs: f64, tau: f64) -> Result<f64> {
    let (_, lam, gap) = root_gap(params, c_abs, tau)?;
    Ok(gap / lam)
}

/// `K(c) = (1 - q) / (p - q) (1 - mu1 / lambda1)`.
pub fn k_function(params: &ToyParams, c: f64, tau: f64) -> Result<f64> {
    let (p, q) = (params.p, params.q);
    Ok((1.0 - q) / (p - q) * ratio_deficit(params, c, tau)?)
}

/// `K(0+)` from the quadratic roots at zero speed.
pub fn k_zero(params: &ToyParams) -> f64 {
    let (p, q) = (params.p, params.q);
    (1.0 - q) / (p - q) * (1.0 - ((1.0 - p) / (1.0 - q)).sqrt())
}

/// Right-hand side of the negative-branch equation,
/// `(1 - p) / (p - q) (lambda1 / mu1 - 1)`.
pub fn negative_branch_value(params: &ToyParams, c_abs: f64, tau: f64) -> Result<f64> {
    let (p, q) = (params.p, params.q);
    let (mu, _, gap) = root_gap(params, c_abs, tau)?;
    Ok((1.0 - p) / (p - q) * gap / mu)
}

const SPEED_LO: f64 = 1e-6;
const SPEED_ITER: usize = 120;

/// Finds `c` in `[SPEED_LO, c_hi]` where the decreasing function `f` crosses
/// zero, doubling `c_hi` from 1.
fn decreasing_root<F: Fn(f64) -> Result<f64>>(f: F, what: &str) -> Result<f64> {
    let f_lo = f(SPEED_LO)?;
    if f_lo <= 0.0 {
        return Err(Error::Bracket(format!("{what}: value {f_lo} at c = {SPEED_LO} is not positive")));
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while f(hi)? >= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::Bracket(format!("{what}: no sign change below c = {hi}")));
        }
    }
    let err = std::cell::RefCell::new(None);
    let c = bisect(
        |c| match f(c) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        SPEED_LO,
        hi,
        0.0,
        SPEED_ITER,
    );
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(c),
    }
}

/// Right-half-plane check: `lambda1` must be the only zero with `Re z >= 0`.
fn rhp_warnings(params: &ToyParams, c_abs: f64, tau: f64, lambda1: f64) -> Vec<String> {
    let cp = match CharParams::new(-1.0, params.q, c_abs, c_abs * tau) {
        Ok(cp) => cp,
        Err(e) => return vec![e.to_string()],
    };
    let im_max = (60.0 / cp.h.max(0.1)).max(2.0 * (c_abs + 1.0 + params.q.abs() + 1.0));
    let rect = Rect::new(-1e-9, (2.0 * lambda1).max(5.0), im_max);
    match quasipoly::count_roots_in_rect(&cp, &rect) {
        Ok(1) => Vec::new(),
        Ok(n) => vec![format!("{n} zeros of chi with Re z >= 0 at c = {c_abs}, tau = {tau}; expected only lambda1")],
        Err(e) => vec![format!("right-half-plane check failed: {e}")],
    }
}

/// The unique `c > 0` with `K(c) = kappa`; requires `k_* < 1`.
pub fn speed_positive(params: &ToyParams, tau: f64) -> Result<ToySpeedResult> {
    let ks = k_star(params);
    if ks >= 1.0 {
        return Err(Error::PositiveBranchAbsent(ks));
    }
    check_tau(tau)?;
    let c = decreasing_root(|c| Ok(k_function(params, c, tau)? - params.kappa), "K(c) = kappa")?;
    let mu1 = char_root_mu1(params, c, tau)?;
    let lambda1 = char_root_lambda1(params, c, tau)?;
    let k_value = k_function(params, c, tau)?;
    let (monotone, _) = domain::in_domain(&params.right_domain(), tau, c)?;
    Ok(ToySpeedResult {
        tau,
        c,
        mu1,
        lambda1,
        monotone,
        k_value: Some(k_value),
        warnings: rhp_warnings(params, c, tau, lambda1),
    })
}

/// The unique `c < 0` with `1 - kappa = (1 - p) / (p - q) (lambda1 / mu1 - 1)`
/// at `|c|`; requires `k_* > 1`. Waves on this branch are always monotone.
pub fn speed_negative(params: &ToyParams, tau: f64) -> Result<ToySpeedResult> {
    let ks = k_star(params);
    if ks <= 1.0 {
        return Err(Error::NegativeBranchAbsent(ks));
    }
    check_tau(tau)?;
    let target = 1.0 - params.kappa;
    let c_abs =
        decreasing_root(|c| Ok(negative_branch_value(params, c, tau)? - target), "negative-branch equation")?;
    let mu1 = char_root_mu1(params, c_abs, tau)?;
    let lambda1 = char_root_lambda1(params, c_abs, tau)?;
    Ok(ToySpeedResult {
        tau,
        c: -c_abs,
        mu1,
        lambda1,
        monotone: true,
        k_value: None,
        warnings: rhp_warnings(params, c_abs, tau, lambda1),
    })
}

/// Solves whichever branch `k_*` selects.
pub fn speed(params: &ToyParams, tau: f64) -> Result<ToySpeedResult> {
    match branch(params)? {
        Branch::Positive => speed_positive(params, tau),
        Branch::Negative => speed_negative(params, tau),
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")))
    }
}

/// Explicit right tail of a negative-speed front:
/// `1 - (1 - kappa) exp(-lambda1 (t + c tau))`, with its first two derivatives.
pub fn negative_tail(params: &ToyParams, res: &ToySpeedResult, t: f64) -> (f64, f64, f64) {
    let l = res.lambda1;
    let e = (1.0 - params.kappa) * (-l * (t + res.c * res.tau)).exp();
    (1.0 - e, l * e, -l * l * e)
}

/// Speeds along a delay grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpeedCurve {
    pub params: ToyParams,
    pub branch: Branch,
    pub points: Vec<ToySpeedResult>,
}

impl ToySpeedCurve {
    /// CSV with header `tau,c,monotone`.
    pub fn to_csv(&self) -> String {
        use crate::formats::{csv, num};
        csv(
            &["tau", "c", "monotone"],
            self.points.iter().map(|r| vec![num(r.tau), num(r.c), r.monotone.to_string()]),
        )
    }

    /// Grid interval on which the curve first leaves the domain.
    pub fn exit_interval(&self) -> Option<(f64, f64)> {
        self.points.windows(2).find(|w| w[0].monotone && !w[1].monotone).map(|w| (w[0].tau, w[1].tau))
    }
}

pub fn speed_curve(params: &ToyParams, taus: &[f64]) -> Result<ToySpeedCurve> {
    speed_curve_with(Exec::default(), params, taus)
}

pub fn speed_curve_with(exec: Exec, params: &ToyParams, taus: &[f64]) -> Result<ToySpeedCurve> {
    let br = branch(params)?;
    let results = par::map(exec, taus, |&t| speed(params, t));
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ToySpeedCurve { params: *params, branch: br, points })
}

/// Delay at which `(tau, c(tau))` crosses the boundary of `D(-1, q)`,
/// located by bisection between a monotone and a non-monotone delay.
pub fn domain_exit_tau(params: &ToyParams, tau_in: f64, tau_out: f64) -> Result<f64> {
    let inside = |t: f64| -> Result<bool> {
        let c = speed_positive(params, t)?.c;
        let cl = domain::clin(&params.right_domain(), t)?;
        Ok(cl.admits(c))
    };
    if !inside(tau_in)? || inside(tau_out)? {
        return Err(Error::Bracket(format!("domain exit not bracketed by [{tau_in}, {tau_out}]")));
    }
    let (mut lo, mut hi) = (tau_in, tau_out);
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if inside(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Positive-speed profile sampled on a caller grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyProfile {
    pub speed: ToySpeedResult,
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// Sign changes of `phi - 1` over the second half of the forward range.
    pub tail_sign_changes: usize,
    /// Forward integration horizon.
    pub t_max: f64,
}

impl ToyProfile {
    /// CSV with header `t,phi`.
    pub fn to_csv(&self) -> String {
        use crate::formats::{csv, num};
        csv(&["t", "phi"], self.t.iter().zip(&self.phi).map(|(t, p)| vec![num(*t), num(*p)]))
    }
}

/// Steps per delay interval (at least 512 keeps the step below `c tau / 512`).
const STEPS_PER_DELAY: usize = 512;
/// Step used when `tau = 0`.
const UNDELAYED_STEP: f64 = 1.0 / 512.0;
const ESCAPE_BOUND: f64 = 10.0;

/// Forward solution of `psi'' - c psi' - psi + q psi(t - h) = 0` on a uniform
/// grid starting at `t = -h`, stored with derivatives for Hermite output.
struct Forward {
    dt: f64,
    /// Grid index of `t = 0`.
    origin: usize,
    psi: Vec<f64>,
    dpsi: Vec<f64>,
}

impl Forward {
    fn time(&self, k: usize) -> f64 {
        (k as f64 - self.origin as f64) * self.dt
    }

    /// Cubic Hermite interpolation of `(psi, psi')`.
    fn sample(&self, t: f64) -> (f64, f64) {
        let x = t / self.dt + self.origin as f64;
        let last = self.psi.len() - 1;
        let k = (x.floor().max(0.0) as usize).min(last - 1);
        let s = x - k as f64;
        hermite(self.psi[k], self.psi[k + 1], self.dpsi[k], self.dpsi[k + 1], self.dt, s)
    }
}

fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, dt: f64, s: f64) -> (f64, f64) {
    let (s2, s3) = (s * s, s * s * s);
    let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * dt * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * dt * d1;
    let dv = ((6.0 * s2 - 6.0 * s) * y0 + (-6.0 * s2 + 6.0 * s) * y1) / dt
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (3.0 * s2 - 2.0 * s) * d1;
    (v, dv)
}

fn integrate_forward(params: &ToyParams, sp: &ToySpeedResult, t_max: f64) -> Result<Forward> {
    let (c, mu, lam, q, kappa) = (sp.c, sp.mu1, sp.lambda1, params.q, params.kappa);
    let h = c * sp.tau;
    let dchi = CharParams::new(-1.0, q, c, h)?.deriv_real(lam);
    let rhs = |y: f64, dy: f64, delayed: f64| (dy, c * dy + y - q * delayed);

    if h == 0.0 {
        let dt = UNDELAYED_STEP;
        let n = (t_max / dt).ceil() as usize;
        let mut psi = Vec::with_capacity(n + 1);
        let mut dpsi = Vec::with_capacity(n + 1);
        psi.push(kappa - 1.0);
        dpsi.push(kappa * mu);
        let deflate_every = (1.0 / dt).round() as usize;
        for k in 0..n {
            let (y, dy) = (psi[k], dpsi[k]);
            let f = |y: f64, dy: f64| rhs(y, dy, y);
            let k1 = f(y, dy);
            let k2 = f(y + 0.5 * dt * k1.0, dy + 0.5 * dt * k1.1);
            let k3 = f(y + 0.5 * dt * k2.0, dy + 0.5 * dt * k2.1);
            let k4 = f(y + dt * k3.0, dy + dt * k3.1);
            let mut y1 = y + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            let mut dy1 = dy + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            if (k + 1) % deflate_every == 0 {
                let amp = (dy1 + (lam - c) * y1) / dchi;
                y1 -= amp;
                dy1 -= amp * lam;
            }
            check_escape(y1, (k + 1) as f64 * dt)?;
            psi.push(y1);
            dpsi.push(dy1);
        }
        return Ok(Forward { dt, origin: 0, psi, dpsi });
    }

    let m = STEPS_PER_DELAY;
    let dt = h / m as f64;
    let n = (t_max / dt).ceil() as usize;
    let total = m + n + 1;
    let mut psi = vec![0.0; total];
    let mut dpsi = vec![0.0; total];
    for k in 0..=m {
        let t = (k as f64 - m as f64) * dt;
        let e = kappa * (mu * (t + h)).exp();
        psi[k] = e - 1.0;
        dpsi[k] = mu * e;
    }
    let decay = (-lam * h).exp();
    for k in m..total - 1 {
        let d0 = psi[k - m];
        let dh = hermite(psi[k - m], psi[k - m + 1], dpsi[k - m], dpsi[k - m + 1], dt, 0.5).0;
        let d1 = psi[k - m + 1];
        let (y, dy) = (psi[k], dpsi[k]);
        let k1 = rhs(y, dy, d0);
        let k2 = rhs(y + 0.5 * dt * k1.0, dy + 0.5 * dt * k1.1, dh);
        let k3 = rhs(y + 0.5 * dt * k2.0, dy + 0.5 * dt * k2.1, dh);
        let k4 = rhs(y + dt * k3.0, dy + dt * k3.1, d1);
        psi[k + 1] = y + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        dpsi[k + 1] = dy + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);

        let j = k + 1;
        if (j - m).is_multiple_of(m) {
            // P(s) = psi' + (lambda1 - c) psi - q e^{-lambda1 h} int_{-h}^0 e^{-lambda1 r} psi(s + r) dr
            // grows like e^{lambda1 s}; removing it keeps rounding from exciting the unstable mode.
            let mut integral = 0.0;
            for (i, idx) in (j - m..=j).enumerate() {
                let r = (idx as f64 - j as f64) * dt;
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                integral += w * (-lam * r).exp() * psi[idx];
            }
            integral *= dt / 3.0;
            let amp = (dpsi[j] + (lam - c) * psi[j] - q * decay * integral) / dchi;
            for idx in j - m..=j {
                let e = (lam * (idx as f64 - j as f64) * dt).exp();
                psi[idx] -= amp * e;
                dpsi[idx] -= amp * lam * e;
            }
        }
        check_escape(psi[k + 1], (k + 1 - m) as f64 * dt)?;
    }
    Ok(Forward { dt, origin: m, psi, dpsi })
}

fn check_escape(v: f64, t: f64) -> Result<()> {
    if !v.is_finite() || v.abs() > ESCAPE_BOUND {
        return Err(Error::ProfileEscaped { t, value: v.abs() });
    }
    Ok(())
}

/// Forward horizon `max(40, 20 / |lambda2|)`, capped at 400.
fn default_horizon(params: &ToyParams, sp: &ToySpeedResult) -> f64 {
    let slow = CharParams::new(-1.0, params.q, sp.c, sp.c * sp.tau)
        .ok()
        .and_then(|cp| quasipoly::largest_negative_root(&cp))
        .map(|r| r.value.abs());
    match slow {
        Some(rate) if rate > 0.0 => (20.0 / rate).clamp(40.0, 400.0),
        _ => 40.0,
    }
}

/// Positive-speed profile normalized by `phi(-c tau) = kappa`.
pub fn profile_positive(params: &ToyParams, tau: f64, t_grid: &[f64]) -> Result<ToyProfile> {
    let sp = speed_positive(params, tau)?;
    let grid_end = t_grid.iter().copied().fold(0.0, f64::max);
    let t_max = default_horizon(params, &sp).max(grid_end);
    let fw = integrate_forward(params, &sp, t_max)?;
    let h = sp.c * tau;

    let mut phi = Vec::with_capacity(t_grid.len());
    let mut dphi = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if t <= 0.0 {
            let e = params.kappa * (sp.mu1 * (t + h)).exp();
            phi.push(e);
            dphi.push(sp.mu1 * e);
        } else {
            let (v, dv) = fw.sample(t);
            phi.push(1.0 + v);
            dphi.push(dv);
        }
    }

    let start = fw.origin;
    if sp.monotone {
        if let Some(k) = (start..fw.psi.len()).find(|&k| 1.0 + fw.psi[k] < params.kappa - 1e-12) {
            return Err(Error::ProfileEscaped { t: fw.time(k), value: fw.psi[k].abs() });
        }
    }
    let half = start + (fw.psi.len() - start) / 2;
    let tail_sign_changes = sign_changes(&fw.psi[half..]);
    Ok(ToyProfile { speed: sp, t: t_grid.to_vec(), phi, dphi, tail_sign_changes, t_max })
}

/// Sign changes of `phi - 1` over the whole forward range `[0, t_max]`.
pub fn forward_sign_changes(params: &ToyParams, tau: f64) -> Result<usize> {
    let sp = speed_positive(params, tau)?;
    let fw = integrate_forward(params, &sp, default_horizon(params, &sp))?;
    Ok(sign_changes(&fw.psi[fw.origin..]))
}

fn sign_changes(v: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut n = 0;
    for &x in v {
        if x == 0.0 {
            continue;
        }
        if last != 0.0 && (x > 0.0) != (last > 0.0) {
            n += 1;
        }
        last = x;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fig2() -> ToyParams {
        ToyParams::new(1.0 / 3.0, 0.5, -1.0).unwrap()
    }

    fn fig3() -> ToyParams {
        ToyParams::new(0.9, 0.5, -1.0).unwrap()
    }

    #[test]
    fn constructor_validates() {
        assert!(ToyParams::new(0.0, 0.5, -1.0).is_err());
        assert!(ToyParams::new(0.5, 1.0, -1.0).is_err());
        assert!(ToyParams::new(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn k_star_examples() {
        assert_abs_diff_eq!(k_star(&fig2()), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k_star(&fig3()), 1.35, epsilon = 1e-14);
        assert_eq!(branch(&fig2()).unwrap(), Branch::Positive);
        assert_eq!(branch(&fig3()).unwrap(), Branch::Negative);
    }

    #[test]
    fn frak_p_matches_quadrature() {
        for p in [fig2(), fig3(), ToyParams::new(0.2, 0.9, -3.0).unwrap()] {
            assert_abs_diff_eq!(frak_p(&p), frak_p_quadrature(&p), epsilon = 1e-10);
            assert_eq!(frak_p(&p) > 0.0, k_star(&p) < 1.0);
        }
    }

    #[test]
    fn mu1_closed_forms() {
        let p = fig2();
        assert_abs_diff_eq!(char_root_mu1(&p, 1.0, 0.0).unwrap(), (1.0 + 3f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(char_root_mu1(&p, 1e-9, 0.0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-8);
        for &(c, tau) in &[(0.3, 2.0), (2.0, 0.7), (0.05, 10.0)] {
            let mu = char_root_mu1(&p, c, tau).unwrap();
            let r = mu * mu - c * mu - 1.0 + 0.5 * (-c * tau * mu).exp();
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn k_function_values() {
        let p = fig2();
        assert_abs_diff_eq!(k_function(&p, 1.0, 0.0).unwrap(), 4.0 / 3.0 * (1.0 - (1.0 + 3f64.sqrt()) / 4.0), epsilon = 1e-12);
        assert_abs_diff_eq!(k_zero(&p), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k_function(&p, 1e-9, 0.0).unwrap(), 2.0 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn k_decreasing_in_speed() {
        let p = fig2();
        for tau in [0.0, 1.0, 3.0] {
            let ks: Vec<f64> = (1..500).map(|i| k_function(&p, 0.02 * i as f64, tau).unwrap()).collect();
            assert!(ks.windows(2).all(|w| w[1] < w[0]), "tau = {tau}");
        }
    }

    #[test]
    fn positive_speeds() {
        let p = fig2();
        let expected = [(0.0, 1.44338), (1.0, 0.47804), (2.0, 0.30387), (4.0, 0.17772), (6.0, 0.12592)];
        for (tau, c) in expected {
            let r = speed_positive(&p, tau).unwrap();
            assert_abs_diff_eq!(r.c, c, epsilon = 1e-5);
            assert!((r.k_value.unwrap() - p.kappa()).abs() < 1e-9);
            assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        }
        assert!(speed_positive(&p, 1.0).unwrap().monotone);
        assert!(!speed_positive(&p, 6.0).unwrap().monotone);
        assert!(matches!(speed_positive(&fig3(), 0.0), Err(Error::PositiveBranchAbsent(_))));
    }

    #[test]
    fn negative_speeds() {
        let p = fig3();
        let mut prev = f64::INFINITY;
        for tau in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let r = speed_negative(&p, tau).unwrap();
            assert!(r.c < 0.0 && r.monotone);
            let res = negative_branch_value(&p, -r.c, tau).unwrap() - (1.0 - p.kappa());
            assert!(res.abs() < 1e-9);
            assert!(r.c.abs() < prev);
            prev = r.c.abs();
        }
        assert!(matches!(speed_negative(&fig2(), 0.0), Err(Error::NegativeBranchAbsent(_))));
    }

    #[test]
    fn negative_tail_solves_profile_equation() {
        let p = fig3();
        for tau in [0.0, 1.5, 4.0] {
            let r = speed_negative(&p, tau).unwrap();
            let h = r.c * tau;
            for i in 0..200 {
                let t = 0.05 * i as f64;
                let (v, dv, d2v) = negative_tail(&p, &r, t);
                let delayed = negative_tail(&p, &r, t - h).0;
                assert!(delayed >= p.kappa() - 1e-14);
                let res = d2v - r.c * dv - v + p.f(delayed);
                assert!(res.abs() < 1e-8, "tau {tau} t {t}: {res}");
            }
        }
    }

    #[test]
    fn exit_from_domain() {
        let p = fig2();
        let tau = domain_exit_tau(&p, 4.0, 4.2).unwrap();
        assert_abs_diff_eq!(tau, 4.1103, epsilon = 2e-3);
    }

    #[test]
    fn profile_normalization_and_junction() {
        let p = fig2();
        for tau in [0.0, 1.0] {
            let sp = speed_positive(&p, tau).unwrap();
            let h = sp.c * tau;
            let grid = [-h, -1e-13, 1e-13, 5.0];
            let prof = profile_positive(&p, tau, &grid).unwrap();
            assert_abs_diff_eq!(prof.phi[0], p.kappa(), epsilon = 1e-14);
            assert_abs_diff_eq!(prof.phi[1], prof.phi[2], epsilon = 1e-10);
            assert_abs_diff_eq!(prof.dphi[1], prof.dphi[2], epsilon = 1e-10);
            assert_eq!(prof.tail_sign_changes, 0);
            assert!(prof.phi[3] > prof.phi[2] && prof.phi[3] < 1.0);
        }
    }

    #[test]
    fn profile_oscillates_beyond_domain() {
        let p = fig2();
        let grid: Vec<f64> = (0..=400).map(|i| -10.0 + 0.1 * i as f64).collect();
        let prof = profile_positive(&p, 6.0, &grid).unwrap();
        assert!(!prof.speed.monotone);
        let fwd: Vec<f64> = prof.t.iter().zip(&prof.phi).filter(|(t, _)| **t > 0.0).map(|(_, v)| v - 1.0).collect();
        assert!(sign_changes(&fwd) >= 2);
        assert!(prof.tail_sign_changes >= 1);
        assert!(forward_sign_changes(&p, 6.0).unwrap() >= 2);
        assert_eq!(forward_sign_changes(&p, 3.0).unwrap(), 0);
    }

    #[test]
    fn curve_is_decreasing_and_flags_exit() {
        let p = fig2();
        let taus: Vec<f64> = (0..=60).map(|i| 0.1 * i as f64).collect();
        let curve = speed_curve(&p, &taus).unwrap();
        assert!(curve.points.windows(2).all(|w| w[1].c < w[0].c));
        let (a, b) = curve.exit_interval().unwrap();
        assert!(a < 4.12 && b > 4.1);
        assert_eq!(curve.points[0].c, speed_positive(&p, 0.0).unwrap().c);
        let csv = curve.to_csv();
        assert!(csv.starts_with("tau,c,monotone\n"));
        assert_eq!(csv.lines().count(), 62);
    }
}
