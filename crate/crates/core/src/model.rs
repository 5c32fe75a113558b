//! Reaction terms `g(u, v)` (with `v` the delayed value), steady-state
//! discovery, and grid checks of the structural hypotheses.
//!
//! Families:
//!
//! * Mackey-Glass type `g = -u + f(v)` with the cubic-perturbed identity
//!   `f(u) = u + k u (u - e2)(1 - u)`; `k = 1, e2 = 1/4` is the Nagumo case.
//! * Virus infection `g = u (1 - u - f(v))` with a Gaussian bump
//!   `f(v) = A exp(-w (v - m)^2)`.
//! * Smoothed toy model `g = -u + f(v)`, `f` the piecewise-linear toy birth
//!   function with its jump at `kappa` blended over a `tanh` layer of width
//!   `eps` (`eps = 0` evaluates the discontinuous function directly).
//! * Custom closures (library use only).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect, simpson};

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MackeyGlass,
    Virus,
    ToySmooth,
    Custom,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::MackeyGlass => "mackey_glass",
            ModelKind::Virus => "virus",
            ModelKind::ToySmooth => "toy_smooth",
            ModelKind::Custom => "custom",
        })
    }
}

#[derive(Clone)]
enum Reaction {
    MackeyGlass { k: f64, e2: f64 },
    Virus { amplitude: f64, center: f64, width: f64 },
    ToySmooth { kappa: f64, p: f64, q: f64, eps: f64 },
    Custom { g: ScalarFn, g1: ScalarFn, g2: ScalarFn },
    Reflected { base: Arc<ModelSpec>, shift: f64 },
}

/// A reaction term with analytic partial derivatives on `(lo, hi)^2`.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    kind: ModelKind,
    domain_lo: f64,
    domain_hi: f64,
    reaction: Reaction,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("domain", &(self.domain_lo, self.domain_hi))
            .finish()
    }
}

fn check_domain(lo: f64, hi: f64) -> Result<()> {
    if lo < hi && lo.is_finite() && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("model domain needs lo < hi, got ({lo}, {hi})")))
    }
}

impl ModelSpec {
    /// `g = -u + f(v)`, `f(u) = u + k u (u - e2)(1 - u)`; states `0 < e2 < 1`.
    pub fn mackey_glass(k: f64, e2: f64, domain: (f64, f64)) -> Result<Self> {
        if !(k > 0.0 && e2 > 0.0 && e2 < 1.0) {
            return Err(Error::InvalidParameter(format!("mackey_glass needs k > 0, 0 < e2 < 1; got k = {k}, e2 = {e2}")));
        }
        check_domain(domain.0, domain.1)?;
        Ok(Self {
            name: format!("mackey_glass(k={k}, e2={e2})"),
            kind: ModelKind::MackeyGlass,
            domain_lo: domain.0,
            domain_hi: domain.1,
            reaction: Reaction::MackeyGlass { k, e2 },
        })
    }

    /// Nagumo nonlinearity `g(u, u) = u (1 - u)(u - alpha)` in Mackey-Glass form.
    pub fn nagumo(alpha: f64) -> Result<Self> {
        let mut m = Self::mackey_glass(1.0, alpha, (-0.05, 1.2))?;
        m.name = format!("nagumo(alpha={alpha})");
        Ok(m)
    }

    /// `g = u (1 - u - A exp(-w (v - m)^2))`.
    pub fn virus(amplitude: f64, center: f64, width: f64, domain: (f64, f64)) -> Result<Self> {
        if !(amplitude > 0.0 && width > 0.0 && center.is_finite()) {
            return Err(Error::InvalidParameter("virus needs amplitude > 0 and width > 0".into()));
        }
        check_domain(domain.0, domain.1)?;
        Ok(Self {
            name: format!("virus(A={amplitude}, m={center}, w={width})"),
            kind: ModelKind::Virus,
            domain_lo: domain.0,
            domain_hi: domain.1,
            reaction: Reaction::Virus { amplitude, center, width },
        })
    }

    /// Toy model `g = -u + f(v)` with the jump smoothed over width `eps`.
    pub fn toy_smooth(kappa: f64, p: f64, q: f64, eps: f64, domain: (f64, f64)) -> Result<Self> {
        crate::toy::ToyParams::new(kappa, p, q)?;
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("toy_smooth needs eps >= 0, got {eps}")));
        }
        check_domain(domain.0, domain.1)?;
        Ok(Self {
            name: format!("toy_smooth(kappa={kappa}, p={p}, q={q}, eps={eps})"),
            kind: ModelKind::ToySmooth,
            domain_lo: domain.0,
            domain_hi: domain.1,
            reaction: Reaction::ToySmooth { kappa, p, q, eps },
        })
    }

    pub fn custom(name: &str, g: ScalarFn, g1: ScalarFn, g2: ScalarFn, domain: (f64, f64)) -> Result<Self> {
        check_domain(domain.0, domain.1)?;
        Ok(Self {
            name: name.to_string(),
            kind: ModelKind::Custom,
            domain_lo: domain.0,
            domain_hi: domain.1,
            reaction: Reaction::Custom { g, g1, g2 },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    pub fn is_reflected(&self) -> bool {
        matches!(self.reaction, Reaction::Reflected { .. })
    }

    /// Toy parameters `(kappa, p, q, eps)` for the smoothed toy kind.
    pub fn toy_parameters(&self) -> Option<(f64, f64, f64, f64)> {
        match self.reaction {
            Reaction::ToySmooth { kappa, p, q, eps } => Some((kappa, p, q, eps)),
            _ => None,
        }
    }

    pub fn g(&self, u: f64, v: f64) -> f64 {
        match &self.reaction {
            Reaction::MackeyGlass { k, e2 } => -u + v + k * v * (v - e2) * (1.0 - v),
            Reaction::Virus { amplitude, center, width } => {
                u * (1.0 - u - amplitude * (-width * (v - center).powi(2)).exp())
            }
            Reaction::ToySmooth { kappa, p, q, eps } => -u + toy_f(*kappa, *p, *q, *eps, v).0,
            Reaction::Custom { g, .. } => g(u, v),
            Reaction::Reflected { base, shift } => -base.g(shift - u, shift - v),
        }
    }

    /// `dg/du`.
    pub fn g1(&self, u: f64, v: f64) -> f64 {
        match &self.reaction {
            Reaction::MackeyGlass { .. } | Reaction::ToySmooth { .. } => -1.0,
            Reaction::Virus { amplitude, center, width } => {
                1.0 - 2.0 * u - amplitude * (-width * (v - center).powi(2)).exp()
            }
            Reaction::Custom { g1, .. } => g1(u, v),
            Reaction::Reflected { base, shift } => base.g1(shift - u, shift - v),
        }
    }

    /// `dg/dv`.
    pub fn g2(&self, u: f64, v: f64) -> f64 {
        match &self.reaction {
            Reaction::MackeyGlass { k, e2 } => 1.0 + k * (-3.0 * v * v + 2.0 * (1.0 + e2) * v - e2),
            Reaction::Virus { amplitude, center, width } => {
                let d = v - center;
                u * amplitude * 2.0 * width * d * (-width * d * d).exp()
            }
            Reaction::ToySmooth { kappa, p, q, eps } => toy_f(*kappa, *p, *q, *eps, v).1,
            Reaction::Custom { g2, .. } => g2(u, v),
            Reaction::Reflected { base, shift } => base.g2(shift - u, shift - v),
        }
    }
}

/// Smoothed toy birth function and its derivative.
fn toy_f(kappa: f64, p: f64, q: f64, eps: f64, v: f64) -> (f64, f64) {
    let lower = p * v;
    let upper = 1.0 + q * (v - 1.0);
    if eps == 0.0 {
        return if v < kappa { (lower, p) } else { (upper, q) };
    }
    let th = ((v - kappa) / eps).tanh();
    let w = 0.5 * (1.0 + th);
    let dw = 0.5 * (1.0 - th * th) / eps;
    (lower + (upper - lower) * w, p + (q - p) * w + (upper - lower) * dw)
}

/// Zeros `e1 < e2 < e3` of `g(u, u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStates {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl SteadyStates {
    pub fn span(&self) -> f64 {
        self.e3 - self.e1
    }
}

const STATE_SCAN_POINTS: usize = 2048;

/// Scans `g(u, u)` over the open model interval, bisects each sign change to
/// `1e-12`, and checks hypothesis (B) at the outer states.
pub fn find_steady_states(model: &ModelSpec) -> Result<SteadyStates> {
    find_steady_states_with(model, STATE_SCAN_POINTS)
}

pub fn find_steady_states_with(model: &ModelSpec, scan_points: usize) -> Result<SteadyStates> {
    let roots = diagonal_zeros(model, scan_points);
    if roots.len() != 3 {
        return Err(Error::NotBistable { found: roots.len() });
    }
    let states = SteadyStates { e1: roots[0], e2: roots[1], e3: roots[2] };
    for (label, e) in [("e1", states.e1), ("e3", states.e3)] {
        let (g1, g2) = (model.g1(e, e), model.g2(e, e));
        if !(g1 + g2 < 0.0 && g1 < 0.0) {
            return Err(Error::HypothesisB(format!("{label} = {e}: g1 = {g1}, g2 = {g2}")));
        }
    }
    Ok(states)
}

fn diagonal_zeros(model: &ModelSpec, n: usize) -> Vec<f64> {
    let (lo, hi) = model.domain();
    let d = |u: f64| model.g(u, u);
    let xs: Vec<f64> = (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| d(x)).collect();
    let mut roots = Vec::new();
    let mut i = 0;
    while i < n {
        if ys[i] == 0.0 {
            roots.push(xs[i]);
        } else if i + 1 < n && ys[i + 1] != 0.0 && (ys[i] > 0.0) != (ys[i + 1] > 0.0) {
            roots.push(bisect(d, xs[i], xs[i + 1], 1e-13, 200));
        }
        i += 1;
    }
    roots
}

/// Grid verification of (B), (U), (U*) and the sign of `J = int g(u, u) du`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub b_ok: bool,
    pub u_ok: bool,
    pub ustar_ok: bool,
    pub i_ok: bool,
    pub strong_subtangency_ok: bool,
    pub i_value: f64,
    pub kappa_detected: Option<f64>,
    pub failure_notes: Vec<String>,
}

pub const DEFAULT_HYPOTHESIS_GRID: usize = 400;

/// Sign pattern of `g2(u, .)` across the critical line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CriticalPattern {
    /// `g2 < 0` below `kappa`, `> 0` above.
    NegPos,
    /// `g2 > 0` below `kappa`, `< 0` above.
    PosNeg,
}

/// `J = int_{e1}^{e3} g(u, u) du` to absolute tolerance `1e-10`.
pub fn frak_j(model: &ModelSpec, states: &SteadyStates) -> f64 {
    // Split at e2 so the adaptive rule sees each lobe separately.
    let d = |u: f64| model.g(u, u);
    simpson(d, states.e1, states.e2, 5e-11) + simpson(d, states.e2, states.e3, 5e-11)
}

pub fn check_hypotheses(model: &ModelSpec, states: &SteadyStates) -> HypothesisReport {
    check_hypotheses_with(model, states, DEFAULT_HYPOTHESIS_GRID)
}

pub fn check_hypotheses_with(model: &ModelSpec, states: &SteadyStates, n: usize) -> HypothesisReport {
    let mut notes = Vec::new();
    let (lo, hi) = model.domain();
    let SteadyStates { e1, e2, e3 } = *states;

    let mut b_ok = lo < e1 && e1 < e2 && e2 < e3 && e3 < hi;
    for (label, e) in [("e1", e1), ("e3", e3)] {
        let (g1, g2) = (model.g1(e, e), model.g2(e, e));
        if !(g1 + g2 < 0.0 && g1 < 0.0) {
            b_ok = false;
            notes.push(format!("(B): at {label} = {e}, g1 = {g1}, g2 = {g2}"));
        }
    }
    for (label, e) in [("e1", e1), ("e2", e2), ("e3", e3)] {
        let r = model.g(e, e);
        if r.abs() >= 1e-10 {
            b_ok = false;
            notes.push(format!("(B): |g({label}, {label})| = {:e}", r.abs()));
        }
    }

    let critical = detect_critical_line(model, n, &mut notes);
    let kappa_detected = critical.map(|(k, _)| k);
    let interior = |a: f64, b: f64, i: usize| a + (b - a) * (i as f64 + 0.5) / n as f64;
    let closed = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (n - 1).max(1) as f64;

    let u_ok = match critical {
        Some((kappa, CriticalPattern::NegPos)) if e1 < kappa && kappa < e2 => {
            let mut ok = true;
            'g1: for i in 0..n {
                let u = e1 + (e2 - e1) * i as f64 / n as f64;
                for j in 0..n {
                    let v = closed(e1, kappa, j);
                    if u >= v && model.g1(u, v) >= 0.0 {
                        notes.push(format!("(U): g1({u}, {v}) >= 0"));
                        ok = false;
                        break 'g1;
                    }
                }
            }
            for i in 0..n {
                let u = interior(e2, hi, i);
                if model.g(u, e1) >= 0.0 {
                    notes.push(format!("(U): g({u}, e1) >= 0 above e2"));
                    ok = false;
                    break;
                }
            }
            for i in 0..n {
                let u = interior(lo, e1, i);
                if model.g(u, e1) <= 0.0 {
                    notes.push(format!("(U): g({u}, e1) <= 0 below e1"));
                    ok = false;
                    break;
                }
            }
            ok
        }
        Some((kappa, CriticalPattern::NegPos)) => {
            notes.push(format!("(U): critical point {kappa} outside (e1, e2)"));
            false
        }
        _ => false,
    };

    let strong_subtangency_ok = {
        let (r1, r2) = (model.g1(e3, e3), model.g2(e3, e3));
        let tol = |r: f64| 1e-12 * r.abs().max(1.0);
        let mut ok = true;
        'st: for i in 0..n {
            let u = closed(e1, e3, i);
            for j in 0..=i {
                let v = closed(e1, e3, j);
                let (a, b) = (model.g1(u, v), model.g2(u, v));
                if a < r1 - tol(r1) || b < r2 - tol(r2) {
                    notes.push(format!("(U*): strong sub-tangency fails at ({u}, {v})"));
                    ok = false;
                    break 'st;
                }
            }
        }
        ok
    };

    let ustar_ok = match critical {
        Some((kappa, CriticalPattern::PosNeg)) if e2 < kappa && kappa < e3 => {
            let mut ok = true;
            'g1: for i in 0..n {
                let u = closed(kappa, e3, i);
                for j in 0..n {
                    let v = closed(kappa, e3, j);
                    if u >= v && model.g1(u, v) >= 0.0 {
                        notes.push(format!("(U*): g1({u}, {v}) >= 0"));
                        ok = false;
                        break 'g1;
                    }
                }
            }
            ok && strong_subtangency_ok
        }
        Some((kappa, CriticalPattern::PosNeg)) => {
            notes.push(format!("(U*): critical point {kappa} outside (e2, e3)"));
            false
        }
        _ => false,
    };

    let i_value = frak_j(model, states);
    let i_ok = i_value > 0.0;
    if !i_ok {
        notes.push(format!("(I): J = {i_value} is not positive"));
    }

    HypothesisReport {
        b_ok,
        u_ok,
        ustar_ok,
        i_ok,
        strong_subtangency_ok,
        i_value,
        kappa_detected,
        failure_notes: notes,
    }
}

/// Locates the common zero line `v = kappa` of `g2(u, .)`; requires exactly
/// one sign change per `u` and a spread below `1e-6 (hi - lo)`.
fn detect_critical_line(model: &ModelSpec, n: usize, notes: &mut Vec<String>) -> Option<(f64, CriticalPattern)> {
    let (lo, hi) = model.domain();
    let at = |i: usize| lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
    let mut kappas = Vec::with_capacity(n);
    let mut pattern = None;
    for i in 0..n {
        let u = at(i);
        let vals: Vec<f64> = (0..n).map(|j| model.g2(u, at(j))).collect();
        let changes: Vec<usize> =
            (0..n - 1).filter(|&j| vals[j] != 0.0 && vals[j + 1] != 0.0 && (vals[j] > 0.0) != (vals[j + 1] > 0.0)).collect();
        let exact: Vec<usize> = (1..n - 1).filter(|&j| vals[j] == 0.0).collect();
        if changes.len() + exact.len() != 1 {
            notes.push(format!(
                "(U)/(U*): g2({u}, .) has {} sign changes on the grid",
                changes.len() + exact.len()
            ));
            return None;
        }
        let (k, below) = if let Some(&j) = changes.first() {
            (bisect(|v| model.g2(u, v), at(j), at(j + 1), 1e-14, 200), vals[j])
        } else {
            (at(exact[0]), vals[exact[0] - 1])
        };
        let pat = if below < 0.0 { CriticalPattern::NegPos } else { CriticalPattern::PosNeg };
        if pattern.is_some_and(|p| p != pat) {
            notes.push("(U)/(U*): sign pattern of g2 depends on u".into());
            return None;
        }
        pattern = Some(pat);
        kappas.push(k);
    }
    let min = kappas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = kappas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min > 1e-6 * (hi - lo) {
        notes.push(format!("(U)/(U*): critical point varies with u over [{min}, {max}]"));
        return None;
    }
    Some((0.5 * (min + max), pattern?))
}

/// Reflection `g~(u, v) = -g(s - u, s - v)` with `s = e1 + e3`; maps fronts of
/// speed `c` to fronts of speed `-c` and swaps the roles of (U) and (U*).
pub fn transform_reflect(model: &ModelSpec, states: &SteadyStates) -> (ModelSpec, SteadyStates) {
    let shift = states.e1 + states.e3;
    let (lo, hi) = model.domain();
    let reflected = match &model.reaction {
        // Reflecting twice is the identity.
        Reaction::Reflected { base, shift: s } if (s - shift).abs() <= 1e-15 * shift.abs().max(1.0) => (**base).clone(),
        _ => ModelSpec {
            name: format!("reflected({})", model.name),
            kind: model.kind,
            domain_lo: shift - hi,
            domain_hi: shift - lo,
            reaction: Reaction::Reflected { base: Arc::new(model.clone()), shift },
        },
    };
    let states = SteadyStates { e1: states.e1, e2: shift - states.e2, e3: states.e3 };
    (reflected, states)
}

/// A model file: the reaction term plus any extra keys (solver options).
#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub model: ModelSpec,
    pub extra: BTreeMap<String, String>,
}

/// Parses `key = value` lines (`#` starts a comment). Recognized keys:
///
/// * `kind`: `mackey_glass`, `nagumo`, `virus` or `toy_smooth`;
/// * `mackey_glass`: `k`, `e2`; `nagumo`: `alpha`;
/// * `virus`: `amplitude`, `center`, `width`;
/// * `toy_smooth`: `kappa`, `p`, `q`, `eps`;
/// * `domain = lo, hi` (optional for every kind);
/// * `name` (optional).
///
/// Every other key is returned in [`ModelConfig::extra`].
pub fn parse_config(text: &str) -> Result<ModelConfig> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
        }
    }
    let kind = map.remove("kind").ok_or_else(|| Error::Config("missing key: kind".into()))?;
    let name = map.remove("name");
    let domain = map.remove("domain").map(|d| parse_pair(&d)).transpose()?;

    let mut take = |key: &str, default: Option<f64>| -> Result<f64> {
        match map.remove(key) {
            Some(v) => v.parse::<f64>().map_err(|_| Error::Config(format!("{key}: not a number: {v}"))),
            None => default.ok_or_else(|| Error::Config(format!("missing key: {key}"))),
        }
    };

    let mut model = match kind.as_str() {
        "mackey_glass" => {
            let k = take("k", None)?;
            let e2 = take("e2", None)?;
            ModelSpec::mackey_glass(k, e2, domain.unwrap_or((-0.05, 1.2)))?
        }
        "nagumo" => {
            let alpha = take("alpha", Some(0.25))?;
            let mut m = ModelSpec::nagumo(alpha)?;
            if let Some(d) = domain {
                check_domain(d.0, d.1)?;
                m.domain_lo = d.0;
                m.domain_hi = d.1;
            }
            m
        }
        "virus" => {
            let a = take("amplitude", None)?;
            let c = take("center", None)?;
            let w = take("width", None)?;
            ModelSpec::virus(a, c, w, domain.unwrap_or((0.0, 1.0)))?
        }
        "toy_smooth" => {
            let kappa = take("kappa", None)?;
            let p = take("p", None)?;
            let q = take("q", None)?;
            let eps = take("eps", Some(DEFAULT_TOY_EPS))?;
            ModelSpec::toy_smooth(kappa, p, q, eps, domain.unwrap_or((-0.05, 1.2)))?
        }
        other => return Err(Error::Config(format!("unknown kind: {other}"))),
    };
    if let Some(n) = name {
        model.name = n;
    }
    Ok(ModelConfig { model, extra: map })
}

/// Default smoothing width of the toy jump.
pub const DEFAULT_TOY_EPS: f64 = 0.02;

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("expected 'lo, hi', got {s}")));
    }
    let p = |x: &str| x.parse::<f64>().map_err(|_| Error::Config(format!("not a number: {x}")));
    Ok((p(parts[0])?, p(parts[1])?))
}
