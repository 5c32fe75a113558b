//! Wavefront profiles by collocation and continuation in the delay.
//!
//! The profile equation `phi'' - c phi' + g(phi(t), phi(t - c tau)) = 0` is
//! discretized by central differences on a uniform grid over `[-L, L]`.
//! Delayed values come from cubic Lagrange interpolation on the grid and, left
//! of `-L`, from the asymptotic form `e1 + (phi_0 - e1) exp(rho_- (s + L))`.
//! The edges carry Robin conditions `phi' = rho (phi - e)` with `rho` the
//! designated roots of the linearizations at `e1` and `e3`.
//!
//! The speed enters as a grid function `c_i` constrained to be constant, with
//! unknowns ordered `(phi_0, c_0, phi_1, c_1, ...)`. The Jacobian is then
//! banded: the constancy rows chain each `c_i` to its neighbour, and the
//! phase condition `phi(0) = (e1 + e2) / 2` sits at the middle node.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::domain::{self, DomainParams};
use crate::error::{Error, Result};
use crate::model::{frak_j, ModelSpec, SteadyStates};
use crate::quasipoly::{self, CharParams};
use crate::verify;

/// Discretization and Newton settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Half-width `L` of the computational interval.
    pub l: f64,
    /// Number of grid intervals (even).
    pub n: usize,
    /// Tolerance on the infinity norm of the discrete residual.
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { l: 40.0, n: 2000, tol: 1e-8, max_newton: 60 }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.n < 200 || !self.n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("N must be even and >= 200, got {}", self.n)));
        }
        if !(self.l > 0.0) || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("L and tol must be positive".into()));
        }
        Ok(())
    }
}

/// A computed front on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub c: f64,
    pub tau: f64,
    pub h: f64,
    /// Max of the discrete profile equation over interior nodes.
    pub residual_inf: f64,
    pub model_id: String,
    pub states: SteadyStates,
    pub l: f64,
    pub n: usize,
    pub warnings: Vec<String>,
    pub newton_iterations: usize,
}

impl WaveProfile {
    pub fn dt(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    /// Linear interpolation of `phi` at `t` inside the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        let x = ((t + self.l) / self.dt()).clamp(0.0, self.n as f64);
        let k = (x.floor() as usize).min(self.n - 1);
        let s = x - k as f64;
        self.phi[k] * (1.0 - s) + self.phi[k + 1] * s
    }

    /// CSV with header `t,phi`.
    pub fn to_csv(&self) -> String {
        use crate::formats::{csv, num};
        csv(&["t", "phi"], self.t.iter().zip(&self.phi).map(|(t, p)| vec![num(*t), num(*p)]))
    }
}

/// Linearization `z^2 - c z + a + b exp(-z c tau)` of the profile equation at a
/// steady state `e`, with `(a, b) = (g1(e, e), g2(e, e))`.
pub fn linearization(model: &ModelSpec, e: f64, c: f64, tau: f64) -> Result<CharParams> {
    let h = c * tau;
    if h < 0.0 {
        return Err(Error::AdvancedArgument(h));
    }
    Ok(CharParams::linearization(model.g1(e, e), model.g2(e, e), c, h))
}

/// Decay rate toward `e1` at `-inf`: the dominant positive root, with `d rho / d c`.
pub fn left_rate(model: &ModelSpec, states: &SteadyStates, c: f64, tau: f64) -> Result<(f64, f64)> {
    let cp = linearization(model, states.e1, c, tau)?;
    let rho = quasipoly::dominant_positive_root(&cp)?;
    let d = cp.deriv_real(rho);
    let drho = if d.abs() > 1e-12 { -cp.dchi_dc_real(rho, tau) / d } else { 0.0 };
    Ok((rho, drho))
}

/// Decay rate toward `e3` at `+inf`: the largest negative real root (with
/// its multiplicity and `d rho / d c`), or `None` when the tail oscillates.
pub fn right_rate(model: &ModelSpec, states: &SteadyStates, c: f64, tau: f64) -> Result<Option<(f64, u32, f64)>> {
    let cp = linearization(model, states.e3, c, tau)?;
    Ok(quasipoly::largest_negative_root(&cp).map(|r| {
        let d = cp.deriv_real(r.value);
        let drho = if r.multiplicity == 1 && d.abs() > 1e-8 { -cp.dchi_dc_real(r.value, tau) / d } else { 0.0 };
        (r.value, r.multiplicity, drho)
    }))
}

/// Cubic Lagrange weights for nodes at offsets -1, 0, 1, 2 and their
/// derivatives with respect to the position `r`.
fn lagrange4(r: f64) -> ([f64; 4], [f64; 4]) {
    let w = [
        -r * (r - 1.0) * (r - 2.0) / 6.0,
        (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0,
        -(r + 1.0) * r * (r - 2.0) / 2.0,
        (r + 1.0) * r * (r - 1.0) / 6.0,
    ];
    let dw = [
        -(3.0 * r * r - 6.0 * r + 2.0) / 6.0,
        (3.0 * r * r - 4.0 * r - 1.0) / 2.0,
        -(3.0 * r * r - 2.0 * r - 2.0) / 2.0,
        (3.0 * r * r - 1.0) / 6.0,
    ];
    (w, dw)
}

struct Delayed {
    value: f64,
    /// Partial derivative with respect to the local speed.
    d_c: f64,
    /// `(node, weight)` pairs.
    terms: [(usize, f64); 4],
    len: usize,
}

struct Problem<'a> {
    model: &'a ModelSpec,
    states: SteadyStates,
    tau: f64,
    l: f64,
    n: usize,
    dt: f64,
}

impl<'a> Problem<'a> {
    fn new(model: &'a ModelSpec, states: &SteadyStates, tau: f64, opts: &SolverOptions) -> Self {
        Self { model, states: *states, tau, l: opts.l, n: opts.n, dt: 2.0 * opts.l / opts.n as f64 }
    }

    fn unknowns(&self) -> usize {
        2 * self.n + 2
    }

    fn time(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.dt
    }

    fn delayed(&self, x: &[f64], i: usize, c: f64) -> Result<Delayed> {
        let phi = |j: usize| x[2 * j];
        let mut terms = [(0usize, 0.0f64); 4];
        if self.tau == 0.0 {
            terms[0] = (i, 1.0);
            return Ok(Delayed { value: phi(i), d_c: 0.0, terms, len: 1 });
        }
        let h = c * self.tau;
        if h < 0.0 {
            return Err(Error::AdvancedArgument(h));
        }
        let s = self.time(i) - h;
        if s < -self.l {
            let (rho, drho) = left_rate(self.model, &self.states, c, self.tau)?;
            let e = (rho * (s + self.l)).exp();
            let amp = phi(0) - self.states.e1;
            terms[0] = (0, e);
            let d_c = amp * e * (drho * (s + self.l) - rho * self.tau);
            return Ok(Delayed { value: self.states.e1 + amp * e, d_c, terms, len: 1 });
        }
        let pos = (s + self.l) / self.dt;
        let j0 = (pos.floor() as isize).clamp(1, self.n as isize - 2) as usize;
        let r = pos - j0 as f64;
        let (w, dw) = lagrange4(r);
        let mut value = 0.0;
        let mut dval = 0.0;
        for k in 0..4 {
            let j = j0 + k - 1;
            value += w[k] * phi(j);
            dval += dw[k] * phi(j);
            terms[k] = (j, w[k]);
        }
        Ok(Delayed { value, d_c: -dval * self.tau / self.dt, terms, len: 4 })
    }

    fn max_delay_nodes(&self, x: &[f64]) -> usize {
        let cmax = (0..=self.n).map(|i| x[2 * i + 1]).fold(0.0, f64::max);
        (cmax * self.tau / self.dt).ceil() as usize
    }

    /// Residual, and optionally the Jacobian accumulated into `jac`.
    fn eval(&self, x: &[f64], mut jac: Option<&mut BandMatrix>) -> Result<Vec<f64>> {
        let n = self.n;
        let dt = self.dt;
        let (e1, e2, e3) = (self.states.e1, self.states.e2, self.states.e3);
        let phi = |j: usize| x[2 * j];
        let cc = |j: usize| x[2 * j + 1];
        let mut r = vec![0.0; self.unknowns()];
        let put = |jac: &mut Option<&mut BandMatrix>, i: usize, j: usize, v: f64| {
            if let Some(m) = jac.as_deref_mut() {
                m.add(i, j, v);
            }
        };

        let (rho_l, drho_l) = left_rate(self.model, &self.states, cc(0), self.tau)?;
        r[0] = (-3.0 * phi(0) + 4.0 * phi(1) - phi(2)) / (2.0 * dt) - rho_l * (phi(0) - e1);
        put(&mut jac, 0, 0, -3.0 / (2.0 * dt) - rho_l);
        put(&mut jac, 0, 2, 4.0 / (2.0 * dt));
        put(&mut jac, 0, 4, -1.0 / (2.0 * dt));
        put(&mut jac, 0, 1, -drho_l * (phi(0) - e1));

        let inv2 = 1.0 / (dt * dt);
        for i in 1..n {
            let c = cc(i);
            let row = 2 * i;
            let d = self.delayed(x, i, c)?;
            let (u, v) = (phi(i), d.value);
            let slope = (phi(i + 1) - phi(i - 1)) / (2.0 * dt);
            r[row] = (phi(i + 1) - 2.0 * u + phi(i - 1)) * inv2 - c * slope + self.model.g(u, v);
            if jac.is_some() {
                let (g1, g2) = (self.model.g1(u, v), self.model.g2(u, v));
                put(&mut jac, row, 2 * (i - 1), inv2 + c / (2.0 * dt));
                put(&mut jac, row, 2 * (i + 1), inv2 - c / (2.0 * dt));
                put(&mut jac, row, 2 * i, -2.0 * inv2 + g1);
                put(&mut jac, row, 2 * i + 1, -slope + g2 * d.d_c);
                for &(j, w) in &d.terms[..d.len] {
                    put(&mut jac, row, 2 * j, g2 * w);
                }
            }
        }

        let last = 2 * n;
        match right_rate(self.model, &self.states, cc(n), self.tau)? {
            Some((rho, _, drho)) => {
                r[last] = (3.0 * phi(n) - 4.0 * phi(n - 1) + phi(n - 2)) / (2.0 * dt) - rho * (phi(n) - e3);
                put(&mut jac, last, last, 3.0 / (2.0 * dt) - rho);
                put(&mut jac, last, last - 2, -4.0 / (2.0 * dt));
                put(&mut jac, last, last - 4, 1.0 / (2.0 * dt));
                put(&mut jac, last, last + 1, -drho * (phi(n) - e3));
            }
            None => {
                r[last] = phi(n) - e3;
                put(&mut jac, last, last, 1.0);
            }
        }

        let mid = n / 2;
        for i in 0..=n {
            let row = 2 * i + 1;
            if i < mid {
                r[row] = cc(i + 1) - cc(i);
                put(&mut jac, row, 2 * i + 3, 1.0);
                put(&mut jac, row, 2 * i + 1, -1.0);
            } else if i == mid {
                r[row] = phi(mid) - 0.5 * (e1 + e2);
                put(&mut jac, row, 2 * mid, 1.0);
            } else {
                r[row] = cc(i) - cc(i - 1);
                put(&mut jac, row, 2 * i + 1, 1.0);
                put(&mut jac, row, 2 * i - 1, -1.0);
            }
        }
        Ok(r)
    }

    fn factor(&self, x: &[f64]) -> Result<Factored> {
        let size = self.unknowns();
        let kl = 2 * (self.max_delay_nodes(x) + 3) + 2;
        let mut jac = BandMatrix::zeros(size, kl, 4);
        self.eval(x, Some(&mut jac))?;
        if kl > size / 4 {
            let lu = jac.to_dense().lu();
            return Ok(Factored::Dense(lu));
        }
        Ok(Factored::Band(jac.factor()?))
    }

    fn interior_residual(&self, r: &[f64]) -> f64 {
        (1..self.n).map(|i| r[2 * i].abs()).fold(0.0, f64::max)
    }

    fn initial_vector(&self, phi: &[f64], c: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.unknowns()];
        for i in 0..=self.n {
            x[2 * i] = phi[i];
            x[2 * i + 1] = c;
        }
        x
    }

    fn newton(&self, mut x: Vec<f64>, opts: &SolverOptions) -> Result<(Vec<f64>, usize)> {
        let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let mut r = self.eval(&x, None)?;
        for it in 0..opts.max_newton {
            if inf(&r) < opts.tol {
                return Ok((x, it));
            }
            let mut dx: Vec<f64> = r.iter().map(|v| -v).collect();
            self.factor(&x)?.solve(&mut dx)?;
            let f0 = norm2(&r);
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_BACKTRACKS {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + lambda * b).collect();
                if let Ok(rt) = self.eval(&trial, None) {
                    if rt.iter().all(|v| v.is_finite()) && norm2(&rt) <= (1.0 - 1e-4 * lambda) * f0 {
                        x = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(Error::NoFront(format!(
                    "Newton stagnated at iteration {it}: residual {:e} after {MAX_BACKTRACKS} backtracks",
                    inf(&r)
                )));
            }
            let step = lambda * inf(&dx);
            if step < 1e-14 && inf(&r) >= opts.tol {
                return Err(Error::NoFront(format!("Newton step {step:e} below 1e-14 with residual {:e}", inf(&r))));
            }
        }
        if inf(&r) < opts.tol {
            return Ok((x, opts.max_newton));
        }
        Err(Error::NoFront(format!("no convergence in {} Newton iterations (residual {:e})", opts.max_newton, inf(&r))))
    }

    fn profile(&self, x: &[f64], iterations: usize) -> Result<WaveProfile> {
        let r = self.eval(x, None)?;
        let c = x[self.n + 1];
        let mut warnings = Vec::new();
        let btol = BOUNDARY_TOL * self.states.span();
        let phi: Vec<f64> = (0..=self.n).map(|i| x[2 * i]).collect();
        if (phi[0] - self.states.e1).abs() > btol {
            warnings.push(format!("left edge is {:e} from e1; consider a larger L", (phi[0] - self.states.e1).abs()));
        }
        if (phi[self.n] - self.states.e3).abs() > btol {
            warnings.push(format!("right edge is {:e} from e3; consider a larger L", (phi[self.n] - self.states.e3).abs()));
        }
        Ok(WaveProfile {
            t: (0..=self.n).map(|i| self.time(i)).collect(),
            phi,
            c,
            tau: self.tau,
            h: c * self.tau,
            residual_inf: self.interior_residual(&r),
            model_id: self.model.name().to_string(),
            states: self.states,
            l: self.l,
            n: self.n,
            warnings,
            newton_iterations: iterations,
        })
    }
}

const MAX_BACKTRACKS: usize = 30;
/// Initial speed magnitudes tried in order by [`solve_nondelayed`].
const START_SPEEDS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 4.0];
/// Edge tolerance relative to `e3 - e1`.
pub const BOUNDARY_TOL: f64 = 1e-6;

enum Factored {
    Band(BandLu),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factored {
    fn solve(&self, b: &mut [f64]) -> Result<()> {
        match self {
            Factored::Band(lu) => {
                lu.solve_in_place(b);
                Ok(())
            }
            Factored::Dense(lu) => {
                let sol = lu
                    .solve(&DVector::from_column_slice(b))
                    .ok_or_else(|| Error::NoFront("singular Jacobian".into()))?;
                b.copy_from_slice(sol.as_slice());
                Ok(())
            }
        }
    }
}

/// Solves the undelayed problem from a logistic initial guess with speed
/// `0.1 sign(J)`, retrying faster seeds if Newton stalls.
pub fn solve_nondelayed(model: &ModelSpec, states: &SteadyStates, opts: &SolverOptions) -> Result<WaveProfile> {
    opts.validate()?;
    let p = Problem::new(model, states, 0.0, opts);
    let j = frak_j(model, states);
    let dir = if j.abs() < 1e-12 { 0.0 } else { j.signum() };
    let guess: Vec<f64> = (0..=p.n)
        .map(|i| states.e1 + states.span() / (1.0 + (-p.time(i)).exp()))
        .collect();
    // The prescribed seed first; steep reaction terms may need a faster one.
    let mut last_err = None;
    let mut solved = None;
    for seed in START_SPEEDS.iter().map(|k| k * dir).chain([0.0]) {
        match p.newton(p.initial_vector(&guess, seed), opts) {
            Ok(v) => {
                solved = Some(v);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((x, it)) = solved else {
        return Err(last_err.expect("at least one attempt"));
    };
    let mut prof = p.profile(&x, it)?;
    if j.abs() > 1e-9 && prof.c * j.signum() <= 0.0 {
        prof.warnings.push(format!("speed sign contradicts condition (I): c = {}, J = {j}", prof.c));
    }
    Ok(prof)
}

/// Solves the delayed problem at `tau`, seeded by `seed` (any grid).
pub fn solve_delayed(
    model: &ModelSpec,
    states: &SteadyStates,
    tau: f64,
    seed: &WaveProfile,
    opts: &SolverOptions,
) -> Result<WaveProfile> {
    opts.validate()?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    let p = Problem::new(model, states, tau, opts);
    let x0 = p.initial_vector(&resample(model, states, seed, &p)?, seed.c);
    let (x, it) = p.newton(x0, opts)?;
    p.profile(&x, it)
}

/// Seed values of `seed` on the grid of `p`, extended by the edge asymptotics.
fn resample(model: &ModelSpec, states: &SteadyStates, seed: &WaveProfile, p: &Problem) -> Result<Vec<f64>> {
    let rho_l = left_rate(model, states, seed.c, seed.tau)?.0;
    let rho_r = right_rate(model, states, seed.c, seed.tau)?.map(|r| r.0);
    let (e1, e3) = (states.e1, states.e3);
    let n_old = seed.n;
    Ok((0..=p.n)
        .map(|i| {
            let t = p.time(i);
            if t < -seed.l {
                e1 + (seed.phi[0] - e1) * (rho_l * (t + seed.l)).exp()
            } else if t > seed.l {
                match rho_r {
                    Some(r) => e3 + (seed.phi[n_old] - e3) * (r * (t - seed.l)).exp(),
                    None => e3,
                }
            } else {
                seed.interpolate(t)
            }
        })
        .collect())
}

/// Re-solves `profile` on a finer and/or wider grid; returns the new profile
/// and the change in speed.
pub fn refine(
    model: &ModelSpec,
    states: &SteadyStates,
    profile: &WaveProfile,
    n_new: usize,
    l_new: f64,
    tol: f64,
) -> Result<(WaveProfile, f64)> {
    if n_new < profile.n || l_new < profile.l {
        return Err(Error::InvalidParameter(format!(
            "refine needs N_new >= {} and L_new >= {}",
            profile.n, profile.l
        )));
    }
    let opts = SolverOptions { l: l_new, n: n_new, tol, ..SolverOptions::default() };
    let out = solve_delayed(model, states, profile.tau, profile, &opts)
        .map_err(|e| Error::RefinementDiverged(e.to_string()))?;
    let dc = out.c - profile.c;
    Ok((out, dc))
}

/// Continuation controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub step_init: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Successful steps before the step doubles.
    pub grow_after: usize,
    /// How far past the domain exit to keep continuing.
    pub overshoot: f64,
    pub speed_ceiling: f64,
    pub speed_floor: f64,
    pub keep_profiles: bool,
    pub solver: SolverOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            step_init: 0.05,
            step_min: 1e-5,
            step_max: 0.1,
            grow_after: 3,
            overshoot: 0.5,
            speed_ceiling: 50.0,
            speed_floor: 1e-3,
            keep_profiles: false,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTauMax,
    NewtonFailure,
    LeftDomain,
    SpeedBoundHit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationPoint {
    pub tau: f64,
    pub c: f64,
    pub monotone: bool,
    pub residual_inf: f64,
    /// Membership of `(tau, c)` in the domain of the linearization at `e3`,
    /// when that linearization has a negative delayed coefficient.
    pub in_domain: Option<bool>,
    pub tail_sign_changes: usize,
    pub profile: Option<WaveProfile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationCurve {
    pub model_id: String,
    pub points: Vec<ContinuationPoint>,
    pub termination: Termination,
    /// Last delay inside and first delay outside the domain.
    pub domain_exit: Option<(f64, f64)>,
    pub message: Option<String>,
}

impl ContinuationCurve {
    /// CSV with header `tau,c,monotone,residual`.
    pub fn to_csv(&self) -> String {
        use crate::formats::{csv, num};
        csv(
            &["tau", "c", "monotone", "residual"],
            self.points
                .iter()
                .map(|p| vec![num(p.tau), num(p.c), p.monotone.to_string(), num(p.residual_inf)]),
        )
    }

    /// Speed at `tau` by linear interpolation along the curve.
    pub fn speed_at(&self, tau: f64) -> Option<f64> {
        let pts = &self.points;
        let k = pts.windows(2).position(|w| w[0].tau <= tau && tau <= w[1].tau)?;
        let (a, b) = (&pts[k], &pts[k + 1]);
        let s = if b.tau > a.tau { (tau - a.tau) / (b.tau - a.tau) } else { 0.0 };
        Some(a.c + s * (b.c - a.c))
    }
}

/// Domain of the linearization at `e3`, when its delayed coefficient is negative.
pub fn right_domain(model: &ModelSpec, states: &SteadyStates) -> Option<DomainParams> {
    let e = states.e3;
    DomainParams::new(model.g1(e, e), model.g2(e, e)).ok()
}

/// Follows the branch from `start` (a converged undelayed profile) up to `tau_max`.
pub fn continue_in_tau(
    model: &ModelSpec,
    states: &SteadyStates,
    start: &WaveProfile,
    tau_max: f64,
    opts: &ContinuationOptions,
) -> Result<ContinuationCurve> {
    opts.solver.validate()?;
    if !(tau_max >= start.tau) {
        return Err(Error::InvalidParameter(format!("tau_max {tau_max} below the start delay {}", start.tau)));
    }
    let dom = right_domain(model, states);
    let record = |prof: &WaveProfile| -> Result<ContinuationPoint> {
        let rep = verify::verify(prof, model, states)?;
        let in_domain = match &dom {
            Some(d) if prof.c > 0.0 => Some(domain::clin(d, prof.tau)?.admits(prof.c)),
            _ => None,
        };
        Ok(ContinuationPoint {
            tau: prof.tau,
            c: prof.c,
            monotone: rep.monotone,
            residual_inf: prof.residual_inf,
            in_domain,
            tail_sign_changes: rep.tail_sign_changes,
            profile: opts.keep_profiles.then(|| prof.clone()),
        })
    };

    let mut points = vec![record(start)?];
    let curve = |points: Vec<ContinuationPoint>, termination, domain_exit, message: Option<String>| ContinuationCurve {
        model_id: model.name().to_string(),
        points,
        termination,
        domain_exit,
        message,
    };
    if let Some(t) = speed_violation(start.c, opts) {
        return Ok(curve(points, Termination::SpeedBoundHit, None, Some(t)));
    }

    let mut history: Vec<WaveProfile> = vec![start.clone()];
    let mut tau = start.tau;
    let mut step = opts.step_init;
    let mut streak = 0;
    let mut exit: Option<(f64, f64)> = None;
    let mut stop_at = tau_max;
    let mut was_inside = points[0].in_domain.unwrap_or(true);

    while tau < stop_at - 1e-12 {
        let next = (tau + step).min(stop_at);
        let seed = predict(&history, next);
        match solve_delayed(model, states, next, &seed, &opts.solver) {
            Ok(prof) => {
                let point = record(&prof)?;
                let violation = speed_violation(prof.c, opts);
                let inside = point.in_domain.unwrap_or(true);
                if was_inside && !inside && exit.is_none() {
                    exit = Some((tau, next));
                    stop_at = (next + opts.overshoot).min(tau_max);
                }
                was_inside = inside;
                points.push(point);
                tau = next;
                history.push(prof);
                if history.len() > 2 {
                    history.remove(0);
                }
                if let Some(msg) = violation {
                    return Ok(curve(points, Termination::SpeedBoundHit, exit, Some(msg)));
                }
                streak += 1;
                if streak >= opts.grow_after {
                    step = (2.0 * step).min(opts.step_max);
                    streak = 0;
                }
            }
            Err(e) => {
                step *= 0.5;
                streak = 0;
                if step < opts.step_min {
                    let term = if exit.is_some() { Termination::LeftDomain } else { Termination::NewtonFailure };
                    return Ok(curve(points, term, exit, Some(format!("at tau = {next}: {e}"))));
                }
            }
        }
    }
    let term = if exit.is_some() { Termination::LeftDomain } else { Termination::ReachedTauMax };
    Ok(curve(points, term, exit, None))
}

fn speed_violation(c: f64, opts: &ContinuationOptions) -> Option<String> {
    if c > opts.speed_ceiling {
        Some(format!("speed {c} above the ceiling {}", opts.speed_ceiling))
    } else if c < opts.speed_floor {
        Some(format!("speed {c} below the floor {}", opts.speed_floor))
    } else {
        None
    }
}

/// Secant extrapolation of the last two profiles (same grid) to `tau`.
fn predict(history: &[WaveProfile], tau: f64) -> WaveProfile {
    let last = history.last().expect("non-empty history");
    if history.len() < 2 {
        return last.clone();
    }
    let prev = &history[history.len() - 2];
    let span = last.tau - prev.tau;
    if span <= 0.0 || prev.n != last.n || prev.l != last.l {
        return last.clone();
    }
    let s = (tau - last.tau) / span;
    let mut out = last.clone();
    for (o, p) in out.phi.iter_mut().zip(&prev.phi) {
        *o += s * (*o - p);
    }
    out.c += s * (last.c - prev.c);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn nagumo() -> (ModelSpec, SteadyStates) {
        let m = ModelSpec::nagumo(0.25).unwrap();
        let s = crate::model::find_steady_states(&m).unwrap();
        (m, s)
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        for r in [-0.7, 0.0, 0.3, 1.0, 1.6] {
            let (w, dw) = lagrange4(r);
            let f = |x: f64| 2.0 - x + 0.5 * x * x - 0.25 * x * x * x;
            let df = |x: f64| -1.0 + x - 0.75 * x * x;
            let v: f64 = (0..4).map(|k| w[k] * f(k as f64 - 1.0)).sum();
            let dv: f64 = (0..4).map(|k| dw[k] * f(k as f64 - 1.0)).sum();
            assert_abs_diff_eq!(v, f(r), epsilon = 1e-13);
            assert_abs_diff_eq!(dv, df(r), epsilon = 1e-13);
        }
    }

    #[test]
    fn exact_nagumo_profile_solves_continuum_equation() {
        let c = 0.5 / 2f64.sqrt();
        let k = 1.0 / 2f64.sqrt();
        for i in 0..200 {
            let t = -20.0 + 0.2 * i as f64;
            let e = (-k * t).exp();
            let phi = 1.0 / (1.0 + e);
            let d1 = k * e / (1.0 + e).powi(2);
            let d2 = k * k * e * (e - 1.0) / (1.0 + e).powi(3);
            let res = d2 - c * d1 + phi * (1.0 - phi) * (phi - 0.25);
            assert!(res.abs() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = ModelSpec::toy_smooth(1.0 / 3.0, 0.5, -1.0, 0.1, (-0.05, 1.2)).unwrap();
        let s = crate::model::find_steady_states(&m).unwrap();
        let opts = SolverOptions { l: 10.0, n: 200, ..SolverOptions::default() };
        for tau in [0.0, 0.7, 3.0] {
            let p = Problem::new(&m, &s, tau, &opts);
            let guess: Vec<f64> = (0..=p.n).map(|i| 1.0 / (1.0 + (-0.8 * p.time(i)).exp())).collect();
            let mut x = p.initial_vector(&guess, 0.9);
            // Perturb the speeds so the c-columns are exercised off the constraint.
            for i in 0..=p.n {
                x[2 * i + 1] += 0.01 * (i as f64 * 0.1).sin();
            }
            let size = p.unknowns();
            let kl = 2 * (p.max_delay_nodes(&x) + 3) + 2;
            let mut jac = BandMatrix::zeros(size, kl, 4);
            p.eval(&x, Some(&mut jac)).unwrap();
            let r0 = p.eval(&x, None).unwrap();
            let eps = 1e-7;
            for col in (0..size).step_by(7).chain([1, size - 1]) {
                let mut xp = x.clone();
                xp[col] += eps;
                let rp = p.eval(&xp, None).unwrap();
                for row in 0..size {
                    let fd = (rp[row] - r0[row]) / eps;
                    let an = jac.get(row, col);
                    assert!(
                        (fd - an).abs() <= 2e-4 * an.abs().max(1.0),
                        "tau {tau}: J[{row}, {col}] = {an}, fd = {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn nagumo_speed() {
        let (m, s) = nagumo();
        let prof = solve_nondelayed(&m, &s, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(prof.c, 0.5 / 2f64.sqrt(), epsilon = 1e-3);
        assert!(prof.residual_inf < 1e-8);
        assert_abs_diff_eq!(prof.interpolate(0.0), 0.125, epsilon = 1e-10);
        assert!(prof.warnings.is_empty(), "{:?}", prof.warnings);
        assert!((prof.phi[0] - s.e1).abs() < 1e-6 && (prof.phi[prof.n] - s.e3).abs() < 1e-6);
    }

    #[test]
    fn symmetric_cubic_stands_still() {
        let m = ModelSpec::mackey_glass(1.0, 0.5, (-0.05, 1.2)).unwrap();
        let s = crate::model::find_steady_states(&m).unwrap();
        let prof = solve_nondelayed(&m, &s, &SolverOptions::default()).unwrap();
        assert!(prof.c.abs() < 1e-6, "c = {}", prof.c);
    }

    #[test]
    fn refine_identity_and_convergence() {
        let (m, s) = nagumo();
        let opts = SolverOptions { n: 800, ..SolverOptions::default() };
        let prof = solve_nondelayed(&m, &s, &opts).unwrap();
        let (same, dc) = refine(&m, &s, &prof, 800, 40.0, 1e-8).unwrap();
        assert!(dc.abs() < 1e-9);
        assert!(same.newton_iterations <= 1);
        let (fine, dc) = refine(&m, &s, &prof, 1600, 40.0, 1e-8).unwrap();
        assert!(dc.abs() < 1e-4);
        assert!(fine.residual_inf < 1e-8);
        assert!(refine(&m, &s, &prof, 400, 40.0, 1e-8).is_err());
    }

    #[test]
    fn tau_max_zero_gives_single_point() {
        let (m, s) = nagumo();
        let opts = ContinuationOptions { solver: SolverOptions { n: 400, ..SolverOptions::default() }, ..Default::default() };
        let prof = solve_nondelayed(&m, &s, &opts.solver).unwrap();
        let curve = continue_in_tau(&m, &s, &prof, 0.0, &opts).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.termination, Termination::ReachedTauMax);
    }

    #[test]
    fn invalid_grid_rejected() {
        let (m, s) = nagumo();
        let opts = SolverOptions { n: 201, ..SolverOptions::default() };
        assert!(solve_nondelayed(&m, &s, &opts).is_err());
    }
}
