//! Method-of-lines simulation of `u_t = u_xx + g(u(t, x), u(t - tau, x))`.
//!
//! Second-order differences in `x` with homogeneous Neumann ends and explicit
//! Euler in time. Past levels live in a ring buffer; when `tau` is not a
//! multiple of `dt` the delayed field is interpolated linearly between the two
//! stored levels that bracket `t - tau`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{frak_j, ModelSpec, SteadyStates};
use crate::numeric::linear_fit;
use crate::par::{self, Exec};
use crate::profile::WaveProfile;

#[derive(Clone, Debug, Default)]
pub enum InitialCondition {
    /// `e1` on one side, `e3` on the other, placed so the front has room to
    /// travel in the direction set by the sign of `J`.
    #[default]
    Step,
    /// A computed profile, centred at the same position as the step.
    ProfileSeed(WaveProfile),
    /// Spatially constant data.
    Constant(f64),
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub x_max: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_final: f64,
    pub tau: f64,
    pub initial: InitialCondition,
    /// Interval between front measurements.
    pub output_interval: f64,
    /// Interval between stored snapshots (`None`: final snapshot only).
    pub snapshot_interval: Option<f64>,
    pub exec: Exec,
}

impl SimConfig {
    /// Defaults on `[0, 400]` with 4001 nodes and the largest stable step.
    pub fn new(tau: f64, t_final: f64) -> Self {
        let mut cfg = Self {
            x_max: 400.0,
            nx: 4001,
            dt: 0.0,
            t_final,
            tau,
            initial: InitialCondition::Step,
            output_interval: 0.5,
            snapshot_interval: None,
            exec: Exec::default(),
        };
        cfg.dt = cfg.max_stable_dt();
        cfg
    }

    pub fn dx(&self) -> f64 {
        self.x_max / (self.nx - 1) as f64
    }

    /// `0.4 dx^2`.
    pub fn max_stable_dt(&self) -> f64 {
        0.4 * self.dx() * self.dx()
    }

    /// Number of stored levels: `ceil(tau / dt) + 1`.
    pub fn history_depth(&self) -> usize {
        (self.tau / self.dt - 1e-9).ceil().max(0.0) as usize + 1
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.nx < 3 || !(self.x_max > 0.0) {
            return bad(format!("need nx >= 3 and x_max > 0 (nx = {}, x_max = {})", self.nx, self.x_max));
        }
        if !(self.dt > 0.0) || self.dt > self.max_stable_dt() * (1.0 + 1e-12) {
            return bad(format!("dt = {} must lie in (0, 0.4 dx^2 = {}]", self.dt, self.max_stable_dt()));
        }
        if !(self.t_final > 0.0) || !(self.tau >= 0.0) || !(self.output_interval > 0.0) {
            return bad("t_final and output_interval must be positive, tau non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimResult {
    pub tau: f64,
    pub measured_speed: f64,
    /// Coefficient of determination of the speed fit.
    pub speed_r_squared: f64,
    pub front_positions: Vec<(f64, f64)>,
    pub x: Vec<f64>,
    pub final_snapshot: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub oscillation_flag: bool,
    /// Largest excess of `u` over `e3` behind the front at the final time.
    pub max_overshoot: f64,
    /// Nodes within `2 dx` of the level set where the reaction term jumps.
    pub nonsmooth_cells: Vec<usize>,
}

impl SimResult {
    /// Summary line with header `tau,measured_speed,oscillation_flag`.
    pub fn summary_csv(&self) -> String {
        use crate::formats::{csv, num};
        csv(
            &["tau", "measured_speed", "oscillation_flag"],
            [vec![num(self.tau), num(self.measured_speed), self.oscillation_flag.to_string()]],
        )
    }

    /// Snapshot CSV `x,u`.
    pub fn snapshot_csv(&self, u: &[f64]) -> String {
        use crate::formats::{csv, num};
        csv(&["x", "u"], self.x.iter().zip(u).map(|(x, u)| vec![num(*x), num(*u)]))
    }
}

/// Fraction of the run used for the speed fit.
pub const FIT_FRACTION: f64 = 0.4;
/// Overshoot above `e3` (relative to `e3 - e1`) that counts as oscillation.
pub const OSCILLATION_REL_TOL: f64 = 1e-6;

/// Linear-interpolated position of the leftmost crossing of `level`.
fn crossing(x: &[f64], u: &[f64], level: f64) -> Option<f64> {
    u.windows(2).position(|w| (w[0] - level) * (w[1] - level) <= 0.0 && w[0] != w[1]).map(|k| {
        let s = (level - u[k]) / (u[k + 1] - u[k]);
        x[k] + s * (x[k + 1] - x[k])
    })
}

fn initial_field(cfg: &SimConfig, states: &SteadyStates, x: &[f64], forward: bool) -> Vec<f64> {
    let x0 = if forward { 0.75 * cfg.x_max } else { 0.25 * cfg.x_max };
    match &cfg.initial {
        InitialCondition::Step => x.iter().map(|&xi| if xi < x0 { states.e1 } else { states.e3 }).collect(),
        InitialCondition::Constant(v) => vec![*v; x.len()],
        InitialCondition::ProfileSeed(p) => x
            .iter()
            .map(|&xi| {
                let t = xi - x0;
                if t <= p.t[0] {
                    p.phi[0]
                } else if t >= p.t[p.n] {
                    p.phi[p.n]
                } else {
                    p.interpolate(t)
                }
            })
            .collect(),
    }
}

pub fn simulate(model: &ModelSpec, states: &SteadyStates, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let nx = cfg.nx;
    let dx = cfg.dx();
    let dt = cfg.dt;
    let x: Vec<f64> = (0..nx).map(|i| i as f64 * dx).collect();
    let forward = frak_j(model, states) >= 0.0;
    let level = 0.5 * (states.e1 + states.e3);
    let margin = 10.0 * dx;

    let lag = cfg.tau / dt;
    let lag_steps = lag.floor() as usize;
    let frac = lag - lag_steps as f64;
    let interpolate_lag = frac > 1e-9 && cfg.tau > 0.0;
    let depth = cfg.history_depth() + 1;

    let u0 = initial_field(cfg, states, &x, forward);
    let mut ring: Vec<Vec<f64>> = vec![u0; depth];
    let mut head = 0usize;
    let mut delayed = vec![0.0; nx];
    let mut next = vec![0.0; nx];

    let steps = (cfg.t_final / dt).round() as usize;
    let out_every = ((cfg.output_interval / dt).round() as usize).max(1);
    let snap_every = cfg.snapshot_interval.map(|s| ((s / dt).round() as usize).max(1));
    let mut positions = Vec::new();
    let mut snapshots = Vec::new();
    let r = dt / (dx * dx);

    let record = |t: f64, u: &[f64], positions: &mut Vec<(f64, f64)>| -> Result<()> {
        if let Some(xf) = crossing(&x, u, level) {
            if xf < margin || xf > cfg.x_max - margin {
                return Err(Error::DomainTooSmall { t, margin });
            }
            positions.push((t, xf));
        }
        Ok(())
    };
    record(0.0, &ring[head], &mut positions)?;
    if snap_every.is_some() {
        snapshots.push((0.0, ring[head].clone()));
    }

    for step in 1..=steps {
        let cur = &ring[head];
        let slot = |k: usize| &ring[(head + depth - (k % depth)) % depth];
        let lagged: &[f64] = if cfg.tau == 0.0 {
            cur
        } else if interpolate_lag {
            let (a, b) = (slot(lag_steps), slot(lag_steps + 1));
            par::fill(cfg.exec, &mut delayed, |i| (1.0 - frac) * a[i] + frac * b[i]);
            &delayed
        } else {
            slot(lag_steps)
        };
        par::fill(cfg.exec, &mut next, |i| {
            let left = if i == 0 { cur[1] } else { cur[i - 1] };
            let right = if i + 1 == nx { cur[nx - 2] } else { cur[i + 1] };
            cur[i] + r * (left - 2.0 * cur[i] + right) + dt * model.g(cur[i], lagged[i])
        });
        let t = step as f64 * dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(t));
        }
        head = (head + 1) % depth;
        std::mem::swap(&mut ring[head], &mut next);
        if step % out_every == 0 || step == steps {
            record(t, &ring[head], &mut positions)?;
        }
        if let Some(k) = snap_every {
            if step % k == 0 {
                snapshots.push((t, ring[head].clone()));
            }
        }
    }

    let final_snapshot = ring[head].clone();
    let t_end = steps as f64 * dt;
    let fit: Vec<&(f64, f64)> = positions.iter().filter(|(t, _)| *t >= (1.0 - FIT_FRACTION) * t_end).collect();
    let (ts, xs): (Vec<f64>, Vec<f64>) = fit.iter().map(|(t, x)| (*t, *x)).unzip();
    let (measured_speed, speed_r_squared) = match linear_fit(&ts, &xs) {
        Some((slope, _, r2)) => (-slope, r2),
        None => (f64::NAN, f64::NAN),
    };

    // The e3 state always sits to the right of the front.
    let xf = crossing(&x, &final_snapshot, level).unwrap_or(f64::NEG_INFINITY);
    let max_overshoot = x
        .iter()
        .zip(&final_snapshot)
        .filter(|(xi, _)| **xi > xf)
        .map(|(_, u)| u - states.e3)
        .fold(f64::NEG_INFINITY, f64::max);
    let oscillation_flag = max_overshoot > OSCILLATION_REL_TOL * states.span();

    let nonsmooth_cells = match model.toy_parameters() {
        Some((kappa, _, _, 0.0)) => final_snapshot
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[0] - kappa) * (w[1] - kappa) <= 0.0)
            .flat_map(|(k, _)| k.saturating_sub(1)..=(k + 2).min(nx - 1))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect(),
        _ => Vec::new(),
    };

    Ok(SimResult {
        tau: cfg.tau,
        measured_speed,
        speed_r_squared,
        front_positions: positions,
        x,
        final_snapshot,
        snapshots,
        oscillation_flag,
        max_overshoot,
        nonsmooth_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::find_steady_states;

    fn nagumo() -> (ModelSpec, SteadyStates) {
        let m = ModelSpec::nagumo(0.25).unwrap();
        let s = find_steady_states(&m).unwrap();
        (m, s)
    }

    #[test]
    fn equilibrium_is_fixed() {
        let (m, s) = nagumo();
        let mut cfg = SimConfig::new(0.7, 5.0);
        cfg.nx = 401;
        cfg.x_max = 40.0;
        cfg.dt = cfg.max_stable_dt();
        cfg.initial = InitialCondition::Constant(s.e3);
        let res = simulate(&m, &s, &cfg).unwrap();
        assert!(res.final_snapshot.iter().all(|u| (u - s.e3).abs() < 1e-12));
    }

    #[test]
    fn unstable_step_rejected() {
        let (m, s) = nagumo();
        let mut cfg = SimConfig::new(0.0, 1.0);
        cfg.dt = 0.5 * cfg.dx() * cfg.dx();
        assert!(matches!(simulate(&m, &s, &cfg), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn history_depth_counts_levels() {
        let mut cfg = SimConfig::new(1.0, 1.0);
        cfg.dt = 0.25;
        assert_eq!(cfg.history_depth(), 5);
        cfg.dt = 0.3;
        assert_eq!(cfg.history_depth(), 5);
        cfg.tau = 0.0;
        assert_eq!(cfg.history_depth(), 1);
    }

    #[test]
    fn nagumo_speed_matches_formula() {
        let (m, s) = nagumo();
        let mut cfg = SimConfig::new(0.0, 60.0);
        cfg.x_max = 100.0;
        cfg.nx = 1001;
        cfg.dt = cfg.max_stable_dt();
        let res = simulate(&m, &s, &cfg).unwrap();
        let exact = 0.5 / 2f64.sqrt();
        assert!((res.measured_speed - exact).abs() < 0.02 * exact, "{}", res.measured_speed);
        assert!(!res.oscillation_flag);
        assert!(res.speed_r_squared > 0.999);
    }

    #[test]
    fn small_domain_reported() {
        let (m, s) = nagumo();
        let mut cfg = SimConfig::new(0.0, 200.0);
        cfg.x_max = 30.0;
        cfg.nx = 301;
        cfg.dt = cfg.max_stable_dt();
        assert!(matches!(simulate(&m, &s, &cfg), Err(Error::DomainTooSmall { .. })));
    }

    #[test]
    fn crossing_interpolates() {
        let x = [0.0, 1.0, 2.0];
        assert_eq!(crossing(&x, &[0.0, 0.25, 1.0], 0.5), Some(1.0 + 1.0 / 3.0));
        assert_eq!(crossing(&x, &[0.0, 0.1, 0.2], 0.5), None);
    }
}
