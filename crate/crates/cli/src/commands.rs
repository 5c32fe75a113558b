use std::fs;
use std::path::{Path, PathBuf};

use delayfront::domain::{self, DomainParams};
use delayfront::model::{check_hypotheses, find_steady_states, parse_config, transform_reflect, ModelSpec, SteadyStates};
use delayfront::pde::{self, SimConfig};
use delayfront::profile::{
    continue_in_tau, solve_nondelayed, ContinuationCurve, ContinuationOptions, SolverOptions, Termination, WaveProfile,
};
use delayfront::quasipoly::{self, CharParams, Rect};
use delayfront::toy::{self, Branch, ToyParams};
use delayfront::verify::{verify, VerifyReport};
use delayfront::Exec;
use serde::Serialize;

use crate::output::{gnuplot_script, CmdResult, Exit, Failure, Run};
use crate::{DomainArgs, FrontArgs, RootsArgs, SimulateArgs, SolverArgs, SweepArgs, ToyArgs};

pub struct Context {
    pub out_dir: PathBuf,
    pub exec: Exec,
}

pub fn roots(ctx: &Context, args: RootsArgs) -> CmdResult<Exit> {
    let params = CharParams::new(args.a, args.b, args.c, args.h)?;
    let window = args.window.as_deref().map(parse_window).transpose()?;
    let report = quasipoly::root_report(&params, window)?;
    let text = serde_json::to_string_pretty(&report).expect("serializable report");
    println!("{text}");
    if let Some(out) = &args.out {
        let mut run = Run::new("roots", ctx.out_dir.clone());
        run.param("a", args.a);
        run.param("b", args.b);
        run.param("c", args.c);
        run.param("h", args.h);
        run.param("window", &args.window);
        run.write(out, &format!("{text}\n"))?;
        run.finish(out)?;
    }
    Ok(Exit::Ok)
}

fn parse_window(s: &str) -> CmdResult<Rect> {
    let v = parse_floats(s, ',', 3, "--window")?;
    Ok(Rect::new(v[0], v[1], v[2]))
}

fn parse_floats(s: &str, sep: char, count: usize, flag: &str) -> CmdResult<Vec<f64>> {
    let v: Vec<f64> = s
        .split(sep)
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::usage(format!("{flag}: not a number in {s:?}")))?;
    if v.len() != count {
        return Err(Failure::usage(format!("{flag}: expected {count} values separated by '{sep}', got {s:?}")));
    }
    Ok(v)
}

/// Parses `lo:hi:step` into an inclusive grid without accumulating rounding.
fn parse_grid(s: &str, flag: &str) -> CmdResult<Vec<f64>> {
    let v = parse_floats(s, ':', 3, flag)?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Failure::usage(format!("{flag}: need lo <= hi and step > 0, got {s:?}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(Failure::usage(format!("{flag}: too many points in {s:?}")));
    }
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

pub fn domain(ctx: &Context, args: DomainArgs) -> CmdResult<Exit> {
    let params = DomainParams::new(args.a, args.b)?;
    if args.points < 2 {
        return Err(Failure::usage("--points must be at least 2"));
    }
    let mut run = Run::new("domain", ctx.out_dir.clone());
    run.param("a", args.a);
    run.param("b", args.b);
    run.param("tau_max", args.tau_max);
    run.param("points", args.points);

    let curve = domain::trace_boundary_with(ctx.exec, &params, args.tau_max, args.points)?;
    let tau_sharp = domain::tau_sharp(&params);
    let (omega, theta) = domain::theta(&params);
    run.summary("tau_sharp", tau_sharp);
    run.summary("omega", omega);
    run.summary("theta", theta);

    let out = run.path(args.out.as_deref(), "domain.csv");
    run.write(&out, &curve.to_csv())?;
    if args.gnuplot {
        let title = format!("clin(tau) for a = {}, b = {}", args.a, args.b);
        let script = gnuplot_script(&title, "tau", "clin", &[(&out, "1:2", "lines")]);
        run.write(&out.with_extension("gp"), &script)?;
    }
    run.finish(&out)?;
    println!("tau_sharp = {tau_sharp}");
    println!("omega = {omega}");
    println!("theta = {theta}");
    println!("wrote {}", out.display());
    Ok(Exit::Ok)
}

pub fn toy(ctx: &Context, args: ToyArgs) -> CmdResult<Exit> {
    let params = ToyParams::new(args.kappa, args.p, args.q)?;
    let ks = toy::k_star(&params);
    if (ks - 1.0).abs() <= 1e-9 {
        return Err(Failure::new(Exit::Model, format!("degenerate branch: k* = {ks}")));
    }
    let taus = match (&args.tau_grid, args.tau) {
        (Some(g), _) => parse_grid(g, "--tau-grid")?,
        (None, Some(t)) => vec![t],
        (None, None) => return Err(Failure::usage("one of --tau-grid or --tau is required")),
    };
    if taus.iter().any(|t| *t < 0.0) {
        return Err(Failure::usage("delays must be non-negative"));
    }

    let mut run = Run::new("toy", ctx.out_dir.clone());
    run.param("kappa", args.kappa);
    run.param("p", args.p);
    run.param("q", args.q);
    run.param("tau_grid", &args.tau_grid);
    run.param("tau", args.tau);

    let curve = toy::speed_curve_with(ctx.exec, &params, &taus)?;
    let branch = curve.branch;
    run.summary("branch", branch);
    run.summary("k_star", ks);
    println!("branch = {}", if branch == Branch::Positive { "positive" } else { "negative" });
    println!("k_star = {ks}");

    if let Some((inside, outside)) = curve.exit_interval() {
        let exit = toy::domain_exit_tau(&params, inside, outside)?;
        run.summary("domain_exit_tau", exit);
        println!("domain_exit_tau = {exit}");
    } else if branch == Branch::Positive {
        let monotone = curve.points.iter().all(|r| r.monotone);
        println!("domain exit: none on the grid ({})", if monotone { "monotone throughout" } else { "outside throughout" });
    }

    let out = run.path(args.out.as_deref(), "toy_curve.csv");
    run.write(&out, &curve.to_csv())?;
    if let Some(prof_out) = &args.profile_out {
        if branch != Branch::Positive {
            return Err(Failure::usage("--profile-out needs the positive-speed branch"));
        }
        let grid = parse_grid(&args.profile_grid, "--profile-grid")?;
        let prof = toy::profile_positive(&params, taus[0], &grid)?;
        run.param("profile_tau", taus[0]);
        run.param("profile_grid", &args.profile_grid);
        run.write(prof_out, &prof.to_csv())?;
    }
    if args.gnuplot {
        let script = gnuplot_script("toy model speed", "tau", "c", &[(&out, "1:2", "linespoints")]);
        run.write(&out.with_extension("gp"), &script)?;
    }
    run.finish(&out)?;
    println!("wrote {}", out.display());
    Ok(Exit::Ok)
}

/// A model ready for the collocation solver, possibly reflected so that the
/// undelayed speed is non-negative.
struct Prepared {
    model: ModelSpec,
    states: SteadyStates,
    original_states: SteadyStates,
    reflected: bool,
    start: WaveProfile,
    solver: SolverOptions,
}

fn load_model(path: &Path, solver_args: Option<&SolverArgs>) -> CmdResult<(ModelSpec, SolverOptions)> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(Exit::Io, format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut solver = SolverOptions::default();
    for (key, value) in &cfg.extra {
        let bad = || Failure::usage(format!("{}: {key}: not a valid value: {value}", path.display()));
        match key.to_ascii_lowercase().as_str() {
            "l" => solver.l = value.parse().map_err(|_| bad())?,
            "n" => solver.n = value.parse().map_err(|_| bad())?,
            "tol" => solver.tol = value.parse().map_err(|_| bad())?,
            "max_newton" => solver.max_newton = value.parse().map_err(|_| bad())?,
            _ => return Err(Failure::usage(format!("{}: unknown key {key}", path.display()))),
        }
    }
    if let Some(a) = solver_args {
        solver.l = a.l.unwrap_or(solver.l);
        solver.n = a.n.unwrap_or(solver.n);
        solver.tol = a.tol.unwrap_or(solver.tol);
        solver.max_newton = a.max_newton.unwrap_or(solver.max_newton);
    }
    Ok((cfg.model, solver))
}

fn prepare(run: &mut Run, model_path: &Path, solver_args: &SolverArgs) -> CmdResult<Prepared> {
    let (model, solver) = load_model(model_path, Some(solver_args))?;
    run.param("model", model_path.display().to_string());
    run.param("model_name", model.name());
    run.param("l", solver.l);
    run.param("n", solver.n);
    run.param("tol", solver.tol);
    run.param("max_newton", solver.max_newton);

    let states = find_steady_states(&model)?;
    let hyp = check_hypotheses(&model, &states);
    if !hyp.b_ok {
        let report = serde_json::to_string_pretty(&hyp).expect("serializable report");
        println!("{report}");
        return Err(Failure::new(Exit::Model, "model fails hypothesis (B)"));
    }
    for note in &hyp.failure_notes {
        eprintln!("warning: {note}");
    }
    run.summary("hypotheses", &hyp);

    let start = solve_nondelayed(&model, &states, &solver)?;
    if start.c >= 0.0 {
        return Ok(Prepared { model, states, original_states: states, reflected: false, start, solver });
    }
    let (rmodel, rstates) = transform_reflect(&model, &states);
    let start = solve_nondelayed(&rmodel, &rstates, &solver)?;
    Ok(Prepared { model: rmodel, states: rstates, original_states: states, reflected: true, start, solver })
}

/// Continues from the undelayed front to exactly `tau_max`.
fn continuation(prep: &Prepared, tau_max: f64, mut opts: ContinuationOptions) -> CmdResult<ContinuationCurve> {
    opts.solver = prep.solver.clone();
    if tau_max <= 0.0 {
        return Ok(ContinuationCurve {
            model_id: prep.start.model_id.clone(),
            points: Vec::new(),
            termination: Termination::ReachedTauMax,
            domain_exit: None,
            message: None,
        });
    }
    Ok(continue_in_tau(&prep.model, &prep.states, &prep.start, tau_max, &opts)?)
}

/// Maps a front of the reflected model back: `t -> -t`, `u -> e1 + e3 - u`.
fn unreflect(prof: &WaveProfile, states: &SteadyStates) -> WaveProfile {
    let s = states.e1 + states.e3;
    let mut out = prof.clone();
    out.t = prof.t.iter().rev().map(|t| -t).collect();
    out.phi = prof.phi.iter().rev().map(|p| s - p).collect();
    out.c = -prof.c;
    out.h = -prof.h;
    out.states = *states;
    out
}

#[derive(Serialize)]
struct FrontReport<'a> {
    model: &'a str,
    tau: f64,
    c: f64,
    reflected: bool,
    residual_inf: f64,
    newton_iterations: usize,
    warnings: &'a [String],
    verify: &'a VerifyReport,
}

pub fn front(ctx: &Context, args: FrontArgs) -> CmdResult<Exit> {
    if !(args.tau >= 0.0) {
        return Err(Failure::usage("--tau must be non-negative"));
    }
    let mut run = Run::new("front", ctx.out_dir.clone());
    run.param("tau", args.tau);
    let prep = prepare(&mut run, &args.model, &args.solver)?;

    let prof = if args.tau == 0.0 {
        prep.start.clone()
    } else {
        let opts = ContinuationOptions { keep_profiles: true, overshoot: f64::INFINITY, ..Default::default() };
        let curve = continuation(&prep, args.tau, opts)?;
        if curve.termination != Termination::ReachedTauMax {
            let reached = curve.points.last().map_or(0.0, |p| p.tau);
            let why = curve.message.unwrap_or_default();
            return Err(Failure::new(
                Exit::Solver,
                format!("continuation stopped at tau = {reached} ({:?}): {why}", curve.termination),
            ));
        }
        curve.points.into_iter().last().and_then(|p| p.profile).expect("profiles kept")
    };
    let report = verify(&prof, &prep.model, &prep.states)?;
    let shown = if prep.reflected { unreflect(&prof, &prep.original_states) } else { prof.clone() };

    let out = run.path(args.out.as_deref(), "front.csv");
    let report_path = args.report.clone().unwrap_or_else(|| {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("front");
        out.with_file_name(format!("{stem}.report.json"))
    });
    run.write(&out, &shown.to_csv())?;
    let fr = FrontReport {
        model: prep.model.name(),
        tau: shown.tau,
        c: shown.c,
        reflected: prep.reflected,
        residual_inf: shown.residual_inf,
        newton_iterations: shown.newton_iterations,
        warnings: &shown.warnings,
        verify: &report,
    };
    run.write_json(&report_path, &fr)?;
    run.summary("c", shown.c);
    run.summary("monotone", report.monotone);
    run.finish(&out)?;

    println!("c = {}", shown.c);
    println!("monotone = {}", report.monotone);
    println!("residual = {:e}", report.residual_inf);
    println!("wrote {}", out.display());
    Ok(Exit::Ok)
}

pub fn sweep(ctx: &Context, args: SweepArgs) -> CmdResult<Exit> {
    if !(args.tau_max > 0.0) {
        return Err(Failure::usage("--tau-max must be positive"));
    }
    let mut run = Run::new("sweep", ctx.out_dir.clone());
    run.param("tau_max", args.tau_max);
    run.param("step", args.step);
    run.param("step_max", args.step_max);
    run.param("overshoot", args.overshoot);
    let prep = prepare(&mut run, &args.model, &args.solver)?;

    let opts = ContinuationOptions {
        step_init: args.step,
        step_max: args.step_max.max(args.step),
        overshoot: args.overshoot,
        ..Default::default()
    };
    let mut curve = continuation(&prep, args.tau_max, opts)?;
    if prep.reflected {
        for p in &mut curve.points {
            p.c = -p.c;
        }
    }
    run.summary("reflected", prep.reflected);
    run.summary("termination", curve.termination);
    run.summary("domain_exit", curve.domain_exit);

    let out = run.path(args.out.as_deref(), "sweep.csv");
    run.write(&out, &curve.to_csv())?;
    if args.gnuplot {
        let script = gnuplot_script("wave speed", "tau", "c", &[(&out, "1:2", "linespoints")]);
        run.write(&out.with_extension("gp"), &script)?;
    }
    run.finish(&out)?;

    let last = curve.points.last().map_or(0.0, |p| p.tau);
    println!("termination = {}", serde_json::to_string(&curve.termination).expect("enum").trim_matches('"'));
    println!("tau_reached = {last}");
    if let Some((inside, outside)) = curve.domain_exit {
        println!("domain_exit = [{inside}, {outside}]");
    }
    if let Some(msg) = &curve.message {
        println!("message = {msg}");
    }
    println!("wrote {}", out.display());
    Ok(match curve.termination {
        Termination::ReachedTauMax | Termination::LeftDomain => Exit::Ok,
        Termination::NewtonFailure | Termination::SpeedBoundHit => {
            eprintln!("error: continuation stopped early at tau = {last}");
            Exit::Solver
        }
    })
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> CmdResult<Exit> {
    let (model, _) = load_model(&args.model, None)?;
    let states = find_steady_states(&model)?;
    let hyp = check_hypotheses(&model, &states);
    if !hyp.b_ok {
        println!("{}", serde_json::to_string_pretty(&hyp).expect("serializable report"));
        return Err(Failure::new(Exit::Model, "model fails hypothesis (B)"));
    }

    let mut cfg = SimConfig::new(args.tau, args.t_final);
    cfg.x_max = args.x_max;
    cfg.nx = args.nx;
    cfg.dt = args.dt.unwrap_or_else(|| cfg.max_stable_dt());
    cfg.snapshot_interval = args.snapshot_interval;
    cfg.exec = ctx.exec;

    let mut run = Run::new("simulate", ctx.out_dir.clone());
    run.param("model", args.model.display().to_string());
    run.param("model_name", model.name());
    run.param("tau", args.tau);
    run.param("t_final", args.t_final);
    run.param("x_max", cfg.x_max);
    run.param("nx", cfg.nx);
    run.param("dt", cfg.dt);
    run.param("snapshot_interval", args.snapshot_interval);

    let res = pde::simulate(&model, &states, &cfg)?;
    run.summary("measured_speed", res.measured_speed);
    run.summary("speed_r_squared", res.speed_r_squared);
    run.summary("oscillation_flag", res.oscillation_flag);
    run.summary("max_overshoot", res.max_overshoot);

    let p = &args.prefix;
    let summary = ctx.out_dir.join(format!("{p}_summary.csv"));
    run.write(&summary, &res.summary_csv())?;
    let final_path = ctx.out_dir.join(format!("{p}_final.csv"));
    run.write(&final_path, &res.snapshot_csv(&res.final_snapshot))?;
    let fronts = delayfront::formats::csv(
        &["t", "x"],
        res.front_positions.iter().map(|(t, x)| vec![delayfront::formats::num(*t), delayfront::formats::num(*x)]),
    );
    run.write(&ctx.out_dir.join(format!("{p}_fronts.csv")), &fronts)?;
    let mut snap_paths = Vec::new();
    for (k, (t, u)) in res.snapshots.iter().enumerate() {
        let path = ctx.out_dir.join(format!("{p}_snapshot_{k:04}.csv"));
        run.write(&path, &res.snapshot_csv(u))?;
        snap_paths.push((path, *t));
    }
    if args.gnuplot {
        let mut series: Vec<(&Path, &str, &str)> = snap_paths.iter().map(|(path, _)| (path.as_path(), "1:2", "lines")).collect();
        series.push((&final_path, "1:2", "lines"));
        let script = gnuplot_script("solution snapshots", "x", "u", &series);
        run.write(&ctx.out_dir.join(format!("{p}.gp")), &script)?;
    }
    run.finish(&summary)?;

    println!("measured_speed = {}", res.measured_speed);
    println!("oscillation_flag = {}", res.oscillation_flag);
    println!("wrote {}", summary.display());
    Ok(Exit::Ok)
}
