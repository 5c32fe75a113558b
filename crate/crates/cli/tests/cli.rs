use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_delayfront"));
    cmd.env_remove("DELAYFRONT_OUT");
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn model(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models").join(name).display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Value of `key = value` in the command's stdout.
fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

#[test]
fn roots_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["roots", "--a", "-1", "--b", "-1", "--c", "1", "--h", "0"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let roots: Vec<f64> = report["real_roots"].as_array().unwrap().iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert_eq!(roots.len(), 2);
    assert!((roots[0] + 1.0).abs() < 1e-12 && (roots[1] - 2.0).abs() < 1e-12);
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none(), "no files without --out");
}

#[test]
fn roots_dominant_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["roots", "--a", "-1", "--b", "-1", "--c", "0.5", "--h", "0.5", "--window=-20,5,100", "--out", "r.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("r.json"));
    let lam = report["dominant_real"].as_f64().unwrap();
    assert!(lam > 0.0);
    let chi = lam * lam - 0.5 * lam - 1.0 - (-0.5 * lam).exp();
    assert!(chi.abs() < 1e-10);
    let manifest = read_json(&dir.path().join("r.manifest.json"));
    assert_eq!(manifest["command"], "roots");
    assert_eq!(manifest["parameters"]["h"], 0.5);
}

#[test]
fn roots_missing_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["roots", "--a", "-1", "--b", "-1", "--h", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = run_in(dir.path(), &["roots", "--a", "-1", "--b", "-1", "--c", "1", "--h", "0", "--window", "1,2"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn domain_curve_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["domain", "--a", "-1", "--b", "-1", "--tau-max", "6", "--points", "200", "--out", "d.csv", "--gnuplot"],
    );
    assert_eq!(code(&out), 0);
    let (header, rows) = csv_rows(&dir.path().join("d.csv"));
    assert_eq!(header, "tau,clin");
    assert_eq!(rows.len(), 200);
    let k = rows.iter().position(|r| r[1] != "inf").unwrap();
    assert!(k > 0);
    assert!(rows[k..].iter().all(|r| r[1] != "inf"));
    let clin: Vec<f64> = rows[k..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(clin.windows(2).all(|w| w[1] < w[0]));

    let manifest = read_json(&dir.path().join("d.manifest.json"));
    let tau_sharp = manifest["summary"]["tau_sharp"].as_f64().unwrap();
    assert!((tau_sharp - 0.2785).abs() < 1e-4);
    assert!((manifest["summary"]["theta"].as_f64().unwrap() - 0.69486).abs() < 1e-4);
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["d.csv", "d.gp"]);
    assert!(manifest["wall_time"].as_f64().unwrap() >= 0.0);
    assert!(fs::read_to_string(dir.path().join("d.gp")).unwrap().contains("'d.csv' using 1:2"));
}

#[test]
fn domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["domain", "--a", "-1", "--b", "-1", "--tau-max", "0.1", "--out", "d.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("entire range has clin = inf"));

    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = run_in(dir.path(), &["domain", "--a", "-1", "--b", "-1", "--tau-max", "6", "--out", "blocker/d.csv"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("results");
    let out = bin()
        .current_dir(dir.path())
        .env("DELAYFRONT_OUT", &target)
        .args(["domain", "--a", "-1", "--b", "-1", "--tau-max", "2"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(target.join("domain.csv").exists());
    assert!(target.join("domain.manifest.json").exists());
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (jobs, name) in [("1", "a"), ("2", "b")] {
        let out = run_in(
            dir.path(),
            &["--jobs", jobs, "domain", "--a", "-1", "--b", "-0.5", "--tau-max", "8", "--out", &format!("{name}.csv")],
        );
        assert_eq!(code(&out), 0);
        let out = run_in(
            dir.path(),
            &["--jobs", jobs, "toy", "--kappa", "0.3", "--p", "0.4", "--q", "-2", "--tau-grid", "0:3:0.25", "--out", &format!("t{name}.csv")],
        );
        assert_eq!(code(&out), 0);
    }
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("ta.csv"), read("tb.csv"));
}

#[test]
fn toy_figure2_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["toy", "--kappa", "0.3333333", "--p", "0.5", "--q", "-1", "--tau-grid", "0:6:0.05", "--profile-out", "p.csv"],
    );
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("branch = positive"));
    let exit = field(&text, "domain_exit_tau");
    assert!((exit - 4.1103).abs() < 1e-3, "exit tau {exit}");
    let (header, rows) = csv_rows(&dir.path().join("toy_curve.csv"));
    assert_eq!(header, "tau,c,monotone");
    assert_eq!(rows.len(), 121);
    let c0: f64 = rows[0][1].parse().unwrap();
    assert!((c0 - 1.44338).abs() < 1e-4);
    let (header, prof) = csv_rows(&dir.path().join("p.csv"));
    assert_eq!(header, "t,phi");
    let phi: Vec<f64> = prof.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(phi.windows(2).all(|w| w[1] >= w[0]));
    assert!(phi[0] < 1e-6 && phi[phi.len() - 1] > 1.0 - 1e-9);
}

#[test]
fn toy_figure3_negative_branch() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["toy", "--kappa", "0.9", "--p", "0.5", "--q", "-1", "--tau-grid", "0:10:0.5"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("branch = negative"));
    let (_, rows) = csv_rows(&dir.path().join("toy_curve.csv"));
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() < 0.0 && r[2] == "true"));
}

#[test]
fn toy_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["toy", "--kappa", "0.3", "--p", "0.5", "--q", "0.5", "--tau", "1"]);
    assert_eq!(code(&out), 2);
    let out = run_in(dir.path(), &["toy", "--kappa", "0.3", "--p", "0.5", "--q", "-1"]);
    assert_eq!(code(&out), 2);
    // k* = kappa (1 + sqrt((1 - p) / (1 - q))) = 1.5 kappa.
    let kappa = format!("{}", 2.0 / 3.0);
    let out = run_in(dir.path(), &["toy", "--kappa", &kappa, "--p", "0.5", "--q", "-1", "--tau", "1"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate branch"));
}

#[test]
fn front_nagumo() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["front", "--model", &model("nagumo.cfg"), "--tau", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("front.report.json"));
    assert!((report["c"].as_f64().unwrap() - 0.35355).abs() < 1e-4);
    assert_eq!(report["verify"]["monotone"], true);
    let (header, rows) = csv_rows(&dir.path().join("front.csv"));
    assert_eq!(header, "t,phi");
    assert_eq!(rows.len(), 2001);
    assert!(dir.path().join("front.manifest.json").exists());
}

#[test]
fn front_negative_speed_is_reported_unreflected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.cfg"), "kind = nagumo\nalpha = 0.7\nn = 1000\n").unwrap();
    let out = run_in(dir.path(), &["front", "--model", "m.cfg", "--tau", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("front.report.json"));
    assert_eq!(report["reflected"], true);
    assert!((report["c"].as_f64().unwrap() + 0.4 / 2f64.sqrt()).abs() < 1e-4);
    let (_, rows) = csv_rows(&dir.path().join("front.csv"));
    assert_eq!(rows.len(), 1001);
    let first: f64 = rows[0][1].parse().unwrap();
    let last: f64 = rows[1000][1].parse().unwrap();
    assert!(first < 1e-6 && last > 1.0 - 1e-6);
}

#[test]
fn model_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["front", "--model", "missing.cfg"]);
    assert_eq!(code(&out), 3);

    fs::write(dir.path().join("bad.cfg"), "kind = nagumo\nalpha = x\n").unwrap();
    let out = run_in(dir.path(), &["front", "--model", "bad.cfg"]);
    assert_eq!(code(&out), 2);

    fs::write(dir.path().join("mono.cfg"), "kind = virus\namplitude = 0.1\ncenter = 0.25\nwidth = 8\n").unwrap();
    let out = run_in(dir.path(), &["front", "--model", "mono.cfg"]);
    assert_eq!(code(&out), 4);
    let out = run_in(dir.path(), &["simulate", "--model", "mono.cfg"]);
    assert_eq!(code(&out), 4);

    fs::write(dir.path().join("tight.cfg"), "kind = nagumo\nmax_newton = 1\n").unwrap();
    let out = run_in(dir.path(), &["front", "--model", "tight.cfg"]);
    assert_eq!(code(&out), 5);
}

fn sweep_toysmooth(dir: &Path) -> Vec<(f64, f64, bool)> {
    let out = run_in(dir, &["sweep", "--model", &model("toysmooth.cfg"), "--tau-max", "6", "--gnuplot"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("termination = left_domain"));
    let (header, rows) = csv_rows(&dir.join("sweep.csv"));
    assert_eq!(header, "tau,c,monotone,residual");
    rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2] == "true")).collect()
}

#[test]
fn sweep_then_simulate_toysmooth() {
    let dir = tempfile::tempdir().unwrap();
    let curve = sweep_toysmooth(dir.path());
    let flip = curve.iter().position(|p| !p.2).expect("monotone flag flips");
    assert!(curve[..flip].iter().all(|p| p.2));
    assert!((3.5..5.0).contains(&curve[flip].0), "flip at {}", curve[flip].0);
    assert!(curve.windows(2).all(|w| w[1].0 > w[0].0));

    let k = curve.windows(2).position(|w| w[0].0 <= 1.0 && 1.0 <= w[1].0).expect("tau = 1 covered");
    let (a, b) = (curve[k], curve[k + 1]);
    let c1 = a.1 + (1.0 - a.0) / (b.0 - a.0) * (b.1 - a.1);
    let out = run_in(dir.path(), &["simulate", "--model", &model("toysmooth.cfg"), "--tau", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let measured = field(&stdout(&out), "measured_speed");
    assert!(((measured - c1) / c1).abs() < 0.02, "pde {measured} vs sweep {c1}");
    let (header, _) = csv_rows(&dir.path().join("sim_summary.csv"));
    assert_eq!(header, "tau,measured_speed,oscillation_flag");
    let manifest = read_json(&dir.path().join("sim_summary.manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}
