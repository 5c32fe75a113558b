use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use delayfront::Error;
use serde::Serialize;
use serde_json::Value;

pub const OUT_DIR_ENV: &str = "DELAYFRONT_OUT";

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 2,
    Io = 3,
    Model = 4,
    Solver = 5,
}

/// A failed run: the exit code plus a message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self { exit, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Exit::Usage, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match &e {
            Error::InvalidParameter(_)
            | Error::NoPositiveRoot(_)
            | Error::IllPosedWindow(_)
            | Error::AllInfinite { .. }
            | Error::Config(_) => Exit::Usage,
            Error::Io(_) => Exit::Io,
            Error::NotBistable { .. }
            | Error::HypothesisB(_)
            | Error::PositiveBranchAbsent(_)
            | Error::NegativeBranchAbsent(_)
            | Error::AdvancedArgument(_) => Exit::Model,
            _ => Exit::Solver,
        };
        Self::new(exit, e.to_string())
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub outputs: Vec<String>,
    pub versions: String,
    pub wall_time: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub summary: BTreeMap<String, Value>,
}

/// Collects parameters and outputs while a command runs.
pub struct Run {
    command: String,
    out_dir: PathBuf,
    started: Instant,
    parameters: BTreeMap<String, Value>,
    summary: BTreeMap<String, Value>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &str, out_dir: PathBuf) -> Self {
        Self {
            command: command.to_string(),
            out_dir,
            started: Instant::now(),
            parameters: BTreeMap::new(),
            summary: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters.insert(key.to_string(), to_value(value));
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), to_value(value));
    }

    /// `explicit` if given, otherwise `default_name` inside the output directory.
    pub fn path(&self, explicit: Option<&Path>, default_name: &str) -> PathBuf {
        explicit.map(Path::to_path_buf).unwrap_or_else(|| self.out_dir.join(default_name))
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> CmdResult {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
        fs::write(path, contents).map_err(|e| io_failure(path, e))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_json(&mut self, path: &Path, value: &impl Serialize) -> CmdResult {
        let mut text = serde_json::to_string_pretty(value).expect("serializable report");
        text.push('\n');
        self.write(path, &text)
    }

    /// Writes `<primary stem>.manifest.json` beside `primary`.
    pub fn finish(self, primary: &Path) -> CmdResult<PathBuf> {
        let stem = primary.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        let path = primary.with_file_name(format!("{stem}.manifest.json"));
        let manifest = RunManifest {
            command: self.command,
            parameters: self.parameters,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            versions: format!("delayfront {}", env!("CARGO_PKG_VERSION")),
            wall_time: self.started.elapsed().as_secs_f64(),
            summary: self.summary,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
        Ok(path)
    }
}

fn to_value(value: impl Serialize) -> Value {
    let v = serde_json::to_value(value).expect("serializable parameter");
    // Non-finite floats serialize as null; keep them readable.
    if v.is_null() {
        return Value::String("inf".into());
    }
    v
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(Exit::Io, format!("{}: {e}", path.display()))
}

/// Default output directory: `$DELAYFRONT_OUT`, else the working directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Gnuplot script plotting columns `x:y` of each CSV in `series`.
pub fn gnuplot_script(title: &str, xlabel: &str, ylabel: &str, series: &[(&Path, &str, &str)]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set title '{title}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"));
    let plots: Vec<String> = series
        .iter()
        .map(|(path, cols, style)| format!("'{}' using {cols} with {style}", file_name(path)))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
