//! Writing reports, and checking paths before any work starts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::failure::Failure;

/// Pretty JSON with a trailing newline. Key order follows the struct
/// definitions, so equal values give equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    write_text(path, &to_json(value)?)
}

/// Create the output directory, failing validation if that is impossible.
pub fn prepare_out(dir: &Path) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::validation(format!("cannot create output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".fpp-write-check");
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| Failure::validation(format!("output directory {} is not writable: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}

pub fn require_file(path: Option<&Path>, flag: &str) -> Result<PathBuf, Failure> {
    let path = path.ok_or_else(|| Failure::validation(format!("missing required flag: {flag}")))?;
    if !path.is_file() {
        return Err(Failure::validation(format!("{flag}: {} is not a file", path.display())));
    }
    Ok(path.to_path_buf())
}

pub fn require_bundle(path: Option<&Path>) -> Result<PathBuf, Failure> {
    let dir = path.ok_or_else(|| Failure::validation("missing required flag: --data"))?;
    for file in [fpp::data::FEATURES_FILE, fpp::data::RESPONSES_FILE] {
        if !dir.join(file).is_file() {
            return Err(Failure::validation(format!(
                "--data: {} has no {file}",
                dir.display()
            )));
        }
    }
    Ok(dir.to_path_buf())
}

/// A file name fragment made only of ASCII letters, digits and `_`.
pub fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if s.is_empty() {
        "response".into()
    } else {
        s
    }
}

#[derive(Debug, Serialize)]
struct Phase {
    name: &'static str,
    seconds: f64,
}

/// Wall-clock time per phase. Kept out of the main report so that report
/// stays byte-identical across runs.
#[derive(Debug, Serialize)]
pub struct Timings {
    command: &'static str,
    phases: Vec<Phase>,
    total_seconds: f64,
    #[serde(skip)]
    start: Option<Instant>,
    #[serde(skip)]
    lap: Option<Instant>,
}

impl Timings {
    pub fn start(command: &'static str) -> Self {
        let now = Instant::now();
        Timings {
            command,
            phases: Vec::new(),
            total_seconds: 0.0,
            start: Some(now),
            lap: Some(now),
        }
    }

    /// Close the current phase under `name`.
    pub fn phase(&mut self, name: &'static str) {
        let now = Instant::now();
        let lap = self.lap.replace(now).unwrap_or(now);
        self.phases.push(Phase {
            name,
            seconds: (now - lap).as_secs_f64(),
        });
    }

    pub fn write(mut self, dir: &Path) -> Result<(), Failure> {
        if let Some(s) = self.start {
            self.total_seconds = s.elapsed().as_secs_f64();
        }
        write_json(&dir.join("timings.json"), &self)
    }
}
