// SPDX-License-Identifier: Apache-2.0

//! Simulator driver: compile a workfile with its testbench, run it under a
//! timeout, classify the result by sentinel, and collect diagnostics for the
//! repair prompt.

mod diagnostics;
mod icarus;
mod process;
mod verilator;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::parse_diagnostics;
pub use icarus::Icarus;
pub use verilator::Verilator;

pub const PASS_SENTINEL: &str = "ALL TESTS PASSED";
pub const FAIL_SENTINEL: &str = "TEST FAILED";
pub const MAX_DIAGNOSTICS: usize = 25;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input file not found: {0}")]
    MissingInput(PathBuf),
    #[error("unknown simulator '{0}' (expected icarus or verilator)")]
    UnknownBackend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Compile,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: Option<String>,
    pub line: Option<u32>,
    pub message: String,
    pub phase: Phase,
}

impl Diagnostic {
    pub fn raw(message: impl Into<String>, phase: Phase) -> Self {
        Self {
            file: None,
            line: None,
            message: message.into(),
            phase,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(file), Some(line)) => write!(f, "{file}:{line}: {}", self.message),
            (Some(file), None) => write!(f, "{file}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    CompileError,
    SimFailure,
    Timeout,
    ToolMissing,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::CompileError => "compile_error",
            Verdict::SimFailure => "sim_failure",
            Verdict::Timeout => "timeout",
            Verdict::ToolMissing => "tool_missing",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub verdict: Verdict,
    pub diagnostics: Vec<Diagnostic>,
    pub stdout: String,
    pub stderr: String,
    /// Wall-clock seconds.
    pub duration: f64,
}

impl SimOutcome {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub(crate) fn tool_missing(binary: &str, duration: f64) -> Self {
        Self {
            verdict: Verdict::ToolMissing,
            diagnostics: vec![Diagnostic::raw(
                format!("simulator binary '{binary}' not found on the search path"),
                Phase::Compile,
            )],
            stdout: String::new(),
            stderr: String::new(),
            duration,
        }
    }
}

/// Verdict from exit statuses and captured streams. `run_exit` is `None`
/// when the run step never executed.
pub fn classify(compile_exit: i32, run_exit: Option<i32>, stdout: &str, _stderr: &str) -> Verdict {
    if compile_exit != 0 {
        return Verdict::CompileError;
    }
    match run_exit {
        Some(0) if stdout.contains(PASS_SENTINEL) && !stdout.contains(FAIL_SENTINEL) => Verdict::Pass,
        _ => Verdict::SimFailure,
    }
}

/// Fills in the outcome of a compile and optional run step, guaranteeing
/// the diagnostic invariants of each verdict.
pub(crate) fn finish_outcome(
    compile: &process::Captured,
    run: Option<&process::Captured>,
    timeout: Duration,
    duration: f64,
) -> SimOutcome {
    let (verdict, mut diagnostics, stdout, stderr) = match run {
        None => {
            let mut d = parse_diagnostics(&compile.stderr, &compile.stdout, Phase::Compile);
            if d.is_empty() {
                d.push(Diagnostic::raw(
                    format!("compilation failed with exit status {}", compile.exit_code()),
                    Phase::Compile,
                ));
            }
            (Verdict::CompileError, d, compile.stdout.clone(), compile.stderr.clone())
        }
        Some(run) if run.timed_out => {
            let mut d = parse_diagnostics(&run.stderr, &run.stdout, Phase::Simulate);
            d.push(Diagnostic::raw(
                format!("simulation did not finish within {} s", timeout.as_secs_f64()),
                Phase::Simulate,
            ));
            (Verdict::Timeout, d, run.stdout.clone(), run.stderr.clone())
        }
        Some(run) => {
            let verdict = classify(0, Some(run.exit_code()), &run.stdout, &run.stderr);
            let mut d = Vec::new();
            if verdict != Verdict::Pass {
                d = parse_diagnostics(&run.stderr, &run.stdout, Phase::Simulate);
                if d.is_empty() {
                    d.push(Diagnostic::raw(
                        format!(
                            "simulation exited with status {} without printing \"{PASS_SENTINEL}\"",
                            run.exit_code()
                        ),
                        Phase::Simulate,
                    ));
                }
            }
            (verdict, d, run.stdout.clone(), run.stderr.clone())
        }
    };
    diagnostics.truncate(MAX_DIAGNOSTICS);
    SimOutcome {
        verdict,
        diagnostics,
        stdout,
        stderr,
        duration,
    }
}

pub(crate) fn compile_only_outcome(compile: &process::Captured, duration: f64) -> SimOutcome {
    if compile.success() {
        SimOutcome {
            verdict: Verdict::Pass,
            diagnostics: Vec::new(),
            stdout: compile.stdout.clone(),
            stderr: compile.stderr.clone(),
            duration,
        }
    } else {
        finish_outcome(compile, None, Duration::ZERO, duration)
    }
}

/// The simulator toolchain used for a run.
#[derive(Debug, Clone)]
pub enum Simulator {
    Icarus(Icarus),
    Verilator(Verilator),
}

impl Simulator {
    /// Chooses a backend: `ROME_SIMULATOR` (`icarus` or `verilator`) if
    /// set, otherwise Icarus when `iverilog` is on the path, otherwise
    /// Verilator when available, otherwise Icarus (which then reports the
    /// missing tool).
    pub fn detect() -> Result<Self, SimError> {
        match std::env::var("ROME_SIMULATOR").ok().as_deref() {
            Some("icarus") | Some("iverilog") => return Ok(Simulator::Icarus(Icarus::default())),
            Some("verilator") => return Ok(Simulator::Verilator(Verilator::from_env())),
            Some(other) if !other.is_empty() => {
                return Err(SimError::UnknownBackend(other.to_string()))
            }
            _ => {}
        }
        let icarus = Icarus::default();
        if icarus.available() {
            return Ok(Simulator::Icarus(icarus));
        }
        let verilator = Verilator::from_env();
        if verilator.available() {
            log::info!("iverilog not found, using Verilator");
            return Ok(Simulator::Verilator(verilator));
        }
        Ok(Simulator::Icarus(icarus))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Simulator::Icarus(_) => "icarus",
            Simulator::Verilator(_) => "verilator",
        }
    }

    pub fn available(&self) -> bool {
        match self {
            Simulator::Icarus(s) => s.available(),
            Simulator::Verilator(s) => s.available(),
        }
    }

    /// Compiles `workfile` with `testbench` and runs the result. Build
    /// products go to a `sim/` directory beside the workfile.
    pub fn test_unit(
        &self,
        workfile: &Path,
        testbench: &Path,
        timeout: Duration,
    ) -> Result<SimOutcome, SimError> {
        for p in [workfile, testbench] {
            if !p.is_file() {
                return Err(SimError::MissingInput(p.to_path_buf()));
            }
        }
        let ws = scratch_dir(workfile)?;
        match self {
            Simulator::Icarus(s) => s.test_unit(workfile, testbench, &ws, timeout),
            Simulator::Verilator(s) => s.test_unit(workfile, testbench, &ws, timeout),
        }
    }

    /// Compile-only check for units without a testbench.
    pub fn compile_check(&self, workfile: &Path) -> Result<SimOutcome, SimError> {
        if !workfile.is_file() {
            return Err(SimError::MissingInput(workfile.to_path_buf()));
        }
        let ws = scratch_dir(workfile)?;
        match self {
            Simulator::Icarus(s) => s.compile_check(workfile, &ws),
            Simulator::Verilator(s) => s.compile_check(workfile, &ws),
        }
    }
}

fn scratch_dir(workfile: &Path) -> Result<PathBuf, SimError> {
    let parent = workfile
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let ws = parent.join("sim");
    std::fs::create_dir_all(&ws).map_err(|source| SimError::Io {
        path: ws.clone(),
        source,
    })?;
    Ok(ws)
}

/// True when `binary` resolves to an executable file, either as a path or
/// through `PATH`.
pub(crate) fn on_path(binary: &str) -> bool {
    let p = Path::new(binary);
    if p.components().count() > 1 {
        return p.is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|d| d.join(binary).is_file()))
        .unwrap_or(false)
}
