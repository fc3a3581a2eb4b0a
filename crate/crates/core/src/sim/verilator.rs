// SPDX-License-Identifier: Apache-2.0

//! Verilator backend, used when Icarus is not installed. Verilation and the
//! C++ build are the compile step; the resulting binary is the run step.
//! Built binaries are cached by content hash, and the shared runtime
//! objects are cached once, so repeated tests of the same design are cheap.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use super::process::{self, Captured};
use super::{compile_only_outcome, finish_outcome, on_path, SimError, SimOutcome};
use crate::vcode::{extract_units, signature_of};

const BUILD_TIMEOUT: Duration = Duration::from_secs(600);
const WARNING_FLAGS: [&str; 3] = ["-Wno-fatal", "-Wno-lint", "-Wno-style"];

#[derive(Debug, Clone)]
pub struct Verilator {
    pub binary: String,
    pub cache_dir: PathBuf,
}

impl Verilator {
    pub fn new(binary: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            binary: binary.into(),
            cache_dir: cache_dir.into(),
        }
    }

    /// `ROME_VERILATOR` names the executable (default: `verilator`, then
    /// `verilator-cli`); `ROME_VERILATOR_CACHE` the cache directory.
    pub fn from_env() -> Self {
        let binary = std::env::var("ROME_VERILATOR").unwrap_or_else(|_| {
            ["verilator", "verilator-cli"]
                .into_iter()
                .find(|b| on_path(b))
                .unwrap_or("verilator")
                .to_string()
        });
        let cache_dir = std::env::var_os("ROME_VERILATOR_CACHE")
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("rome-verilator-cache"));
        Self::new(binary, cache_dir)
    }

    pub fn available(&self) -> bool {
        on_path(&self.binary)
    }

    fn spawn(&self, cmd: Command, timeout: Option<Duration>) -> Result<Option<Captured>, SimError> {
        match process::run(cmd, timeout) {
            Ok(c) => Ok(Some(c)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(SimError::Io {
                path: PathBuf::from(&self.binary),
                source,
            }),
        }
    }

    fn base_command(&self) -> Command {
        let mut cmd = Command::new(&self.binary);
        cmd.args(["--timing", "--timescale", "1ns/1ps"]).args(WARNING_FLAGS);
        cmd
    }

    pub(crate) fn test_unit(
        &self,
        workfile: &Path,
        testbench: &Path,
        ws: &Path,
        timeout: Duration,
    ) -> Result<SimOutcome, SimError> {
        let start = Instant::now();
        let design = read(workfile)?;
        let bench = read(testbench)?;
        let top = testbench_top(&bench);
        let key = cache_key(&[&self.binary, &top, &design, &bench]);
        let cached = self.cache_dir.join("bins").join(&key).join(format!("V{top}"));

        let (compile, exe) = if cached.is_file() {
            (Captured::default(), cached)
        } else {
            match self.build(workfile, testbench, &top, ws, &cached)? {
                Build::Built(c, exe) => (c, exe),
                Build::Failed(c) => {
                    return Ok(finish_outcome(&c, None, timeout, start.elapsed().as_secs_f64()))
                }
                Build::Missing(binary) => {
                    return Ok(SimOutcome::tool_missing(&binary, start.elapsed().as_secs_f64()))
                }
            }
        };
        let mut cmd = Command::new(&exe);
        cmd.current_dir(ws);
        let run = process::run(cmd, Some(timeout)).map_err(|source| SimError::Io { path: exe, source })?;
        Ok(finish_outcome(&compile, Some(&run), timeout, start.elapsed().as_secs_f64()))
    }

    fn build(
        &self,
        workfile: &Path,
        testbench: &Path,
        top: &str,
        ws: &Path,
        cached: &Path,
    ) -> Result<Build, SimError> {
        let mdir = ws.join("verilator_obj");
        if mdir.exists() {
            std::fs::remove_dir_all(&mdir).map_err(|source| io(&mdir, source))?;
        }
        let mut cmd = self.base_command();
        cmd.args(["--cc", "--exe", "--main", "--top-module", top, "-Mdir"])
            .arg(&mdir)
            .arg(workfile)
            .arg(testbench);
        let Some(verilate) = self.spawn(cmd, Some(BUILD_TIMEOUT))? else {
            return Ok(Build::Missing(self.binary.clone()));
        };
        if !verilate.success() {
            return Ok(Build::Failed(verilate));
        }

        let runtime = self.cache_dir.join("runtime");
        let have_runtime = runtime.is_dir();
        if have_runtime {
            // Copies get fresh mtimes, so make treats them as up to date.
            for entry in std::fs::read_dir(&runtime).map_err(|source| io(&runtime, source))? {
                let entry = entry.map_err(|source| io(&runtime, source))?;
                let dest = mdir.join(entry.file_name());
                std::fs::copy(entry.path(), &dest).map_err(|source| io(&dest, source))?;
            }
        }

        let mut make = Command::new("make");
        make.arg("-C")
            .arg(&mdir)
            .arg("-f")
            .arg(format!("V{top}.mk"))
            .args(["PYTHON3=python3", "OPT_FAST=-O0", "OPT_SLOW=-O0", "OPT_GLOBAL=-O0"])
            // Some packaged builds leave the precompiled-header include flag
            // empty, which breaks designs large enough to get a PCH.
            .arg("CFG_CXXFLAGS_PCH_I=-include")
            .env("CXXFLAGS", "--std=c++20 -DVL_TIME_CONTEXT");
        let built = match process::run(make, Some(BUILD_TIMEOUT)) {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Build::Missing("make".into())),
            Err(source) => return Err(io(&mdir, source)),
        };
        if !built.success() {
            return Ok(Build::Failed(built));
        }
        let exe = mdir.join(format!("V{top}"));

        if !have_runtime {
            self.store_runtime(&mdir, &runtime);
        }
        if let Some(dir) = cached.parent() {
            let stored = std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::copy(&exe, dir.join(".tmp-exe")))
                .and_then(|_| std::fs::rename(dir.join(".tmp-exe"), cached));
            if let Err(e) = stored {
                log::debug!("could not cache {}: {e}", cached.display());
            }
        }
        Ok(Build::Built(verilate, exe))
    }

    fn store_runtime(&self, mdir: &Path, runtime: &Path) {
        let staging = self
            .cache_dir
            .join(format!("runtime.tmp.{}", std::process::id()));
        let result = (|| -> std::io::Result<()> {
            std::fs::create_dir_all(&staging)?;
            for entry in std::fs::read_dir(mdir)? {
                let entry = entry?;
                let name = entry.file_name();
                let name = name.to_string_lossy();
                if name.starts_with("verilated") && name.ends_with(".o") {
                    std::fs::copy(entry.path(), staging.join(&*name))?;
                }
            }
            std::fs::rename(&staging, runtime)
        })();
        if let Err(e) = result {
            log::debug!("runtime object cache not stored: {e}");
            let _ = std::fs::remove_dir_all(&staging);
        }
    }

    pub(crate) fn compile_check(&self, workfile: &Path, _ws: &Path) -> Result<SimOutcome, SimError> {
        let start = Instant::now();
        let mut cmd = self.base_command();
        cmd.arg("--lint-only").arg(workfile);
        let Some(lint) = self.spawn(cmd, Some(BUILD_TIMEOUT))? else {
            return Ok(SimOutcome::tool_missing(&self.binary, start.elapsed().as_secs_f64()));
        };
        Ok(compile_only_outcome(&lint, start.elapsed().as_secs_f64()))
    }
}

enum Build {
    Built(Captured, PathBuf),
    Failed(Captured),
    Missing(String),
}

fn io(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|source| io(path, source))
}

fn cache_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

/// The testbench's top module: the first portless module, else the first.
fn testbench_top(source: &str) -> String {
    let units = extract_units(source);
    units
        .iter()
        .find(|u| signature_of(u).map(|p| p.is_empty()).unwrap_or(false))
        .or(units.first())
        .map(|u| u.name.clone())
        .unwrap_or_else(|| "tb".to_string())
}
