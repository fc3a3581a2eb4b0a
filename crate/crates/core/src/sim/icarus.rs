// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use super::process::{self, Captured};
use super::{finish_outcome, on_path, SimError, SimOutcome};

/// `iverilog` to compile, `vvp` to run.
#[derive(Debug, Clone)]
pub struct Icarus {
    pub iverilog: String,
    pub vvp: String,
}

impl Default for Icarus {
    fn default() -> Self {
        Self::new("iverilog", "vvp")
    }
}

impl Icarus {
    pub fn new(iverilog: impl Into<String>, vvp: impl Into<String>) -> Self {
        Self {
            iverilog: iverilog.into(),
            vvp: vvp.into(),
        }
    }

    pub fn available(&self) -> bool {
        on_path(&self.iverilog) && on_path(&self.vvp)
    }

    fn spawn(&self, binary: &str, cmd: Command, timeout: Option<Duration>) -> Result<Option<Captured>, SimError> {
        match process::run(cmd, timeout) {
            Ok(c) => Ok(Some(c)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(SimError::Io {
                path: PathBuf::from(binary),
                source,
            }),
        }
    }

    pub(crate) fn test_unit(
        &self,
        workfile: &Path,
        testbench: &Path,
        ws: &Path,
        timeout: Duration,
    ) -> Result<SimOutcome, SimError> {
        let start = Instant::now();
        let image = ws.join("sim.out");
        let mut cmd = Command::new(&self.iverilog);
        cmd.arg("-o").arg(&image).arg(workfile).arg(testbench);
        let Some(compile) = self.spawn(&self.iverilog, cmd, None)? else {
            return Ok(SimOutcome::tool_missing(&self.iverilog, start.elapsed().as_secs_f64()));
        };
        if !compile.success() {
            return Ok(finish_outcome(&compile, None, timeout, start.elapsed().as_secs_f64()));
        }
        let mut cmd = Command::new(&self.vvp);
        cmd.arg(&image).current_dir(ws);
        let Some(run) = self.spawn(&self.vvp, cmd, Some(timeout))? else {
            return Ok(SimOutcome::tool_missing(&self.vvp, start.elapsed().as_secs_f64()));
        };
        Ok(finish_outcome(&compile, Some(&run), timeout, start.elapsed().as_secs_f64()))
    }

    pub(crate) fn compile_check(&self, workfile: &Path, ws: &Path) -> Result<SimOutcome, SimError> {
        let start = Instant::now();
        let mut cmd = Command::new(&self.iverilog);
        cmd.arg("-o").arg(ws.join("check.out")).arg(workfile);
        let Some(compile) = self.spawn(&self.iverilog, cmd, None)? else {
            return Ok(SimOutcome::tool_missing(&self.iverilog, start.elapsed().as_secs_f64()));
        };
        Ok(super::compile_only_outcome(&compile, start.elapsed().as_secs_f64()))
    }
}
