// SPDX-License-Identifier: Apache-2.0

//! Paths and setup shared by the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rome::bench::{load_suite, BenchmarkDef};
use rome::llm::ReplayMode;
use rome::sim::Simulator;
use rome::vcode::{extract_units, VerilogUnit};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixtures() -> PathBuf {
    crate_dir().join("tests/fixtures")
}

pub fn suite_dir() -> PathBuf {
    crate_dir().join("../../suites/rome")
}

pub fn suite() -> Vec<BenchmarkDef> {
    load_suite(&suite_dir()).expect("shipped suite loads")
}

pub fn reference(bench: &str) -> Vec<VerilogUnit> {
    let path = fixtures().join("reference").join(format!("{bench}.v"));
    extract_units(&std::fs::read_to_string(path).expect("reference design"))
}

pub fn reference_unit(bench: &str, name: &str) -> VerilogUnit {
    reference(bench)
        .into_iter()
        .find(|u| u.name == name)
        .unwrap_or_else(|| panic!("{bench}: no reference unit {name}"))
}

/// The simulator the tests run against. Panics when none is installed.
pub fn simulator() -> Simulator {
    let sim = Simulator::detect().expect("simulator selection");
    assert!(sim.available(), "no Verilog simulator installed (need iverilog/vvp or Verilator)");
    sim
}

/// Strict replay when the transcripts were recorded under this simulator.
/// Compile diagnostics differ between simulators, so a repair prompt that
/// quotes them only matches under the recording simulator.
pub fn replay_mode(sim: &Simulator) -> ReplayMode {
    let recorded = std::fs::read_to_string(fixtures().join("replay/RECORDED_WITH")).unwrap_or_default();
    if recorded.trim() == sim.name() {
        ReplayMode::Strict
    } else {
        ReplayMode::Lenient
    }
}

pub fn replay(rel: &str) -> PathBuf {
    fixtures().join("replay").join(rel)
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
