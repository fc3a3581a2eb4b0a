// SPDX-License-Identifier: Apache-2.0

use std::sync::LazyLock;

use regex::Regex;

use super::{Diagnostic, Phase, FAIL_SENTINEL, MAX_DIAGNOSTICS};

/// `file:line: message` as printed by iverilog and vvp.
static PLAIN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([^\s:]+\.s?vh?):(\d+):\s*(.*)$").unwrap());

/// `%Error: file:line:col: message` and `%Warning-CODE: ...` from Verilator.
static VERILATOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^%(Error|Warning)(?:-([A-Z0-9_]+))?:\s*([^\s:]+):(\d+):(?:\d+:)?\s*(.*)$").unwrap()
});

/// Verilator source echo (`   12 | code`, `      | ^~~`), hints, and the
/// trailing summary carry no information of their own.
fn is_noise(line: &str) -> bool {
    let t = line.trim_start();
    if t.is_empty() || t.starts_with("... ") || t.starts_with(": ... ") {
        return true;
    }
    if let Some((lhs, _)) = t.split_once('|') {
        if lhs.trim().chars().all(|c| c.is_ascii_digit()) {
            return true;
        }
    }
    t.starts_with("%Error: Exiting due to")
        || t.starts_with("%Error: Command Failed")
        || t.starts_with("- ")
        || t.starts_with("make: ***")
}

fn basename(path: &str) -> String {
    path.rsplit('/').next().unwrap_or(path).to_string()
}

fn parse_line(line: &str, phase: Phase) -> Option<Diagnostic> {
    let line = line.trim_end();
    if is_noise(line) {
        return None;
    }
    if let Some(c) = VERILATOR.captures(line) {
        let mut message = c[5].to_string();
        if &c[1] == "Warning" {
            message = format!("warning: {message}");
        }
        return Some(Diagnostic {
            file: Some(basename(&c[3])),
            line: c[4].parse().ok(),
            message,
            phase,
        });
    }
    if let Some(c) = PLAIN.captures(line) {
        let message = c[3].trim();
        return Some(Diagnostic {
            file: Some(basename(&c[1])),
            line: c[2].parse().ok(),
            message: if message.is_empty() { line.to_string() } else { message.to_string() },
            phase,
        });
    }
    Some(Diagnostic::raw(line.trim(), phase))
}

fn is_assertion(line: &str) -> bool {
    let t = line.trim_start();
    line.contains(FAIL_SENTINEL)
        || t.starts_with("ERROR")
        || t.starts_with("%Error")
        || t.starts_with("FATAL")
        || t.contains("Assertion failed")
        || t.contains("assertion failed")
}

/// Structured diagnostics from a tool's output streams, in order and
/// capped at 25. Stdout contributes only failure lines (fail sentinel and
/// assertion messages); every other nonempty stderr line is kept.
pub fn parse_diagnostics(stderr: &str, stdout: &str, phase: Phase) -> Vec<Diagnostic> {
    let from_stdout = stdout
        .lines()
        .filter(|l| is_assertion(l))
        .filter_map(|l| {
            if l.contains(FAIL_SENTINEL) {
                Some(Diagnostic::raw(l.trim(), Phase::Simulate))
            } else {
                parse_line(l, Phase::Simulate)
            }
        });
    let from_stderr = stderr.lines().filter_map(|l| parse_line(l, phase));
    from_stdout.chain(from_stderr).take(MAX_DIAGNOSTICS).collect()
}
