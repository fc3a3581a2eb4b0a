// SPDX-License-Identifier: Apache-2.0

//! Verilog module extraction from raw model output, instantiation stubs for
//! relay prompts, and the accumulated workfile of committed modules.
//!
//! Scanning is keyword based: `module` / `endmodule` at word boundaries,
//! skipping comments and string literals. The simulator remains the
//! authority on whether the code is actually valid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::name_key;

/// File name of the accumulated design inside a run workspace.
pub const WORKFILE_NAME: &str = "prev_submods.v";

#[derive(Debug, Error)]
pub enum VcodeError {
    #[error("no module in the response matches '{expected}' and every candidate looks like a testbench")]
    NoTarget { expected: String },
    #[error("no modules to choose from")]
    Empty,
    #[error("cannot parse module header: {0}")]
    UnparsableHeader(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerilogUnit {
    pub name: String,
    /// `module name(...);` as written, possibly over several lines.
    pub header: String,
    /// Everything from `module` through `endmodule`.
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub direction: Direction,
    /// Bit width; `None` when the range is not a constant expression.
    pub width: Option<u32>,
    pub name: String,
}

// ---------------------------------------------------------------------------
// Lexical scanning

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Keyword {
    Module,
    EndModule,
}

/// Byte offsets of `module`/`endmodule` keywords outside comments and strings.
fn keywords(src: &str) -> Vec<(usize, Keyword)> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'/' if b.get(i + 1) == Some(&b'/') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < b.len() && !(b[i] == b'*' && b.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                i += 2;
            }
            b'"' => {
                i += 1;
                while i < b.len() && b[i] != b'"' && b[i] != b'\n' {
                    if b[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                i += 1;
            }
            c if is_ident_char(c) => {
                let start = i;
                while i < b.len() && is_ident_char(b[i]) {
                    i += 1;
                }
                match &src[start..i] {
                    "module" => out.push((start, Keyword::Module)),
                    "endmodule" => out.push((start, Keyword::EndModule)),
                    _ => {}
                }
            }
            _ => i += 1,
        }
    }
    out
}

/// Removes `//` and `/* */` comments, keeping newlines.
fn strip_comments(src: &str) -> String {
    let b = src.as_bytes();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    let mut last = 0;
    while i < b.len() {
        match b[i] {
            b'/' if b.get(i + 1) == Some(&b'/') => {
                out.push_str(&src[last..i]);
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
                last = i;
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                out.push_str(&src[last..i]);
                i += 2;
                while i < b.len() && !(b[i] == b'*' && b.get(i + 1) == Some(&b'/')) {
                    if b[i] == b'\n' {
                        out.push('\n');
                    }
                    i += 1;
                }
                i = (i + 2).min(b.len());
                last = i;
                out.push(' ');
            }
            b'"' => {
                i += 1;
                while i < b.len() && b[i] != b'"' && b[i] != b'\n' {
                    if b[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                i = (i + 1).min(b.len());
            }
            _ => i += 1,
        }
    }
    out.push_str(&src[last.min(src.len())..]);
    out
}

fn drop_fences(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Name and header end (exclusive, past the terminating `;`) of a module
/// declaration starting at `start`, or `None` if this `module` keyword is
/// not followed by a declaration (e.g. prose such as "this module adds").
fn parse_header_at(src: &str, start: usize) -> Option<(String, usize)> {
    let b = src.as_bytes();
    let mut i = start + "module".len();
    let skip_ws = |i: &mut usize| {
        while *i < b.len() && b[*i].is_ascii_whitespace() {
            *i += 1;
        }
    };
    skip_ws(&mut i);
    let name_start = i;
    if i >= b.len() || !(b[i].is_ascii_alphabetic() || b[i] == b'_') {
        return None;
    }
    while i < b.len() && is_ident_char(b[i]) {
        i += 1;
    }
    let name = src[name_start..i].to_string();
    skip_ws(&mut i);
    if i >= b.len() || !matches!(b[i], b'(' | b';' | b'#') {
        return None;
    }
    let mut depth = 0i32;
    while i < b.len() {
        match b[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b';' if depth == 0 => return Some((name, i + 1)),
            b'/' if b.get(i + 1) == Some(&b'/') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < b.len() && !(b[i] == b'*' && b.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Every complete `module ... endmodule` span in the text, in order.
/// Markdown fences and surrounding prose are dropped; a `module` keyword
/// followed by another `module` before any `endmodule` is discarded.
pub fn extract_units(raw: &str) -> Vec<VerilogUnit> {
    let src = drop_fences(raw);
    let mut units = Vec::new();
    let mut open: Option<(usize, String, usize)> = None;
    for (pos, kw) in keywords(&src) {
        match kw {
            Keyword::Module => {
                if let Some((name, header_end)) = parse_header_at(&src, pos) {
                    open = Some((pos, name, header_end));
                }
            }
            Keyword::EndModule => {
                if let Some((start, name, header_end)) = open.take() {
                    if header_end > pos {
                        continue;
                    }
                    let end = pos + "endmodule".len();
                    units.push(VerilogUnit {
                        name,
                        header: src[start..header_end].to_string(),
                        body: src[start..end].to_string(),
                    });
                }
            }
        }
    }
    units
}

/// Counts `module` and `endmodule` keywords outside comments/strings.
pub fn keyword_counts(src: &str) -> (usize, usize) {
    let kws = keywords(src);
    let m = kws.iter().filter(|(_, k)| *k == Keyword::Module).count();
    (m, kws.len() - m)
}

// ---------------------------------------------------------------------------
// Target selection

fn looks_like_testbench(unit: &VerilogUnit) -> bool {
    let lower = unit.name.to_ascii_lowercase();
    if lower.contains("test")
        || lower.starts_with("tb")
        || lower.ends_with("tb")
        || lower.split('_').any(|t| t == "tb")
    {
        return true;
    }
    let portless = signature_of(unit).map(|p| p.is_empty()).unwrap_or(false);
    portless && strip_comments(&unit.body).split(|c: char| !c.is_ascii_alphanumeric() && c != '_').any(|w| w == "initial")
}

/// Result of picking the module a step asked for.
#[derive(Debug, Clone)]
pub struct Selection {
    pub unit: VerilogUnit,
    /// Set when the chosen unit's name differs from the requested one.
    pub mismatch: Option<String>,
}

/// Picks the requested module out of a response; falls back to the first
/// non-testbench unit when the model named it differently.
pub fn filter_target(units: &[VerilogUnit], expected: &str) -> Result<Selection, VcodeError> {
    if units.is_empty() {
        return Err(VcodeError::Empty);
    }
    if let Some(u) = units.iter().find(|u| u.name == expected) {
        return Ok(Selection {
            unit: u.clone(),
            mismatch: None,
        });
    }
    let key = name_key(expected);
    let candidate = units
        .iter()
        .find(|u| u.name.eq_ignore_ascii_case(expected) || name_key(&u.name) == key)
        .or_else(|| units.iter().find(|u| !looks_like_testbench(u)));
    match candidate {
        Some(u) => {
            let msg = format!("expected module '{expected}', using '{}'", u.name);
            log::warn!("{msg}");
            Ok(Selection {
                unit: u.clone(),
                mismatch: Some(msg),
            })
        }
        None => Err(VcodeError::NoTarget {
            expected: expected.to_string(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Signatures and stubs

/// Splits on commas at bracket/paren depth 0.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut last = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[last..i]);
                last = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[last..]);
    parts
}

fn range_width(range: &str) -> Option<u32> {
    let inner = range.trim().strip_prefix('[')?.strip_suffix(']')?;
    let (msb, lsb) = inner.split_once(':')?;
    let msb: i64 = msb.trim().parse().ok()?;
    let lsb: i64 = lsb.trim().parse().ok()?;
    Some((msb - lsb).unsigned_abs() as u32 + 1)
}

/// Parses a declaration such as `input wire [3:0] a` or `output reg out`.
/// Returns direction (if any), width, and the trailing name.
fn parse_decl(decl: &str) -> Option<(Option<Direction>, Option<u32>, String)> {
    let decl = decl.trim();
    if decl.is_empty() {
        return None;
    }
    let mut direction = None;
    let mut width = Some(1);
    let mut rest = decl;
    loop {
        rest = rest.trim_start();
        if rest.starts_with('[') {
            let end = rest.find(']')?;
            width = range_width(&rest[..=end]);
            rest = &rest[end + 1..];
            continue;
        }
        let word_end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '$'))
            .unwrap_or(rest.len());
        let word = &rest[..word_end];
        let after = rest[word_end..].trim();
        match word {
            "input" => direction = Some(Direction::Input),
            "output" => direction = Some(Direction::Output),
            "inout" => direction = Some(Direction::Inout),
            "wire" | "reg" | "logic" | "signed" | "unsigned" | "var" | "tri" | "integer" => {}
            "" => return None,
            name if after.is_empty() || after.starts_with('=') || after.starts_with('[') => {
                return Some((direction, width, name.to_string()));
            }
            _ => return None,
        }
        rest = &rest[word_end..];
    }
}

/// Ordered port list of a unit. Handles ANSI headers and the classic
/// style with directions declared in the body.
pub fn signature_of(unit: &VerilogUnit) -> Result<Vec<Port>, VcodeError> {
    let header = strip_comments(&unit.header);
    let bad = || VcodeError::UnparsableHeader(collapse(&unit.header));
    let after_name = header
        .find(&unit.name)
        .map(|i| &header[i + unit.name.len()..])
        .ok_or_else(bad)?;
    let mut rest = after_name.trim_start();
    if let Some(params) = rest.strip_prefix('#') {
        let params = params.trim_start();
        let group = balanced(params).ok_or_else(bad)?;
        rest = params[group.len()..].trim_start();
    }
    if rest.starts_with(';') {
        return Ok(Vec::new());
    }
    let group = balanced(rest).ok_or_else(bad)?;
    let inner = &group[1..group.len() - 1];
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }

    let ansi = inner
        .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .any(|w| matches!(w, "input" | "output" | "inout"));
    if ansi {
        let mut ports = Vec::new();
        let mut current: Option<(Direction, Option<u32>)> = None;
        for item in split_top_level(inner) {
            let (dir, width, name) = parse_decl(item).ok_or_else(bad)?;
            let (dir, width) = match dir {
                Some(d) => (d, width),
                None => {
                    let (d, w) = current.ok_or_else(bad)?;
                    // "input [3:0] a, b": b inherits the range unless it has its own.
                    let explicit_range = item.contains('[');
                    (d, if explicit_range { width } else { w })
                }
            };
            current = Some((dir, width));
            ports.push(Port {
                direction: dir,
                width,
                name,
            });
        }
        return Ok(ports);
    }

    // Classic: names in the header, directions in the body.
    let names: Vec<String> = split_top_level(inner)
        .into_iter()
        .map(|s| s.trim().to_string())
        .collect();
    if names.iter().any(|n| !crate::plan::is_verilog_identifier(n)) {
        return Err(bad());
    }
    let body = strip_comments(&unit.body[unit.header.len().min(unit.body.len())..]);
    let mut found: Vec<Option<Port>> = vec![None; names.len()];
    for stmt in body.split(';') {
        let stmt = stmt.trim();
        let first = stmt.split_whitespace().next().unwrap_or("");
        if !matches!(first, "input" | "output" | "inout") {
            continue;
        }
        let mut parts = split_top_level(stmt).into_iter();
        let Some((Some(dir), width, first_name)) = parts.next().and_then(parse_decl) else {
            continue;
        };
        let mut declared = vec![first_name];
        declared.extend(parts.filter_map(|p| {
            let p = p.trim();
            crate::plan::is_verilog_identifier(p).then(|| p.to_string())
        }));
        for n in declared {
            if let Some(idx) = names.iter().position(|x| *x == n) {
                found[idx] = Some(Port {
                    direction: dir,
                    width,
                    name: n,
                });
            }
        }
    }
    found
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(bad)
}

fn balanced(s: &str) -> Option<&str> {
    if !s.starts_with('(') {
        return None;
    }
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One-line header declaration standing in for the full module.
pub fn stub_of(unit: &VerilogUnit) -> String {
    let mut s = collapse(&strip_comments(&unit.header));
    s = s.replace("( ", "(").replace(" )", ")").replace(" ;", ";");
    if let Some(stripped) = s.strip_suffix(';') {
        s = stripped.trim_end().to_string();
    }
    if !s.ends_with(')') {
        s.push_str("()");
    }
    s.push(';');
    s
}

// ---------------------------------------------------------------------------
// Workfile

/// The accumulated design file of committed modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workfile {
    pub units: Vec<VerilogUnit>,
    pub path: PathBuf,
}

impl Workfile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            units: Vec::new(),
            path: path.into(),
        }
    }

    /// Loads an existing file, or starts empty when it does not exist.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, VcodeError> {
        let path = path.into();
        let units = match std::fs::read_to_string(&path) {
            Ok(text) => extract_units(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(source) => return Err(VcodeError::Io { path, source }),
        };
        Ok(Self { units, path })
    }

    pub fn get(&self, name: &str) -> Option<&VerilogUnit> {
        self.units.iter().find(|u| u.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Replaces a same-named unit in place, otherwise appends.
    pub fn insert(&mut self, unit: VerilogUnit) {
        match self.units.iter_mut().find(|u| u.name == unit.name) {
            Some(slot) => *slot = unit,
            None => self.units.push(unit),
        }
    }

    /// `insert` followed by an atomic rewrite of the file.
    pub fn append(&mut self, unit: VerilogUnit) -> Result<(), VcodeError> {
        self.insert(unit);
        self.save()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for u in &self.units {
            out.push_str(&u.body);
            out.push('\n');
        }
        out
    }

    pub fn save(&self) -> Result<(), VcodeError> {
        write_atomic(&self.path, &self.serialize())
    }

    /// Copy of this workfile living at another path (not yet written).
    pub fn relocated(&self, path: impl Into<PathBuf>) -> Self {
        Self {
            units: self.units.clone(),
            path: path.into(),
        }
    }
}

pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<(), VcodeError> {
    let io = |source| VcodeError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("v.tmp");
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}
