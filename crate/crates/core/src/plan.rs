// SPDX-License-Identifier: Apache-2.0

//! Hierarchical design plans: the ordered list of submodules that build up a
//! top module, loaded from a manifest or extracted from model output, and
//! graded against a golden plan.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: missing [top] table")]
    MissingTop { path: PathBuf },
    #[error("{path}: {field}: missing or empty")]
    MissingField { path: PathBuf, field: String },
    #[error("{path}: {field}: '{name}' is not a legal Verilog identifier")]
    InvalidIdentifier {
        path: PathBuf,
        field: String,
        name: String,
    },
    #[error("{path}: {field}: duplicate submodule name '{name}'")]
    DuplicateName {
        path: PathBuf,
        field: String,
        name: String,
    },
    #[error("{path}: {field}: testbench {testbench} does not exist")]
    DanglingTestbench {
        path: PathBuf,
        field: String,
        testbench: PathBuf,
    },
    #[error("no numbered or bulleted list found in model output")]
    NoListFound,
    #[error("plan accuracy needs at least one candidate")]
    NoCandidates,
}

/// One step of the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmoduleSpec {
    pub name: String,
    /// Port declaration text, e.g. `mux2_1(input in1, input in2, input select, output out)`.
    /// Empty when the plan came from a model that did not propose ports.
    pub interface: String,
    pub description: String,
    pub unit_testbench: Option<PathBuf>,
    pub depth: usize,
}

impl SubmoduleSpec {
    /// Interface text if known, otherwise just the module name.
    pub fn interface_or_name(&self) -> &str {
        if self.interface.is_empty() {
            &self.name
        } else {
            &self.interface
        }
    }

    /// Human label used in grading output.
    pub fn label(&self) -> &str {
        if self.description.is_empty() {
            &self.name
        } else {
            &self.description
        }
    }

    fn name_is_synthesized(&self) -> bool {
        self.name == synthesize_name(&self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopSpec {
    pub name: String,
    pub description: String,
    /// Port declaration text of the top module; may be empty.
    #[serde(default)]
    pub interface: String,
    pub testbench: PathBuf,
}

impl TopSpec {
    pub fn interface_or_name(&self) -> &str {
        if self.interface.is_empty() {
            &self.name
        } else {
            &self.interface
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSource {
    Human,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyPlan {
    pub top: TopSpec,
    pub submodules: Vec<SubmoduleSpec>,
    pub source: PlanSource,
}

impl HierarchyPlan {
    /// True when the last submodule is the top module itself, as in most
    /// benchmark rows ("64-to-1 mux" closing the mux chain).
    pub fn ends_with_top(&self) -> bool {
        self.submodules
            .last()
            .is_some_and(|s| s.name == self.top.name)
    }

    pub fn submodule(&self, name: &str) -> Option<&SubmoduleSpec> {
        self.submodules.iter().find(|s| s.name == name)
    }
}

pub fn is_verilog_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    top: Option<ManifestTop>,
    #[serde(default)]
    submodule: Vec<ManifestSubmodule>,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    notes: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestTop {
    name: Option<String>,
    description: Option<String>,
    #[serde(default)]
    interface: String,
    testbench: Option<String>,
    #[serde(default)]
    nh_prompt: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSubmodule {
    name: Option<String>,
    #[serde(default)]
    interface: String,
    #[serde(default)]
    description: String,
    testbench: Option<String>,
}

/// Everything a manifest carries; the plan plus benchmark metadata.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub plan: HierarchyPlan,
    pub nh_prompt: String,
    pub tags: Vec<String>,
    pub notes: Option<String>,
}

pub fn load_manifest(path: &Path) -> Result<HierarchyPlan, PlanError> {
    Ok(read_manifest(path)?.plan)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, PlanError> {
    let text = std::fs::read_to_string(path).map_err(|source| PlanError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: ManifestFile = toml::from_str(&text).map_err(|e| PlanError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let p = || path.to_path_buf();

    let top = raw.top.ok_or_else(|| PlanError::MissingTop { path: p() })?;
    let top_name = required(path, "top.name", top.name)?;
    if !is_verilog_identifier(&top_name) {
        return Err(PlanError::InvalidIdentifier {
            path: p(),
            field: "top.name".into(),
            name: top_name,
        });
    }
    let top_description = required(path, "top.description", top.description)?;
    let top_tb = required(path, "top.testbench", top.testbench)?;
    let top_testbench = resolve_testbench(path, base, "top.testbench", &top_tb)?;

    let mut seen = HashSet::new();
    let mut submodules = Vec::with_capacity(raw.submodule.len());
    for (i, sub) in raw.submodule.into_iter().enumerate() {
        let field = |f: &str| format!("submodule[{i}].{f}");
        let name = required(path, &field("name"), sub.name)?;
        if !is_verilog_identifier(&name) {
            return Err(PlanError::InvalidIdentifier {
                path: p(),
                field: field("name"),
                name,
            });
        }
        if !seen.insert(name_key(&name)) {
            return Err(PlanError::DuplicateName {
                path: p(),
                field: field("name"),
                name,
            });
        }
        let unit_testbench = match sub.testbench {
            Some(tb) => Some(resolve_testbench(path, base, &field("testbench"), &tb)?),
            None => None,
        };
        submodules.push(SubmoduleSpec {
            name,
            interface: collapse_ws(&sub.interface),
            description: sub.description.trim().to_string(),
            unit_testbench,
            depth: i,
        });
    }

    Ok(Manifest {
        plan: HierarchyPlan {
            top: TopSpec {
                name: top_name,
                description: top_description,
                interface: collapse_ws(&top.interface),
                testbench: top_testbench,
            },
            submodules,
            source: PlanSource::Human,
        },
        nh_prompt: top.nh_prompt.trim().to_string(),
        tags: raw.tags,
        notes: raw.notes,
    })
}

fn required(path: &Path, field: &str, value: Option<String>) -> Result<String, PlanError> {
    match value.map(|v| v.trim().to_string()) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(PlanError::MissingField {
            path: path.to_path_buf(),
            field: field.to_string(),
        }),
    }
}

fn resolve_testbench(
    manifest: &Path,
    base: &Path,
    field: &str,
    rel: &str,
) -> Result<PathBuf, PlanError> {
    let tb = base.join(rel);
    if tb.is_file() {
        Ok(tb)
    } else {
        Err(PlanError::DanglingTestbench {
            path: manifest.to_path_buf(),
            field: field.to_string(),
            testbench: tb,
        })
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// Extraction from model output

static ITEM_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\s*)(?:(\d+)[.)]|([-*+•]))\s+(.*\S)\s*$").unwrap());
static MODULE_FRAGMENT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)").unwrap());
static PAREN_IDENT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*([A-Za-z_][A-Za-z0-9_$]*)\s*\)").unwrap());

#[derive(Clone, Copy, PartialEq, Eq)]
enum Marker {
    Numbered,
    Bulleted,
}

/// Items of the first list in `text`, marker stripped.
fn first_list(text: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut list: Option<(usize, Marker)> = None;
    for line in text.lines() {
        let parsed = ITEM_RE.captures(line).map(|c| {
            let indent = c[1].chars().count();
            let marker = if c.get(2).is_some() {
                Marker::Numbered
            } else {
                Marker::Bulleted
            };
            (indent, marker, c[4].to_string())
        });
        match (list, parsed) {
            (None, Some((indent, marker, body))) => {
                list = Some((indent, marker));
                items.push(body);
            }
            (None, None) => {}
            (Some((base, kind)), Some((indent, marker, body))) => {
                if indent == base && marker == kind {
                    items.push(body);
                } else if indent <= base {
                    break;
                }
            }
            (Some((base, _)), None) => {
                let indent = line.len() - line.trim_start().len();
                if !line.trim().is_empty() && indent <= base {
                    break;
                }
            }
        }
    }
    items
}

/// Description cut at the first separator.
fn leading_phrase(s: &str) -> String {
    let mut end = s.len();
    for sep in [":", " - ", " \u{2013} ", " \u{2014} ", "(", ",", ";", ". "] {
        if let Some(i) = s.find(sep) {
            end = end.min(i);
        }
    }
    s[..end].trim().trim_end_matches('.').trim().to_string()
}

/// Module name derived from free text: lowercase, runs of other characters
/// become one underscore.
pub fn synthesize_name(description: &str) -> String {
    let mut out = String::new();
    for c in description.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() {
        "submodule".to_string()
    } else if trimmed.starts_with(|c: char| c.is_ascii_digit()) {
        format!("m_{trimmed}")
    } else {
        trimmed.to_string()
    }
}

/// Balanced parenthesized group starting at `open` (which must be '(').
fn balanced_group(s: &str, open: usize) -> Option<&str> {
    let mut depth = 0usize;
    for (i, c) in s[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[open..=open + i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_item(raw: &str, depth: usize) -> SubmoduleSpec {
    let item: String = raw.chars().filter(|c| *c != '*' && *c != '`').collect();
    let item = item.trim();

    if let Some(m) = MODULE_FRAGMENT_RE.captures(item) {
        let whole = m.get(0).unwrap();
        let name = m[1].to_string();
        let rest = &item[whole.end()..];
        let ports = rest
            .find(|c: char| !c.is_whitespace())
            .filter(|&i| rest[i..].starts_with('('))
            .and_then(|i| balanced_group(rest, i));
        let interface = collapse_ws(&format!("{name}{}", ports.unwrap_or("()")));
        let mut description = leading_phrase(&item[..whole.start()]);
        if description.is_empty() {
            description = name.clone();
        }
        return SubmoduleSpec {
            name,
            interface,
            description,
            unit_testbench: None,
            depth,
        };
    }

    if let Some(m) = PAREN_IDENT_RE.captures(item) {
        let name = m[1].to_string();
        let mut description = leading_phrase(&item[..m.get(0).unwrap().start()]);
        if description.is_empty() {
            description = name.clone();
        }
        return SubmoduleSpec {
            name,
            interface: String::new(),
            description,
            unit_testbench: None,
            depth,
        };
    }

    let description = leading_phrase(item);
    SubmoduleSpec {
        name: synthesize_name(&description),
        interface: String::new(),
        description,
        unit_testbench: None,
        depth,
    }
}

/// Parses the first numbered or bulleted list in a model response into a plan.
pub fn extract_plan_from_text(text: &str, top: &TopSpec) -> Result<HierarchyPlan, PlanError> {
    let items = first_list(text);
    if items.is_empty() {
        return Err(PlanError::NoListFound);
    }
    let mut seen = HashSet::new();
    let mut submodules = Vec::new();
    for raw in items {
        let spec = parse_item(&raw, submodules.len());
        if !seen.insert(name_key(&spec.name)) {
            log::warn!("plan extraction: dropping repeated submodule '{}'", spec.name);
            continue;
        }
        submodules.push(spec);
    }
    Ok(HierarchyPlan {
        top: top.clone(),
        submodules,
        source: PlanSource::Llm,
    })
}

/// Numbered-list rendering that `extract_plan_from_text` reads back unchanged.
pub fn render_numbered_list(plan: &HierarchyPlan) -> String {
    let mut out = String::new();
    for (i, s) in plan.submodules.iter().enumerate() {
        let n = i + 1;
        if !s.interface.is_empty() {
            let _ = writeln!(out, "{n}. {}: module {}", s.description, s.interface);
        } else if s.name_is_synthesized() {
            let _ = writeln!(out, "{n}. {}", s.description);
        } else {
            let _ = writeln!(out, "{n}. {} ({})", s.description, s.name);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Grading

const STOPWORDS: &[&str] = &[
    "to", "x", "by", "of", "the", "a", "an", "and", "for", "module", "level", "top", "bit", "b",
];

/// Matching key: lowercase alphabetic words in order (stopwords dropped,
/// "multiplexer" folded to "mux") followed by the numeric tokens. So
/// "2-to-1 mux", "mux2_1", "mux2to1" and "2-to-1 Multiplexer" share a key.
pub fn name_key(s: &str) -> String {
    let mut words = String::new();
    let mut numbers: Vec<String> = Vec::new();
    let lower = s.to_ascii_lowercase();
    let mut chars = lower.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_ascii_alphabetic() {
            let mut w = String::new();
            while let Some(&c) = chars.peek().filter(|c| c.is_ascii_alphabetic()) {
                w.push(c);
                chars.next();
            }
            let w = match w.as_str() {
                "multiplexer" | "multiplexor" => "mux".to_string(),
                "demultiplexer" | "demultiplexor" => "demux".to_string(),
                _ => w,
            };
            if !STOPWORDS.contains(&w.as_str()) {
                words.push_str(&w);
            }
        } else if c.is_ascii_digit() {
            let mut d = String::new();
            while let Some(&c) = chars.peek().filter(|c| c.is_ascii_digit()) {
                d.push(c);
                chars.next();
            }
            let d = d.trim_start_matches('0');
            numbers.push(if d.is_empty() { "0".into() } else { d.into() });
        } else {
            chars.next();
        }
    }
    format!("{words}|{}", numbers.join("-"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanComparison {
    /// (golden name, candidate name)
    pub matched: Vec<(String, String)>,
    /// Labels of golden submodules with no counterpart.
    pub missing: Vec<String>,
    /// Labels of candidate submodules with no counterpart.
    pub extraneous: Vec<String>,
    pub exact: bool,
}

fn specs_match(golden: &SubmoduleSpec, candidate: &SubmoduleSpec) -> bool {
    if name_key(&golden.name) == name_key(&candidate.name) {
        return true;
    }
    // Descriptions only count when the candidate carried no identifier.
    candidate.name_is_synthesized()
        && !candidate.description.is_empty()
        && !golden.description.is_empty()
        && name_key(&golden.description) == name_key(&candidate.description)
}

/// Order-insensitive comparison of submodule sets.
pub fn compare_plans(golden: &HierarchyPlan, candidate: &HierarchyPlan) -> PlanComparison {
    let mut taken = vec![false; candidate.submodules.len()];
    let mut matched = Vec::new();
    let mut missing = Vec::new();
    for g in &golden.submodules {
        let hit = candidate
            .submodules
            .iter()
            .enumerate()
            .find(|(i, c)| !taken[*i] && specs_match(g, c));
        match hit {
            Some((i, c)) => {
                taken[i] = true;
                matched.push((g.name.clone(), c.name.clone()));
            }
            None => missing.push(g.label().to_string()),
        }
    }
    let extraneous: Vec<String> = candidate
        .submodules
        .iter()
        .zip(&taken)
        .filter(|(_, t)| !**t)
        .map(|(c, _)| c.label().to_string())
        .collect();
    let exact = missing.is_empty() && extraneous.is_empty();
    PlanComparison {
        matched,
        missing,
        extraneous,
        exact,
    }
}

/// Fraction of candidates that match the golden plan exactly.
pub fn plan_accuracy(golden: &HierarchyPlan, candidates: &[HierarchyPlan]) -> Result<f64, PlanError> {
    if candidates.is_empty() {
        return Err(PlanError::NoCandidates);
    }
    let exact = candidates
        .iter()
        .filter(|c| compare_plans(golden, c).exact)
        .count();
    Ok(exact as f64 / candidates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn top() -> TopSpec {
        TopSpec {
            name: "mux64_1".into(),
            description: "64-to-1 multiplexer".into(),
            interface: String::new(),
            testbench: PathBuf::from("tb.v"),
        }
    }

    fn golden_mux() -> HierarchyPlan {
        let rows = [
            ("mux2_1", "2-to-1 mux"),
            ("mux4_1", "4-to-1 mux"),
            ("mux8_1", "8-to-1 mux"),
            ("mux16_1", "16-to-1 mux"),
            ("mux32_1", "32-to-1 mux"),
            ("mux64_1", "64-to-1 mux"),
        ];
        HierarchyPlan {
            top: top(),
            submodules: rows
                .iter()
                .enumerate()
                .map(|(i, (n, d))| SubmoduleSpec {
                    name: n.to_string(),
                    interface: String::new(),
                    description: d.to_string(),
                    unit_testbench: None,
                    depth: i,
                })
                .collect(),
            source: PlanSource::Human,
        }
    }

    #[test]
    fn identifiers() {
        assert!(is_verilog_identifier("mux2_1"));
        assert!(is_verilog_identifier("_x$1"));
        assert!(!is_verilog_identifier("2mux"));
        assert!(!is_verilog_identifier(""));
        assert!(!is_verilog_identifier("a-b"));
    }

    #[test]
    fn extracts_numbered_with_identifiers() {
        let plan = extract_plan_from_text(
            "1. 2-to-1 multiplexer (mux2_1)\n2. 4-to-1 multiplexer (mux4_1)",
            &top(),
        )
        .unwrap();
        let names: Vec<_> = plan.submodules.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["mux2_1", "mux4_1"]);
        assert_eq!(plan.submodules[0].description, "2-to-1 multiplexer");
        assert_eq!(plan.source, PlanSource::Llm);
    }

    #[test]
    fn extracts_bullets_with_synthesized_names() {
        let plan = extract_plan_from_text(
            "- Baud rate generator\n- Receiver\n- Transmitter",
            &top(),
        )
        .unwrap();
        let names: Vec<_> = plan.submodules.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["baud_rate_generator", "receiver", "transmitter"]);
    }

    #[test]
    fn prose_is_extraction_failure() {
        let err = extract_plan_from_text(
            "A UART needs a baud generator, a receiver and a transmitter. 1 more thing.",
            &top(),
        );
        assert!(matches!(err, Err(PlanError::NoListFound)));
    }

    #[test]
    fn takes_only_first_list() {
        let text = "Here is the plan:\n\n1. ALU: module alu(input [15:0] a, input [15:0] b, output [15:0] y)\n   - handles add/sub\n2. **Register file** (regfile)\n\nNotes:\n- keep it simple\n- done";
        let plan = extract_plan_from_text(text, &top()).unwrap();
        assert_eq!(plan.submodules.len(), 2);
        assert_eq!(plan.submodules[0].name, "alu");
        assert_eq!(
            plan.submodules[0].interface,
            "alu(input [15:0] a, input [15:0] b, output [15:0] y)"
        );
        assert_eq!(plan.submodules[0].description, "ALU");
        assert_eq!(plan.submodules[1].name, "regfile");
        assert_eq!(plan.submodules[1].description, "Register file");
    }

    #[test]
    fn digit_leading_description_gets_legal_name() {
        let plan = extract_plan_from_text("1) 8-bit barrel shifter\n2) Rotation control", &top())
            .unwrap();
        assert_eq!(plan.submodules[0].name, "m_8_bit_barrel_shifter");
        assert!(plan.submodules.iter().all(|s| is_verilog_identifier(&s.name)));
    }

    #[test]
    fn keys_unify_naming_styles() {
        let k = name_key("mux2_1");
        for other in ["2-to-1 mux", "2-to-1 Multiplexer", "MUX2to1", "mux_2_1"] {
            assert_eq!(name_key(other), k, "{other}");
        }
        assert_eq!(name_key("decoder2to4"), name_key("2-to-4 decoder"));
        assert_eq!(name_key("4x4 systolic array"), name_key("systolic_array_4x4"));
        assert_ne!(name_key("mux2_1"), name_key("mux4_1"));
        assert_ne!(name_key("decoder2to4"), name_key("decoder4to2"));
    }

    #[test]
    fn compare_examples() {
        let golden = golden_mux();
        let mut same = golden.clone();
        for s in &mut same.submodules {
            s.name = s.name.to_uppercase();
        }
        assert!(compare_plans(&golden, &same).exact);

        let mut missing = golden.clone();
        missing.submodules.retain(|s| s.name != "mux16_1");
        let cmp = compare_plans(&golden, &missing);
        assert_eq!(cmp.missing, ["16-to-1 mux"]);
        assert!(!cmp.exact);

        let mut extra = golden.clone();
        extra.submodules.push(SubmoduleSpec {
            name: "output_register".into(),
            interface: String::new(),
            description: "output_register".into(),
            unit_testbench: None,
            depth: 6,
        });
        let cmp = compare_plans(&golden, &extra);
        assert_eq!(cmp.extraneous, ["output_register"]);
        assert!(!cmp.exact);
    }

    #[test]
    fn description_match_only_without_identifier() {
        let golden = HierarchyPlan {
            submodules: vec![SubmoduleSpec {
                name: "baud_gen".into(),
                interface: String::new(),
                description: "Baud Rate Generator".into(),
                unit_testbench: None,
                depth: 0,
            }],
            ..golden_mux()
        };
        let synthesized = extract_plan_from_text("- Baud rate generator", &top()).unwrap();
        assert!(compare_plans(&golden, &synthesized).exact);
        let named = extract_plan_from_text("- Baud rate generator (clkdiv)", &top()).unwrap();
        assert!(!compare_plans(&golden, &named).exact);
    }

    #[test]
    fn accuracy() {
        let golden = golden_mux();
        let mut wrong = golden.clone();
        wrong.submodules.pop();
        let mut cands = vec![golden.clone(); 17];
        cands.extend(vec![wrong.clone(); 3]);
        assert!((plan_accuracy(&golden, &cands).unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(plan_accuracy(&golden, &vec![wrong; 20]).unwrap(), 0.0);
        assert_eq!(plan_accuracy(&golden, &vec![golden.clone(); 20]).unwrap(), 1.0);
        assert!(matches!(plan_accuracy(&golden, &[]), Err(PlanError::NoCandidates)));
    }

    fn arb_item() -> impl Strategy<Value = String> {
        let word = "[A-Za-z][a-z0-9]{0,7}";
        let desc = proptest::collection::vec(word, 1..4).prop_map(|w| w.join(" "));
        let ident = "[a-z_][a-z0-9_]{0,10}";
        prop_oneof![
            desc.clone(),
            (desc.clone(), ident).prop_map(|(d, i)| format!("{d} ({i})")),
            (desc, ident, "[a-z ,\\[\\]0-9:]{0,20}")
                .prop_map(|(d, i, p)| format!("{d}: module {i}(input {p})")),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_is_fixed_point(items in proptest::collection::vec(arb_item(), 1..8)) {
            let text: String = items.iter().enumerate().map(|(i, s)| format!("{}. {s}\n", i + 1)).collect();
            let once = extract_plan_from_text(&text, &top()).unwrap();
            let twice = extract_plan_from_text(&render_numbered_list(&once), &top()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn compare_is_reflexive_and_disjoint(items in proptest::collection::vec(arb_item(), 1..8)) {
            let text: String = items.iter().map(|s| format!("- {s}\n")).collect();
            let plan = extract_plan_from_text(&text, &top()).unwrap();
            let cmp = compare_plans(&plan, &plan);
            prop_assert!(cmp.exact);
            prop_assert_eq!(cmp.matched.len() + cmp.missing.len(), plan.submodules.len());
            prop_assert!((plan_accuracy(&plan, &vec![plan.clone(); 3]).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
