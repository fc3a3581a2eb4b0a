// SPDX-License-Identifier: Apache-2.0

//! Prompt rendering for every request the pipeline sends.
//!
//! Two shapes exist. Conversational prompts are message lists headed by the
//! system prompt; the engine keeps the running history and splices each new
//! turn onto it. Completion prompts are a single text that ends with an open
//! module header, so the model continues straight into the port list and
//! stops at `endmodule`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{HierarchyPlan, SubmoduleSpec};
use crate::sim::Diagnostic;
use crate::vcode::{stub_of, Workfile};

pub const SYSTEM_PROMPT: &str = "Our goal is to provide complete Verilog modules based on user-provided specifications. Only the specified module is necessary, no testbenches or supplementary modules are needed. Examples of compiler and simulation errors for a given module may be provided, in which case we will proceed to correct the module. All modules will be provided in their complete and correct form.";

const GLOBAL: &str = "We will be designing a {{top}} in Verilog using hierarchical submodules.";
const FIRST_REQUEST: &str = "We begin by generating a {{description}} with the following structure: module {{interface}}";
const RELAY_HEADER: &str = "The following Verilog implements a {{top}} utilizing hierarchical submodules. We have the following module(s) already available for use:";
const RELAY_PREVIOUS: &str = "We can then use that module hierarchically to generate a {{description}}:";
const NEXT_FROM_ONE: &str = "We can then use that module hierarchically to generate a {{description}} with the following structure: module {{interface}}";
const NEXT_REQUEST: &str = "We can then use these modules to hierarchically generate a {{description}} with the following structure: module {{interface}}";
const CHAT_NEXT_REQUEST: &str = "Please use the previous submodules to hierarchically generate a {{description}} with the following structure: module {{interface}}";
const AVAILABLE: &str = "We have the following module(s) already available for use:";
const INTEGRATION_REQUEST: &str = "Please use these modules to hierarchically generate the top-level {{top}} with the following structure: module {{interface}}";
const FLAT_TOP_REQUEST: &str = "Please generate the top-level {{top}} with the following structure: module {{interface}}";
const FIX_INTRO: &str = "The module {{name}} below failed its checks:";
const FIX_DIAGNOSTICS: &str = "The compiler and simulator reported:";
const FIX_REQUEST: &str = "Please provide the complete corrected {{name}} module.";
const PLAN_REQUEST: &str = "Please define the necessary submodules in a {{top}}.";
const PLAN_FORMAT: &str = "Answer with a numbered list in build order, one submodule per line, each giving a short description followed by its interface in the form \"module name(ports)\". List only the submodules, not the top-level module.";

/// Completion length ceiling requested unless configured otherwise.
pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("plan has no submodules")]
    EmptyPlan,
    #[error("step {step} is out of range for a plan with {len} submodules")]
    StepOutOfRange { step: usize, len: usize },
    #[error("submodule '{0}' has not been generated yet")]
    MissingPrior(String),
    #[error("top-level description is empty")]
    EmptyDescription,
    #[error("no diagnostics to report")]
    NoDiagnostics,
    #[error("template placeholder '{{{{{0}}}}}' has no value")]
    UnboundPlaceholder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Conversational,
    Completion,
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::Conversational => "conversational",
            PromptMode::Completion => "completion",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptBody {
    Messages(Vec<Message>),
    Completion(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub body: PromptBody,
    pub stop: Vec<String>,
}

impl RenderedPrompt {
    fn chat(user: String) -> Self {
        Self {
            body: PromptBody::Messages(vec![
                Message::new(Role::System, SYSTEM_PROMPT),
                Message::new(Role::User, user),
            ]),
            stop: Vec::new(),
        }
    }

    fn completion(text: String, stop_at_endmodule: bool) -> Self {
        Self {
            body: PromptBody::Completion(text),
            stop: if stop_at_endmodule {
                vec!["endmodule".to_string()]
            } else {
                Vec::new()
            },
        }
    }

    pub fn mode(&self) -> PromptMode {
        match self.body {
            PromptBody::Messages(_) => PromptMode::Conversational,
            PromptBody::Completion(_) => PromptMode::Completion,
        }
    }

    pub fn messages(&self) -> Option<&[Message]> {
        match &self.body {
            PromptBody::Messages(m) => Some(m),
            PromptBody::Completion(_) => None,
        }
    }

    pub fn completion_text(&self) -> Option<&str> {
        match &self.body {
            PromptBody::Completion(t) => Some(t),
            PromptBody::Messages(_) => None,
        }
    }

    /// Line-oriented serialization used for transcript digests and for
    /// reporting where two prompts diverge.
    pub fn canonical(&self) -> String {
        let mut out = format!("mode: {}\n", self.mode());
        for s in &self.stop {
            out.push_str(&format!("stop: {s}\n"));
        }
        match &self.body {
            PromptBody::Messages(msgs) => {
                for m in msgs {
                    out.push_str(&format!("--- {}\n{}\n", m.role.as_str(), m.text));
                }
            }
            PromptBody::Completion(t) => {
                out.push_str("--- text\n");
                out.push_str(t);
                out.push('\n');
            }
        }
        out
    }

    /// Appends this turn to an earlier conversation. The history keeps its
    /// own system message; completion prompts carry no history.
    pub fn after_history(&self, history: &[Message]) -> RenderedPrompt {
        match &self.body {
            PromptBody::Messages(turn) if !history.is_empty() => {
                let mut msgs = history.to_vec();
                msgs.extend(turn.iter().filter(|m| m.role != Role::System).cloned());
                RenderedPrompt {
                    body: PromptBody::Messages(msgs),
                    stop: self.stop.clone(),
                }
            }
            _ => self.clone(),
        }
    }

    /// Whole prompt as one string, for token estimates.
    pub fn flat_text(&self) -> String {
        match &self.body {
            PromptBody::Messages(msgs) => msgs
                .iter()
                .map(|m| m.text.as_str())
                .collect::<Vec<_>>()
                .join("\n"),
            PromptBody::Completion(t) => t.clone(),
        }
    }
}

/// Substitutes `{{key}}` placeholders in one pass; values are inserted
/// verbatim and never rescanned.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| PromptError::UnboundPlaceholder(after.to_string()))?;
        let key = &after[..close];
        let value = vars
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::UnboundPlaceholder(key.to_string()))?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    render_template(template, vars).expect("built-in templates bind every placeholder")
}

pub fn system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

/// The name part of an interface string such as `mux2_1(a, b)`.
fn open_header(name: &str) -> String {
    format!("module {name}(")
}

fn completion_preamble() -> String {
    format!("{SYSTEM_PROMPT}\n\n")
}

fn step_spec(plan: &HierarchyPlan, index: usize) -> Result<&SubmoduleSpec, PromptError> {
    plan.submodules.get(index).ok_or(PromptError::StepOutOfRange {
        step: index,
        len: plan.submodules.len(),
    })
}

/// Global prompt plus the request for the first submodule.
pub fn initial_prompt(plan: &HierarchyPlan, mode: PromptMode) -> Result<RenderedPrompt, PromptError> {
    let first = plan.submodules.first().ok_or(PromptError::EmptyPlan)?;
    let text = format!(
        "{} {}",
        fill(GLOBAL, &[("top", &plan.top.description)]),
        fill(
            FIRST_REQUEST,
            &[
                ("description", &first.description),
                ("interface", first.interface_or_name()),
            ]
        )
    );
    Ok(match mode {
        PromptMode::Conversational => RenderedPrompt::chat(text),
        PromptMode::Completion => RenderedPrompt::completion(
            format!("{}{text}\n{}", completion_preamble(), open_header(&first.name)),
            true,
        ),
    })
}

/// Request for submodule `step` (>= 1). Completion mode builds a relay
/// prompt: stubs for every submodule before `step - 1`, the full code of
/// `step - 1`, then the open header of `step`.
pub fn step_prompt(
    plan: &HierarchyPlan,
    step: usize,
    workfile: &Workfile,
    mode: PromptMode,
) -> Result<RenderedPrompt, PromptError> {
    if step == 0 {
        return initial_prompt(plan, mode);
    }
    let next = step_spec(plan, step)?;
    let prior: Vec<_> = plan.submodules[..step]
        .iter()
        .map(|s| {
            workfile
                .get(&s.name)
                .ok_or_else(|| PromptError::MissingPrior(s.name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let vars = [
        ("description", next.description.as_str()),
        ("interface", next.interface_or_name()),
    ];
    if mode == PromptMode::Conversational {
        return Ok(RenderedPrompt::chat(fill(CHAT_NEXT_REQUEST, &vars)));
    }

    let previous_spec = &plan.submodules[step - 1];
    let previous_unit = prior[step - 1];
    let mut text = completion_preamble();
    if step == 1 {
        text.push_str(&fill(GLOBAL, &[("top", &plan.top.description)]));
        text.push(' ');
        text.push_str(&fill(
            "We begin by generating a {{description}}:",
            &[("description", &previous_spec.description)],
        ));
        text.push('\n');
    } else {
        text.push_str(&fill(RELAY_HEADER, &[("top", &plan.top.description)]));
        text.push('\n');
        for unit in &prior[..step - 1] {
            text.push_str(&stub_of(unit));
            text.push('\n');
        }
        text.push_str(&fill(
            RELAY_PREVIOUS,
            &[("description", &previous_spec.description)],
        ));
        text.push('\n');
    }
    text.push_str(&previous_unit.body);
    text.push('\n');
    let request = if step == 1 { NEXT_FROM_ONE } else { NEXT_REQUEST };
    text.push_str(&fill(request, &vars));
    text.push('\n');
    text.push_str(&open_header(&next.name));
    Ok(RenderedPrompt::completion(text, true))
}

/// One diagnostic per line.
pub fn render_diagnostics(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Asks for a corrected version of a failing module.
pub fn fix_prompt(
    name: &str,
    unit_code: &str,
    diagnostics: &[Diagnostic],
    mode: PromptMode,
) -> Result<RenderedPrompt, PromptError> {
    if diagnostics.is_empty() {
        return Err(PromptError::NoDiagnostics);
    }
    let body = format!(
        "{}\n{}\n{}\n{}\n{}",
        fill(FIX_INTRO, &[("name", name)]),
        unit_code.trim_end(),
        FIX_DIAGNOSTICS,
        render_diagnostics(diagnostics),
        fill(FIX_REQUEST, &[("name", name)]),
    );
    Ok(match mode {
        PromptMode::Conversational => RenderedPrompt::chat(body),
        PromptMode::Completion => RenderedPrompt::completion(
            format!("{}{body}\n{}", completion_preamble(), open_header(name)),
            true,
        ),
    })
}

/// Requests the top module once every submodule is in the workfile.
pub fn integration_prompt(
    plan: &HierarchyPlan,
    workfile: &Workfile,
    mode: PromptMode,
) -> Result<RenderedPrompt, PromptError> {
    let stubs: Vec<String> = plan
        .submodules
        .iter()
        .map(|s| {
            workfile
                .get(&s.name)
                .map(stub_of)
                .ok_or_else(|| PromptError::MissingPrior(s.name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let top = &plan.top;
    let vars = [
        ("top", top.description.as_str()),
        ("interface", top.interface_or_name()),
    ];
    let mut text = String::new();
    if stubs.is_empty() {
        text.push_str(&fill(FLAT_TOP_REQUEST, &vars));
    } else {
        if mode == PromptMode::Completion {
            text.push_str(&fill(RELAY_HEADER, &[("top", &top.description)]));
        } else {
            text.push_str(AVAILABLE);
        }
        text.push('\n');
        for s in &stubs {
            text.push_str(s);
            text.push('\n');
        }
        text.push_str(&fill(INTEGRATION_REQUEST, &vars));
    }
    Ok(match mode {
        PromptMode::Conversational => RenderedPrompt::chat(text),
        PromptMode::Completion => RenderedPrompt::completion(
            format!("{}{text}\n{}", completion_preamble(), open_header(&top.name)),
            true,
        ),
    })
}

/// Flat request for the whole design.
pub fn flat_prompt(nh_prompt: &str, top_name: &str, mode: PromptMode) -> RenderedPrompt {
    match mode {
        PromptMode::Conversational => RenderedPrompt::chat(nh_prompt.to_string()),
        PromptMode::Completion => RenderedPrompt::completion(
            format!("{}{nh_prompt}\n{}", completion_preamble(), open_header(top_name)),
            true,
        ),
    }
}

/// Asks the model to propose its own decomposition.
pub fn plan_request_prompt(top_description: &str, mode: PromptMode) -> Result<RenderedPrompt, PromptError> {
    if top_description.trim().is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    let text = format!(
        "{}\n{}",
        fill(PLAN_REQUEST, &[("top", top_description.trim())]),
        PLAN_FORMAT
    );
    Ok(match mode {
        PromptMode::Conversational => RenderedPrompt::chat(text),
        PromptMode::Completion => {
            RenderedPrompt::completion(format!("{}{text}\n", completion_preamble()), false)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{PlanSource, TopSpec};
    use crate::sim::Phase;
    use crate::vcode::extract_units;

    fn spec(name: &str, interface: &str, description: &str, depth: usize) -> SubmoduleSpec {
        SubmoduleSpec {
            name: name.into(),
            interface: interface.into(),
            description: description.into(),
            unit_testbench: None,
            depth,
        }
    }

    fn mux_plan() -> HierarchyPlan {
        HierarchyPlan {
            top: TopSpec {
                name: "mux64_1".into(),
                description: "64-to-1 multiplexer".into(),
                interface: "mux64_1(input [5:0] sel, input [63:0] in, output out)".into(),
                testbench: "tb.v".into(),
            },
            submodules: vec![
                spec("mux2_1", "mux2_1(in1, in2, select, out)", "2-to-1 multiplexer", 0),
                spec("mux4_1", "mux4_1(input [1:0] sel, input [3:0] in, output out)", "4-to-1 multiplexer", 1),
            ],
            source: PlanSource::Human,
        }
    }

    #[test]
    fn system_prompt_text() {
        assert!(system_prompt()
            .starts_with("Our goal is to provide complete Verilog modules based on user-provided specifications."));
        assert!(system_prompt().contains("no testbenches or supplementary modules are needed"));
        assert!(system_prompt().contains("compiler and simulation errors for a given module may be provided"));
        assert!(!system_prompt().contains('\n'));
    }

    #[test]
    fn initial_chat_prompt() {
        let p = initial_prompt(&mux_plan(), PromptMode::Conversational).unwrap();
        let msgs = p.messages().unwrap();
        assert_eq!(msgs[0].text, SYSTEM_PROMPT);
        assert_eq!(
            msgs[1].text,
            "We will be designing a 64-to-1 multiplexer in Verilog using hierarchical submodules. We begin by generating a 2-to-1 multiplexer with the following structure: module mux2_1(in1, in2, select, out)"
        );
        assert!(p.stop.is_empty());
    }

    #[test]
    fn initial_completion_prompt() {
        let p = initial_prompt(&mux_plan(), PromptMode::Completion).unwrap();
        assert!(p.completion_text().unwrap().ends_with("\nmodule mux2_1("));
        assert_eq!(p.stop, ["endmodule"]);
    }

    #[test]
    fn empty_plan_rejected() {
        let mut plan = mux_plan();
        plan.submodules.clear();
        assert_eq!(
            initial_prompt(&plan, PromptMode::Completion),
            Err(PromptError::EmptyPlan)
        );
    }

    #[test]
    fn step_requires_prior_units() {
        let wf = Workfile::new("unused.v");
        assert_eq!(
            step_prompt(&mux_plan(), 1, &wf, PromptMode::Completion),
            Err(PromptError::MissingPrior("mux2_1".into()))
        );
    }

    #[test]
    fn fix_prompt_contents() {
        let diags: Vec<Diagnostic> = (1..=10)
            .map(|i| Diagnostic {
                file: Some("design.v".into()),
                line: Some(i),
                message: "syntax error".into(),
                phase: Phase::Compile,
            })
            .collect();
        let p = fix_prompt("mux2_1", "module mux2_1(input a)\nendmodule", &diags, PromptMode::Conversational)
            .unwrap();
        let text = &p.messages().unwrap()[1].text;
        assert!(text.contains("module mux2_1(input a)\nendmodule"));
        let mut last = 0;
        for i in 1..=10 {
            let at = text.find(&format!("design.v:{i}: syntax error\n")).unwrap();
            assert!(at >= last);
            last = at;
        }
        let raw = [Diagnostic {
            file: None,
            line: None,
            message: "TEST FAILED: expected 1 got 0".into(),
            phase: Phase::Simulate,
        }];
        let p = fix_prompt("m", "module m; endmodule", &raw, PromptMode::Completion).unwrap();
        assert!(p.completion_text().unwrap().contains("\nTEST FAILED: expected 1 got 0\n"));
        assert_eq!(
            fix_prompt("m", "x", &[], PromptMode::Completion),
            Err(PromptError::NoDiagnostics)
        );
    }

    #[test]
    fn integration_lists_stubs() {
        let plan = mux_plan();
        let mut wf = Workfile::new("unused.v");
        for u in extract_units(
            "module mux2_1(input in1, input in2, input select, output out);\nassign out = select ? in2 : in1;\nendmodule\nmodule mux4_1(input [1:0] sel, input [3:0] in, output out);\nendmodule",
        ) {
            wf.insert(u);
        }
        let p = integration_prompt(&plan, &wf, PromptMode::Completion).unwrap();
        let text = p.completion_text().unwrap();
        assert!(text.contains("module mux2_1(input in1, input in2, input select, output out);\n"));
        assert!(text.contains("module mux4_1(input [1:0] sel, input [3:0] in, output out);\n"));
        assert!(!text.contains("assign"));
        assert!(text.ends_with("module mux64_1("));

        let mut flat = plan.clone();
        flat.submodules.clear();
        let p = integration_prompt(&flat, &Workfile::new("x.v"), PromptMode::Conversational).unwrap();
        assert!(p.messages().unwrap()[1].text.starts_with("Please generate the top-level 64-to-1 multiplexer"));
    }

    #[test]
    fn plan_request() {
        let p = plan_request_prompt("16-bit single cycle MIPS processor", PromptMode::Conversational).unwrap();
        assert!(p.messages().unwrap()[1]
            .text
            .contains("Please define the necessary submodules in a 16-bit single cycle MIPS processor."));
        assert_eq!(
            plan_request_prompt("  ", PromptMode::Completion),
            Err(PromptError::EmptyDescription)
        );
    }

    #[test]
    fn template_rendering() {
        assert_eq!(
            render_template("a {{x}} b {{y}}", &[("x", "1"), ("y", "{{z}}")]).unwrap(),
            "a 1 b {{z}}"
        );
        assert_eq!(
            render_template("{{nope}}", &[]),
            Err(PromptError::UnboundPlaceholder("nope".into()))
        );
    }

    #[test]
    fn deterministic_canonical_form() {
        let a = initial_prompt(&mux_plan(), PromptMode::Completion).unwrap();
        let b = initial_prompt(&mux_plan(), PromptMode::Completion).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert!(a.canonical().starts_with("mode: completion\n"));
    }
}
