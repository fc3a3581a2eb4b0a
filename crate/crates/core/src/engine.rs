// SPDX-License-Identifier: Apache-2.0

//! The generation pipeline. Each run acquires a plan (none, from the
//! manifest, or from the model), walks the submodules in order through a
//! generate → extract → test → fix loop, integrates the top module, and
//! records timing, tokens and attempts.
//!
//! Stages: plan acquisition, prompt rendering, generation, extraction,
//! testing, diagnosis and repair, commit, integration.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::bench::BenchmarkDef;
use crate::llm::{Completion, LlmClient, LlmError};
use crate::plan::{extract_plan_from_text, name_key, HierarchyPlan, PlanSource};
use crate::prompts::{
    fix_prompt, flat_prompt, integration_prompt, plan_request_prompt, step_prompt, Message,
    PromptError, PromptMode, RenderedPrompt, Role,
};
use crate::sim::{Diagnostic, Phase, SimError, SimOutcome, Simulator, Verdict, DEFAULT_TIMEOUT};
use crate::vcode::{extract_units, filter_target, VcodeError, VerilogUnit, Workfile, WORKFILE_NAME};

pub const RUN_LOG_NAME: &str = "run.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptingMode {
    Nh,
    Hdhp,
    Pghp,
}

impl PromptingMode {
    pub fn is_hierarchical(self) -> bool {
        self != PromptingMode::Nh
    }
}

impl fmt::Display for PromptingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptingMode::Nh => "nh",
            PromptingMode::Hdhp => "hdhp",
            PromptingMode::Pghp => "pghp",
        })
    }
}

impl FromStr for PromptingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nh" => Ok(PromptingMode::Nh),
            "hdhp" => Ok(PromptingMode::Hdhp),
            "pghp" => Ok(PromptingMode::Pghp),
            other => Err(format!("unknown mode '{other}' (expected nh, hdhp or pghp)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("fix_budget must be at least 1")]
    ZeroFixBudget,
    #[error("generation_budget must be at least 1")]
    ZeroGenerationBudget,
    #[error("workspace {0} already holds a run")]
    WorkspaceInUse(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Vcode(#[from] VcodeError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{0}")]
    ToolMissing(String),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: PromptingMode,
    pub prompt_mode: PromptMode,
    /// Attempts per module, first generation included.
    pub fix_budget: u32,
    /// Plan-request attempts in PGHP before giving up.
    pub generation_budget: u32,
    /// Fresh directory for this run.
    pub workspace: PathBuf,
    pub timeout: Duration,
    /// In PGHP, put each first instance through a compile-only loop.
    pub pghp_compile_screen: bool,
    /// Recorded into the run record for provenance.
    pub transcript_path: Option<PathBuf>,
}

impl EngineConfig {
    pub fn new(mode: PromptingMode, workspace: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            prompt_mode: PromptMode::Conversational,
            fix_budget: 10,
            generation_budget: 3,
            workspace: workspace.into(),
            timeout: DEFAULT_TIMEOUT,
            pghp_compile_screen: false,
            transcript_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.fix_budget == 0 {
            return Err(EngineError::ZeroFixBudget);
        }
        if self.generation_budget == 0 {
            return Err(EngineError::ZeroGenerationBudget);
        }
        Ok(())
    }
}

/// Attempts made on one module and what each produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackState {
    pub attempts: u32,
    pub history: Vec<(String, SimOutcome)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "module")]
pub enum FailureReason {
    /// A module exhausted its fix budget.
    DesignFailed(String),
    PlanExtractionFailed,
    ToolMissing,
    TransportError,
    InternalError,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::DesignFailed(m) => write!(f, "design_failed ({m})"),
            FailureReason::PlanExtractionFailed => f.write_str("plan_extraction_failed"),
            FailureReason::ToolMissing => f.write_str("tool_missing"),
            FailureReason::TransportError => f.write_str("transport_error"),
            FailureReason::InternalError => f.write_str("internal_error"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub benchmark_id: String,
    pub model_id: String,
    pub mode: PromptingMode,
    pub iteration: u32,
    pub success: bool,
    pub wall_time: f64,
    pub per_module_attempts: BTreeMap<String, u32>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub approximate_tokens: bool,
    pub plan_used: Option<HierarchyPlan>,
    pub transcript_path: Option<PathBuf>,
    pub failure_reason: Option<FailureReason>,
    pub failure_detail: Option<String>,
}

impl RunRecord {
    /// Copy with wall time zeroed, for comparing replayed runs.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}

/// Line-delimited audit log in the run workspace.
struct RunLog {
    file: File,
    path: PathBuf,
}

impl RunLog {
    fn create(path: PathBuf) -> Result<Self, EngineError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| EngineError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(Self { file, path })
    }

    fn event(&mut self, value: serde_json::Value) {
        if let Err(e) = writeln!(self.file, "{value}") {
            log::warn!("{}: {e}", self.path.display());
        }
    }
}

/// Model access plus the bookkeeping shared by every step of a run.
struct Session<'a> {
    llm: &'a mut dyn LlmClient,
    sim: &'a Simulator,
    config: &'a EngineConfig,
    history: Vec<Message>,
    input_tokens: u64,
    output_tokens: u64,
    approximate: bool,
    log: RunLog,
    step: usize,
}

impl Session<'_> {
    fn ask(&mut self, prompt: &RenderedPrompt) -> Result<Completion, LlmError> {
        let full = prompt.after_history(&self.history);
        let c = self.llm.complete(&full)?;
        self.input_tokens += c.input_tokens;
        self.output_tokens += c.output_tokens;
        self.approximate |= c.approximate;
        if let Some(msgs) = full.messages() {
            self.history = msgs.to_vec();
            self.history.push(Message::new(Role::Assistant, c.text.clone()));
        }
        Ok(c)
    }

    /// Verilog source implied by a response. Completion prompts end in an
    /// open header and stop before `endmodule`, so both are restored.
    fn response_code(&self, module: &str, text: &str) -> String {
        match self.config.prompt_mode {
            PromptMode::Conversational => text.to_string(),
            PromptMode::Completion => {
                let mut code = format!("module {module}({text}");
                if !code.trim_end().ends_with("endmodule") {
                    if !code.ends_with('\n') {
                        code.push('\n');
                    }
                    code.push_str("endmodule");
                }
                code
            }
        }
    }
}

fn failed_extraction(message: String) -> SimOutcome {
    SimOutcome {
        verdict: Verdict::CompileError,
        diagnostics: vec![Diagnostic::raw(message, Phase::Compile)],
        stdout: String::new(),
        stderr: String::new(),
        duration: 0.0,
    }
}

/// What a feedback loop is asked to produce.
struct Target<'p> {
    name: &'p str,
    testbench: Option<&'p Path>,
    /// Reject units that are not named `name`.
    strict_name: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Picks the target unit out of a response, or explains why none fits.
fn select_unit(code: &str, target: &Target) -> Result<VerilogUnit, SimOutcome> {
    let units = extract_units(code);
    if units.is_empty() {
        return Err(failed_extraction(format!(
            "the response contains no complete module {}...endmodule block",
            target.name
        )));
    }
    match filter_target(&units, target.name) {
        Ok(sel) if target.strict_name && sel.unit.name != target.name => Err(failed_extraction(format!(
            "expected a module named {} but the response defines {}",
            target.name, sel.unit.name
        ))),
        Ok(sel) => Ok(sel.unit),
        Err(e) => Err(failed_extraction(e.to_string())),
    }
}

/// Generates `target` until it passes its check or the fix budget runs
/// out. Only a passing unit is committed to `workfile`.
fn feedback_loop(
    session: &mut Session,
    target: &Target,
    workfile: &mut Workfile,
    first_prompt: RenderedPrompt,
) -> Result<(Option<VerilogUnit>, FeedbackState), EngineError> {
    let scratch_dir = session.config.workspace.join("scratch").join(target.name);
    let mut state = FeedbackState::default();
    let mut prompt = first_prompt;
    while state.attempts < session.config.fix_budget {
        state.attempts += 1;
        let started = Instant::now();
        let completion = session.ask(&prompt)?;
        let code = session.response_code(target.name, &completion.text);
        let (unit, outcome) = match select_unit(&code, target) {
            Ok(unit) => {
                let mut scratch = workfile.relocated(scratch_dir.join(WORKFILE_NAME));
                scratch.insert(unit.clone());
                scratch.save()?;
                let outcome = match target.testbench {
                    Some(tb) => session.sim.test_unit(&scratch.path, tb, session.config.timeout)?,
                    None => session.sim.compile_check(&scratch.path)?,
                };
                (Some(unit), outcome)
            }
            Err(outcome) => (None, outcome),
        };
        session.log.event(json!({
            "event": "attempt",
            "step": session.step,
            "module": target.name,
            "attempt": state.attempts,
            "verdict": outcome.verdict,
            "input_tokens": completion.input_tokens,
            "output_tokens": completion.output_tokens,
            "seconds": started.elapsed().as_secs_f64(),
            "diagnostics": outcome.diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>(),
        }));
        if outcome.verdict == Verdict::ToolMissing {
            let msg = outcome
                .diagnostics
                .first()
                .map(|d| d.message.clone())
                .unwrap_or_else(|| "simulator missing".into());
            return Err(EngineError::ToolMissing(msg));
        }
        let passed = outcome.passed();
        let failing_code = unit.as_ref().map_or(code.clone(), |u| u.body.clone());
        let diagnostics = outcome.diagnostics.clone();
        state.history.push((code, outcome));
        if passed {
            let unit = unit.expect("a passing outcome always has a unit");
            workfile.append(unit.clone())?;
            return Ok((Some(unit), state));
        }
        prompt = fix_prompt(target.name, &failing_code, &diagnostics, session.config.prompt_mode)?;
    }
    Ok((None, state))
}

enum Outcome {
    Success,
    Failed(FailureReason, String),
}

/// Executes one full pipeline run. Never panics on model or design
/// failures; those end up in the record.
pub fn run(
    config: &EngineConfig,
    bench: &BenchmarkDef,
    llm: &mut dyn LlmClient,
    sim: &Simulator,
) -> Result<RunRecord, EngineError> {
    config.validate()?;
    let ws = &config.workspace;
    if ws.join(WORKFILE_NAME).exists() || ws.join(RUN_LOG_NAME).exists() {
        return Err(EngineError::WorkspaceInUse(ws.clone()));
    }
    std::fs::create_dir_all(ws).map_err(io_err(ws))?;
    let started = Instant::now();
    let model_id = llm.model_id().to_string();
    let mut session = Session {
        llm,
        sim,
        config,
        history: Vec::new(),
        input_tokens: 0,
        output_tokens: 0,
        approximate: false,
        log: RunLog::create(ws.join(RUN_LOG_NAME))?,
        step: 0,
    };
    session.log.event(json!({
        "event": "start",
        "benchmark": bench.id,
        "mode": config.mode,
        "prompt_mode": config.prompt_mode,
        "model": model_id,
        "top": bench.plan.top.name,
        "top_testbench": bench.plan.top.testbench,
    }));
    let mut workfile = Workfile::new(ws.join(WORKFILE_NAME));
    workfile.save()?;
    let mut attempts = BTreeMap::new();
    let mut plan_used = None;

    let result = match config.mode {
        PromptingMode::Nh => run_flat(&mut session, bench, &mut workfile, &mut attempts, &mut plan_used),
        PromptingMode::Hdhp => {
            plan_used = Some(bench.plan.clone());
            run_hierarchy(&mut session, &bench.plan, &mut workfile, &mut attempts, false)
        }
        PromptingMode::Pghp => run_generated(&mut session, bench, &mut workfile, &mut attempts, &mut plan_used),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(EngineError::Llm(e)) => Outcome::Failed(FailureReason::TransportError, e.to_string()),
        Err(EngineError::ToolMissing(m)) => Outcome::Failed(FailureReason::ToolMissing, m),
        Err(e) => Outcome::Failed(FailureReason::InternalError, e.to_string()),
    };
    let (success, failure_reason, failure_detail) = match outcome {
        Outcome::Success => (true, None, None),
        Outcome::Failed(r, d) => (false, Some(r), Some(d)),
    };
    let record = RunRecord {
        benchmark_id: bench.id.clone(),
        model_id,
        mode: config.mode,
        iteration: 0,
        success,
        wall_time: started.elapsed().as_secs_f64(),
        per_module_attempts: attempts,
        input_tokens: session.input_tokens,
        output_tokens: session.output_tokens,
        approximate_tokens: session.approximate,
        plan_used,
        transcript_path: config.transcript_path.clone(),
        failure_reason,
        failure_detail,
    };
    session.log.event(json!({
        "event": "finish",
        "success": record.success,
        "failure": record.failure_reason.as_ref().map(ToString::to_string),
        "input_tokens": record.input_tokens,
        "output_tokens": record.output_tokens,
        "seconds": record.wall_time,
    }));
    Ok(record)
}

fn module_failed(name: &str, state: &FeedbackState) -> Outcome {
    let last = state
        .history
        .last()
        .map(|(_, o)| o.verdict.to_string())
        .unwrap_or_default();
    Outcome::Failed(
        FailureReason::DesignFailed(name.to_string()),
        format!("{name} failed after {} attempts (last verdict {last})", state.attempts),
    )
}

fn run_flat(
    session: &mut Session,
    bench: &BenchmarkDef,
    workfile: &mut Workfile,
    attempts: &mut BTreeMap<String, u32>,
    plan_used: &mut Option<HierarchyPlan>,
) -> Result<Outcome, EngineError> {
    let top = &bench.plan.top;
    *plan_used = Some(HierarchyPlan {
        top: top.clone(),
        submodules: Vec::new(),
        source: PlanSource::Human,
    });
    let prompt = flat_prompt(&bench.nh_prompt, &top.name, session.config.prompt_mode);
    let target = Target {
        name: &top.name,
        testbench: Some(&top.testbench),
        strict_name: true,
    };
    let (unit, state) = feedback_loop(session, &target, workfile, prompt)?;
    attempts.insert(top.name.clone(), state.attempts);
    Ok(match unit {
        Some(_) => Outcome::Success,
        None => module_failed(&top.name, &state),
    })
}

/// Walks a plan's submodules, then the top. With `first_instance`, each
/// submodule is generated once and kept untested (unless screening is on).
fn run_hierarchy(
    session: &mut Session,
    plan: &HierarchyPlan,
    workfile: &mut Workfile,
    attempts: &mut BTreeMap<String, u32>,
    first_instance: bool,
) -> Result<Outcome, EngineError> {
    let mode = session.config.prompt_mode;
    let n = plan.submodules.len();
    let top_is_last = plan.ends_with_top();
    for (i, spec) in plan.submodules.iter().enumerate() {
        session.step = i;
        let is_top = top_is_last && i + 1 == n;
        let prompt = step_prompt(plan, i, workfile, mode)?;
        if first_instance && !is_top && !session.config.pghp_compile_screen {
            let completion = session.ask(&prompt)?;
            let code = session.response_code(&spec.name, &completion.text);
            let target = Target {
                name: &spec.name,
                testbench: None,
                strict_name: false,
            };
            attempts.insert(spec.name.clone(), 1);
            let selected = select_unit(&code, &target);
            session.log.event(json!({
                "event": "first_instance",
                "step": i,
                "module": spec.name,
                "kept": selected.as_ref().map(|u| u.name.clone()).ok(),
                "input_tokens": completion.input_tokens,
                "output_tokens": completion.output_tokens,
            }));
            match selected {
                Ok(mut unit) => {
                    if unit.name != spec.name {
                        log::warn!("keeping {} for planned submodule {}", unit.name, spec.name);
                        unit = rename_unit(&unit, &spec.name);
                    }
                    workfile.append(unit)?;
                }
                Err(outcome) => {
                    let why = outcome.diagnostics[0].message.clone();
                    return Ok(Outcome::Failed(FailureReason::DesignFailed(spec.name.clone()), why));
                }
            }
            continue;
        }
        let testbench = if is_top {
            Some(plan.top.testbench.as_path())
        } else {
            spec.unit_testbench.as_deref()
        };
        let target = Target {
            name: &spec.name,
            testbench,
            strict_name: true,
        };
        let (unit, state) = feedback_loop(session, &target, workfile, prompt)?;
        attempts.insert(spec.name.clone(), state.attempts);
        if unit.is_none() {
            return Ok(module_failed(&spec.name, &state));
        }
    }
    if top_is_last {
        return Ok(Outcome::Success);
    }

    session.step = n;
    let prompt = integration_prompt(plan, workfile, mode)?;
    let target = Target {
        name: &plan.top.name,
        testbench: Some(&plan.top.testbench),
        strict_name: true,
    };
    let (unit, state) = feedback_loop(session, &target, workfile, prompt)?;
    attempts.insert(plan.top.name.clone(), state.attempts);
    Ok(match unit {
        Some(_) => Outcome::Success,
        None => module_failed(&plan.top.name, &state),
    })
}

/// Renames a unit's declaration so later prompts and instantiations can
/// refer to it by its planned name.
fn rename_unit(unit: &VerilogUnit, name: &str) -> VerilogUnit {
    let rename = |s: &str| {
        let skip = "module".len();
        let at = skip + s[skip..].find(&unit.name).expect("the header contains the unit name");
        format!("{}{name}{}", &s[..at], &s[at + unit.name.len()..])
    };
    VerilogUnit {
        name: name.to_string(),
        header: rename(&unit.header),
        body: rename(&unit.body),
    }
}

fn run_generated(
    session: &mut Session,
    bench: &BenchmarkDef,
    workfile: &mut Workfile,
    attempts: &mut BTreeMap<String, u32>,
    plan_used: &mut Option<HierarchyPlan>,
) -> Result<Outcome, EngineError> {
    let top = &bench.plan.top;
    let request = plan_request_prompt(&top.description, session.config.prompt_mode)?;
    let mut plan = None;
    for attempt in 1..=session.config.generation_budget {
        let completion = session.ask(&request)?;
        let parsed = extract_plan_from_text(&completion.text, top);
        session.log.event(json!({
            "event": "plan_request",
            "attempt": attempt,
            "parsed": parsed.as_ref().map(|p| p.submodules.len()).ok(),
            "input_tokens": completion.input_tokens,
            "output_tokens": completion.output_tokens,
        }));
        if let Ok(p) = parsed {
            plan = Some(p);
            break;
        }
    }
    let Some(mut plan) = plan else {
        return Ok(Outcome::Failed(
            FailureReason::PlanExtractionFailed,
            format!(
                "no usable plan in {} responses",
                session.config.generation_budget
            ),
        ));
    };
    // The top module is requested separately at integration.
    let top_key = name_key(&top.name);
    let desc_key = name_key(&top.description);
    plan.submodules
        .retain(|s| name_key(&s.name) != top_key && name_key(&s.name) != desc_key);
    for (i, s) in plan.submodules.iter_mut().enumerate() {
        s.depth = i;
    }
    *plan_used = Some(plan.clone());
    run_hierarchy(session, &plan, workfile, attempts, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_round_trip() {
        for m in [PromptingMode::Nh, PromptingMode::Hdhp, PromptingMode::Pghp] {
            assert_eq!(m.to_string().parse::<PromptingMode>().unwrap(), m);
        }
        assert!("flat".parse::<PromptingMode>().is_err());
    }

    #[test]
    fn config_defaults() {
        let c = EngineConfig::new(PromptingMode::Hdhp, "ws");
        assert_eq!(c.fix_budget, 10);
        assert_eq!(c.generation_budget, 3);
        assert!(!c.pghp_compile_screen);
        let mut z = c.clone();
        z.fix_budget = 0;
        assert!(matches!(z.validate(), Err(EngineError::ZeroFixBudget)));
    }

    #[test]
    fn rename_keeps_body() {
        let u = extract_units("module my_rx(input a, output b);\n assign b = a;\nendmodule").remove(0);
        let r = rename_unit(&u, "receiver");
        assert_eq!(r.body, "module receiver(input a, output b);\n assign b = a;\nendmodule");
        assert_eq!(extract_units(&r.body)[0].name, "receiver");
    }

    #[test]
    fn failure_reason_serialization() {
        let v = serde_json::to_value(FailureReason::DesignFailed("mux2_1".into())).unwrap();
        assert_eq!(v, json!({"kind": "design_failed", "module": "mux2_1"}));
        let v = serde_json::to_value(FailureReason::PlanExtractionFailed).unwrap();
        assert_eq!(v, json!({"kind": "plan_extraction_failed"}));
    }
}
