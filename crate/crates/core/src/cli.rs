// SPDX-License-Identifier: Apache-2.0

//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 the design (or model) failed, 2 the harness is
//! misconfigured or a tool is missing.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bench::{self, emit_report, find_benchmark, load_suite, run_suite, RunClient, SuiteRunSpec};
use crate::engine::{self, EngineConfig, FailureReason, PromptingMode, RunRecord, RUN_LOG_NAME};
use crate::llm::{HttpClient, LlmClient, LlmConfig, LlmError, Recorder, ReplayClient, ReplayMode};
use crate::metrics::CostRates;
use crate::plan::{compare_plans, extract_plan_from_text, read_manifest};
use crate::prompts::PromptMode;
use crate::sim::{Icarus, Simulator, Verilator};
use crate::vcode::WORKFILE_NAME;

#[derive(Debug, Parser)]
#[command(name = "rome", version, about = "Hierarchical prompting pipeline for Verilog generation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOptions,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOptions {
    /// TOML file whose [llm] table sets model defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root directory for run workspaces and bench output
    #[arg(long, global = true, default_value = "rome-out")]
    pub workspace_root: PathBuf,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Model endpoint base URL (OpenAI-compatible)
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Environment variable holding the API key (empty disables auth)
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
    /// Simulator backend: icarus or verilator [default: auto-detect]
    #[arg(long, global = true)]
    pub simulator: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Prompt style: conversational or completion
    #[arg(long, value_parser = parse_prompt_mode)]
    pub prompt_mode: Option<PromptMode>,
    /// Sampling temperature [default: 0.5]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Nucleus sampling threshold [default: 0.9]
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Completion token ceiling [default: 4096]
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Args, Clone)]
pub struct EngineArgs {
    /// Attempts per module, first generation included
    #[arg(long, default_value_t = 10)]
    pub fix_budget: u32,
    /// Plan-request attempts in pghp mode
    #[arg(long, default_value_t = 3)]
    pub generation_budget: u32,
    /// Simulation timeout in seconds
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    /// Compile-check each first-instance submodule in pghp mode
    #[arg(long)]
    pub compile_screen: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline once on one benchmark
    Run(RunArgs),
    /// Run the benchmark matrix and write reports
    Bench(BenchArgs),
    /// Grade model-proposed plans against a golden manifest
    EvalPlan(EvalPlanArgs),
    /// Re-check a finished run's design against its top testbench
    ReplayVerify(ReplayVerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Suite directory holding {id}/manifest.toml
    #[arg(long, default_value = "suites/rome")]
    pub suite: PathBuf,
    /// Benchmark id
    #[arg(long)]
    pub benchmark: String,
    /// Prompting mode: nh, hdhp or pghp
    #[arg(long)]
    pub mode: PromptingMode,
    /// Model id sent to the endpoint
    #[arg(long)]
    pub model: Option<String>,
    /// Serve completions from this transcript instead of the network
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Match transcript entries by order only
    #[arg(long)]
    pub lenient: bool,
    /// Append every exchange to this transcript
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Run workspace [default: {workspace-root}/{benchmark}-{mode}-N]
    #[arg(long)]
    pub workspace: Option<PathBuf>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Suite directory holding {id}/manifest.toml
    #[arg(long, default_value = "suites/rome")]
    pub suite: PathBuf,
    /// Benchmark ids [default: all]
    #[arg(long, value_delimiter = ',')]
    pub benchmarks: Vec<String>,
    /// Model ids
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Modes to run
    #[arg(long, value_delimiter = ',', default_value = "nh,hdhp")]
    pub modes: Vec<PromptingMode>,
    /// Runs per benchmark/model/mode cell
    #[arg(long, default_value_t = 10)]
    pub iterations: u32,
    /// k values for pass@k
    #[arg(long = "k", value_delimiter = ',', default_value = "1,5")]
    pub ks: Vec<u32>,
    /// Concurrent runs
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Skip cells already in records.ndjson
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many new runs
    #[arg(long)]
    pub max_runs: Option<usize>,
    /// Replay transcripts from {dir}/{benchmark}/{mode}-{iteration}.ndjson or {dir}/{benchmark}/{mode}.ndjson
    #[arg(long)]
    pub replay_dir: Option<PathBuf>,
    /// Match transcript entries by order only
    #[arg(long)]
    pub lenient: bool,
    /// Record transcripts to {dir}/{benchmark}/{mode}-{iteration}.ndjson
    #[arg(long)]
    pub record_dir: Option<PathBuf>,
    /// Price per 1000 input tokens
    #[arg(long, default_value_t = 0.001)]
    pub input_rate: f64,
    /// Price per 1000 output tokens
    #[arg(long, default_value_t = 0.002)]
    pub output_rate: f64,
    /// Leave cost columns out of the report
    #[arg(long)]
    pub no_cost: bool,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct EvalPlanArgs {
    /// Manifest holding the golden plan
    #[arg(long)]
    pub golden: PathBuf,
    /// Directory of candidate model responses, one per file
    #[arg(long)]
    pub candidates: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayVerifyArgs {
    /// Finished run workspace
    #[arg(long)]
    pub workspace: PathBuf,
    /// Top testbench [default: the one named in the run log]
    #[arg(long)]
    pub testbench: Option<PathBuf>,
    /// Simulation timeout in seconds
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

fn parse_prompt_mode(s: &str) -> Result<PromptMode, String> {
    match s {
        "conversational" | "chat" => Ok(PromptMode::Conversational),
        "completion" => Ok(PromptMode::Completion),
        other => Err(format!("unknown prompt mode '{other}' (expected conversational or completion)")),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    llm: Option<LlmConfig>,
}

/// A failure that maps to a specific exit code.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    ExitCode::from(execute(&cli))
}

/// Runs a parsed command and returns its exit code.
pub fn execute(cli: &Cli) -> u8 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(&cli.global, a),
        Command::Bench(a) => cmd_bench(&cli.global, a),
        Command::EvalPlan(a) => cmd_eval_plan(a),
        Command::ReplayVerify(a) => cmd_replay_verify(&cli.global, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            if let Some(Exit(code)) = e.downcast_ref::<Exit>() {
                return *code;
            }
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn base_llm_config(global: &GlobalOptions, args: &ModelArgs) -> Result<LlmConfig> {
    let mut cfg = match &global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: ConfigFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            file.llm.unwrap_or_default()
        }
        None => LlmConfig::default(),
    };
    if let Some(e) = &global.endpoint {
        cfg.endpoint_url = e.clone();
    }
    if let Some(k) = &global.api_key_env {
        cfg.api_key_env = k.clone();
    }
    if let Some(m) = args.prompt_mode {
        cfg.mode = m;
    }
    if let Some(t) = args.temperature {
        cfg.temperature = t;
    }
    if let Some(p) = args.top_p {
        cfg.top_p = p;
    }
    if let Some(m) = args.max_tokens {
        cfg.max_tokens = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulator(global: &GlobalOptions) -> Result<Simulator> {
    let sim = match global.simulator.as_deref() {
        None => Simulator::detect()?,
        Some("icarus") | Some("iverilog") => Simulator::Icarus(Icarus::default()),
        Some("verilator") => Simulator::Verilator(Verilator::from_env()),
        Some(other) => bail!("unknown simulator '{other}' (expected icarus or verilator)"),
    };
    if !sim.available() {
        let binary = match &sim {
            Simulator::Icarus(i) => format!("{} / {}", i.iverilog, i.vvp),
            Simulator::Verilator(v) => v.binary.clone(),
        };
        bail!("simulator binary not found: {binary}");
    }
    Ok(sim)
}

fn open_client(cfg: &LlmConfig, replay: Option<&Path>, lenient: bool, record: Option<&Path>) -> Result<Box<dyn LlmClient>, LlmError> {
    let mode = if lenient { ReplayMode::Lenient } else { ReplayMode::Strict };
    let client: Box<dyn LlmClient> = match replay {
        Some(path) => Box::new(ReplayClient::open(cfg.model_id.clone(), path, mode)?),
        None => Box::new(HttpClient::new(cfg.clone())?),
    };
    Ok(match record {
        Some(path) => Box::new(Recorder::new(client, path)?),
        None => client,
    })
}

fn engine_config(mode: PromptingMode, ws: &Path, prompt_mode: PromptMode, e: &EngineArgs) -> Result<EngineConfig> {
    if e.timeout.is_nan() || e.timeout <= 0.0 {
        bail!("timeout must be positive");
    }
    let mut c = EngineConfig::new(mode, ws);
    c.prompt_mode = prompt_mode;
    c.fix_budget = e.fix_budget;
    c.generation_budget = e.generation_budget;
    c.timeout = Duration::from_secs_f64(e.timeout);
    c.pghp_compile_screen = e.compile_screen;
    c.validate()?;
    Ok(c)
}

fn fresh_workspace(root: &Path, stem: &str) -> PathBuf {
    (0..)
        .map(|n| root.join(format!("{stem}-{n}")))
        .find(|p| !p.exists())
        .expect("unbounded search")
}

pub fn print_summary(r: &RunRecord) {
    println!(
        "{} {} {}: {}",
        r.benchmark_id,
        r.mode,
        r.model_id,
        if r.success { "success" } else { "failure" }
    );
    for (m, n) in &r.per_module_attempts {
        println!("  {m}: {n} attempt(s)");
    }
    let approx = if r.approximate_tokens { " (approximate)" } else { "" };
    println!("  tokens: {} in, {} out{approx}", r.input_tokens, r.output_tokens);
    println!("  time: {:.2} s", r.wall_time);
    if let Some(reason) = &r.failure_reason {
        println!("  reason: {reason}");
    }
    if let Some(d) = &r.failure_detail {
        println!("  detail: {d}");
    }
}

fn cmd_run(global: &GlobalOptions, a: &RunArgs) -> Result<u8> {
    let suite = load_suite(&a.suite)?;
    let bench = match find_benchmark(&suite, &a.benchmark) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(2);
        }
    };
    let mut cfg = base_llm_config(global, &a.model_args)?;
    if let Some(m) = &a.model {
        cfg.model_id = m.clone();
    }
    let sim = simulator(global)?;
    let ws = a
        .workspace
        .clone()
        .unwrap_or_else(|| fresh_workspace(&global.workspace_root, &format!("{}-{}", bench.id, a.mode)));
    let mut client = open_client(&cfg, a.replay.as_deref(), a.lenient, a.record.as_deref())?;
    let mut config = engine_config(a.mode, &ws, cfg.mode, &a.engine)?;
    config.transcript_path = a.replay.clone().or_else(|| a.record.clone());
    let record = engine::run(&config, bench, client.as_mut(), &sim)?;
    print_summary(&record);
    println!("  workspace: {}", ws.display());
    Ok(match &record.failure_reason {
        None => 0,
        Some(FailureReason::ToolMissing | FailureReason::TransportError | FailureReason::InternalError) => 2,
        Some(_) => 1,
    })
}

/// Transcript for one bench run under `dir`.
pub fn replay_path(dir: &Path, benchmark: &str, mode: PromptingMode, iteration: u32) -> PathBuf {
    let per_run = dir.join(benchmark).join(format!("{mode}-{iteration}.ndjson"));
    if per_run.is_file() {
        return per_run;
    }
    dir.join(benchmark).join(format!("{mode}.ndjson"))
}

fn cmd_bench(global: &GlobalOptions, a: &BenchArgs) -> Result<u8> {
    let suite = load_suite(&a.suite)?;
    let base = base_llm_config(global, &a.model_args)?;
    let models: Vec<LlmConfig> = if a.models.is_empty() {
        vec![base.clone()]
    } else {
        a.models
            .iter()
            .map(|m| LlmConfig {
                model_id: m.clone(),
                ..base.clone()
            })
            .collect()
    };
    let mut spec = SuiteRunSpec::new(&global.workspace_root);
    spec.benchmarks = a.benchmarks.clone();
    spec.models = models;
    spec.modes = a.modes.clone();
    spec.iterations = a.iterations;
    spec.ks = a.ks.clone();
    spec.parallelism = a.parallelism;
    spec.resume = a.resume;
    spec.max_runs = a.max_runs;
    spec.fix_budget = a.engine.fix_budget;
    spec.generation_budget = a.engine.generation_budget;
    spec.timeout = Duration::from_secs_f64(a.engine.timeout.max(0.001));
    spec.pghp_compile_screen = a.engine.compile_screen;
    if let Err(e) = spec.validate() {
        eprintln!("error: {e}");
        return Ok(2);
    }
    let sim = simulator(global)?;

    let replay_dir = a.replay_dir.clone();
    let record_dir = a.record_dir.clone();
    let lenient = a.lenient;
    let factory = move |cfg: &LlmConfig, b: &bench::BenchmarkDef, mode: PromptingMode, it: u32, _ws: &Path| {
        let replay = replay_dir.as_ref().map(|d| replay_path(d, &b.id, mode, it));
        let record = record_dir
            .as_ref()
            .map(|d| d.join(&b.id).join(format!("{mode}-{it}.ndjson")));
        if let Some(r) = &record {
            if r.exists() {
                std::fs::remove_file(r).map_err(|e| LlmError::Transcript {
                    path: r.display().to_string(),
                    message: e.to_string(),
                })?;
            }
        }
        let client = open_client(cfg, replay.as_deref(), lenient, record.as_deref())?;
        Ok(RunClient {
            client,
            transcript: replay.or(record),
        })
    };
    let records = run_suite(&spec, &suite, &factory, &sim)?;
    let expected = spec_cell_count(&spec, &suite);
    let rates = (!a.no_cost).then(|| CostRates::new(a.input_rate, a.output_rate));
    if records.is_empty() {
        eprintln!("no records to report");
        return Ok(1);
    }
    let files = emit_report(&records, &spec.ks, rates, &spec.out_dir)?;
    println!("records: {} of {expected}", records.len());
    println!("report: {}", files.report.display());
    if let Some(c) = &files.cost {
        println!("cost: {}", c.display());
    }
    for n in &files.notices {
        println!("note: {n}");
    }
    Ok(if records.len() >= expected { 0 } else { 1 })
}

fn spec_cell_count(spec: &SuiteRunSpec, suite: &[bench::BenchmarkDef]) -> usize {
    let benches = if spec.benchmarks.is_empty() { suite.len() } else { spec.benchmarks.len() };
    benches * spec.models.len() * spec.modes.len() * spec.iterations as usize
}

fn cmd_eval_plan(a: &EvalPlanArgs) -> Result<u8> {
    let golden = read_manifest(&a.golden)?.plan;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&a.candidates)
        .with_context(|| format!("reading {}", a.candidates.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no candidate files in {}", a.candidates.display());
    }
    let mut exact = 0usize;
    for f in &files {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match extract_plan_from_text(&text, &golden.top) {
            Ok(candidate) => {
                let cmp = compare_plans(&golden, &candidate);
                if cmp.exact {
                    exact += 1;
                    println!("{name}: exact");
                } else {
                    println!(
                        "{name}: missing [{}] extraneous [{}]",
                        cmp.missing.join(", "),
                        cmp.extraneous.join(", ")
                    );
                }
            }
            Err(e) => println!("{name}: unparsable ({e})"),
        }
    }
    let accuracy = exact as f64 / files.len() as f64;
    println!("accuracy {} ({exact}/{})", bench::format_probability(accuracy), files.len());
    Ok(0)
}

fn top_testbench_from_log(ws: &Path) -> Result<PathBuf> {
    let log_path = ws.join(RUN_LOG_NAME);
    let text = std::fs::read_to_string(&log_path).with_context(|| format!("reading {}", log_path.display()))?;
    let first = text.lines().next().context("run log is empty")?;
    let v: serde_json::Value = serde_json::from_str(first).context("run log start event")?;
    v.get("top_testbench")
        .and_then(|t| t.as_str())
        .map(PathBuf::from)
        .context("run log names no top testbench")
}

fn cmd_replay_verify(global: &GlobalOptions, a: &ReplayVerifyArgs) -> Result<u8> {
    let tb = match &a.testbench {
        Some(t) => t.clone(),
        None => top_testbench_from_log(&a.workspace)?,
    };
    let sim = simulator(global)?;
    // Verify a copy so the finished workspace is left untouched.
    let scratch = a.workspace.join("verify");
    std::fs::create_dir_all(&scratch)?;
    let wf = scratch.join(WORKFILE_NAME);
    std::fs::copy(a.workspace.join(WORKFILE_NAME), &wf).context("copying the workfile")?;
    let outcome = sim.test_unit(&wf, &tb, Duration::from_secs_f64(a.timeout.max(0.001)))?;
    println!("verdict: {}", outcome.verdict);
    for d in &outcome.diagnostics {
        println!("  {d}");
    }
    Ok(match outcome.verdict {
        crate::sim::Verdict::Pass => 0,
        crate::sim::Verdict::ToolMissing => 2,
        _ => 1,
    })
}
