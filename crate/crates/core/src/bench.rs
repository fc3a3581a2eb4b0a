// SPDX-License-Identifier: Apache-2.0

//! Benchmark suite loading, the benchmark × model × mode × iteration run
//! matrix, and report emission.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, EngineConfig, FailureReason, PromptingMode, RunRecord};
use crate::llm::{LlmClient, LlmConfig, LlmError};
use crate::metrics::{aggregate, cost_estimate, format_cost, savings_percent, BenchReportRow, CostRates, MetricsError};
use crate::plan::{read_manifest, HierarchyPlan, PlanError};
use crate::sim::{Simulator, DEFAULT_TIMEOUT};

pub const MANIFEST_NAME: &str = "manifest.toml";
pub const RECORDS_NAME: &str = "records.ndjson";
pub const REPORT_NAME: &str = "report.csv";
pub const COST_REPORT_NAME: &str = "cost.csv";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("duplicate benchmark id '{0}'")]
    DuplicateId(String),
    #[error("unknown benchmark '{id}' (available: {available})")]
    UnknownBenchmark { id: String, available: String },
    #[error("invalid run spec: {0}")]
    Spec(String),
    #[error("{path}:{line}: {message}")]
    Records {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDef {
    pub id: String,
    pub plan: HierarchyPlan,
    pub nh_prompt: String,
    pub tags: Vec<String>,
    pub notes: Option<String>,
    pub manifest: PathBuf,
}

/// Loads `{dir}/{id}/manifest.toml` for every subdirectory, sorted by id.
pub fn load_suite(dir: &Path) -> Result<Vec<BenchmarkDef>, BenchError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_NAME).is_file())
        .collect();
    dirs.sort();
    let mut seen = HashSet::new();
    let mut suite = Vec::with_capacity(dirs.len());
    for d in dirs {
        let manifest = d.join(MANIFEST_NAME);
        let m = read_manifest(&manifest)?;
        let id = d
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !seen.insert(id.clone()) {
            return Err(BenchError::DuplicateId(id));
        }
        suite.push(BenchmarkDef {
            id,
            plan: m.plan,
            nh_prompt: m.nh_prompt,
            tags: m.tags,
            notes: m.notes,
            manifest,
        });
    }
    if suite.is_empty() {
        log::warn!("no benchmark manifests under {}", dir.display());
    }
    Ok(suite)
}

pub fn find_benchmark<'a>(suite: &'a [BenchmarkDef], id: &str) -> Result<&'a BenchmarkDef, BenchError> {
    suite.iter().find(|b| b.id == id).ok_or_else(|| BenchError::UnknownBenchmark {
        id: id.to_string(),
        available: suite.iter().map(|b| b.id.as_str()).collect::<Vec<_>>().join(", "),
    })
}

#[derive(Debug, Clone)]
pub struct SuiteRunSpec {
    pub benchmarks: Vec<String>,
    pub models: Vec<LlmConfig>,
    pub modes: Vec<PromptingMode>,
    pub iterations: u32,
    pub ks: Vec<u32>,
    pub parallelism: usize,
    pub out_dir: PathBuf,
    pub resume: bool,
    /// Stop after this many new runs (simulates an interruption).
    pub max_runs: Option<usize>,
    pub fix_budget: u32,
    pub generation_budget: u32,
    pub timeout: Duration,
    pub pghp_compile_screen: bool,
}

impl SuiteRunSpec {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            benchmarks: Vec::new(),
            models: vec![LlmConfig::default()],
            modes: vec![PromptingMode::Nh, PromptingMode::Hdhp],
            iterations: 10,
            ks: vec![1, 5],
            parallelism: 1,
            out_dir: out_dir.into(),
            resume: false,
            max_runs: None,
            fix_budget: 10,
            generation_budget: 3,
            timeout: DEFAULT_TIMEOUT,
            pghp_compile_screen: false,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Spec(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > self.iterations) {
            return bad(format!("k={k} must lie in 1..={} (the iteration count)", self.iterations));
        }
        if self.models.is_empty() || self.modes.is_empty() {
            return bad("at least one model and one mode are required".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.fix_budget == 0 || self.generation_budget == 0 {
            return bad("budgets must be at least 1".into());
        }
        for m in &self.models {
            m.validate().map_err(|e| BenchError::Spec(e.to_string()))?;
        }
        Ok(())
    }
}

/// One run of the matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub benchmark_id: String,
    pub model_id: String,
    pub mode: PromptingMode,
    pub iteration: u32,
}

impl CellKey {
    fn of(r: &RunRecord) -> Self {
        Self {
            benchmark_id: r.benchmark_id.clone(),
            model_id: r.model_id.clone(),
            mode: r.mode,
            iteration: r.iteration,
        }
    }
}

/// A model client for one run, plus the transcript it reads or writes.
pub struct RunClient {
    pub client: Box<dyn LlmClient>,
    pub transcript: Option<PathBuf>,
}

/// Builds clients per run: (model config, benchmark, mode, iteration, workspace).
pub type LlmFactory<'a> = dyn Fn(&LlmConfig, &BenchmarkDef, PromptingMode, u32, &Path) -> Result<RunClient, LlmError>
    + Sync
    + 'a;

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, BenchError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(BenchError::Io { path: path.to_path_buf(), source }),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            // A torn final line from a crash is dropped and re-run.
            Err(e) => log::warn!("{}:{}: skipping unreadable record: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Workspace of one run.
pub fn run_workspace(out_dir: &Path, key: &CellKey) -> PathBuf {
    out_dir
        .join("runs")
        .join(sanitize(&key.benchmark_id))
        .join(sanitize(&key.model_id))
        .join(key.mode.to_string())
        .join(format!("iter_{:02}", key.iteration))
}

fn failed_record(key: &CellKey, detail: String, reason: FailureReason) -> RunRecord {
    RunRecord {
        benchmark_id: key.benchmark_id.clone(),
        model_id: key.model_id.clone(),
        mode: key.mode,
        iteration: key.iteration,
        success: false,
        wall_time: 0.0,
        per_module_attempts: BTreeMap::new(),
        input_tokens: 0,
        output_tokens: 0,
        approximate_tokens: false,
        plan_used: None,
        transcript_path: None,
        failure_reason: Some(reason),
        failure_detail: Some(detail),
    }
}

/// Runs the matrix. Records are appended to `{out}/records.ndjson` as they
/// finish; with `resume`, cells already present there are skipped. Returns
/// every record in the file afterwards.
pub fn run_suite(
    spec: &SuiteRunSpec,
    suite: &[BenchmarkDef],
    factory: &LlmFactory,
    sim: &Simulator,
) -> Result<Vec<RunRecord>, BenchError> {
    spec.validate()?;
    let benches: Vec<&BenchmarkDef> = if spec.benchmarks.is_empty() {
        suite.iter().collect()
    } else {
        spec.benchmarks
            .iter()
            .map(|id| find_benchmark(suite, id))
            .collect::<Result<_, _>>()?
    };
    std::fs::create_dir_all(&spec.out_dir).map_err(io_err(&spec.out_dir))?;
    let records_path = spec.out_dir.join(RECORDS_NAME);
    let done: HashSet<CellKey> = if spec.resume {
        read_records(&records_path)?.iter().map(CellKey::of).collect()
    } else {
        if records_path.exists() {
            std::fs::remove_file(&records_path).map_err(io_err(&records_path))?;
        }
        HashSet::new()
    };

    let mut jobs = VecDeque::new();
    for b in &benches {
        for m in &spec.models {
            for &mode in &spec.modes {
                for iteration in 0..spec.iterations {
                    let key = CellKey {
                        benchmark_id: b.id.clone(),
                        model_id: m.model_id.clone(),
                        mode,
                        iteration,
                    };
                    if !done.contains(&key) {
                        jobs.push_back((key, *b, m));
                    }
                }
            }
        }
    }
    if let Some(limit) = spec.max_runs {
        jobs.truncate(limit);
    }
    log::info!("{} runs to execute ({} already recorded)", jobs.len(), done.len());

    let mut sink = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&records_path)
        .map_err(io_err(&records_path))?;
    let queue = Mutex::new(jobs);
    let (tx, rx) = mpsc::channel::<RunRecord>();
    let workers = spec.parallelism.max(1);
    let write_result = std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            scope.spawn(move || loop {
                let Some((key, bench, model)) = queue.lock().expect("job queue poisoned").pop_front() else {
                    break;
                };
                let record = execute(spec, &key, bench, model, factory, sim);
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            let line = serde_json::to_string(&record).expect("records serialize");
            writeln!(sink, "{line}").and_then(|_| sink.flush())?;
            log::info!(
                "{} {} {} #{}: {}",
                record.benchmark_id,
                record.model_id,
                record.mode,
                record.iteration,
                if record.success { "pass" } else { "fail" }
            );
        }
        Ok::<(), std::io::Error>(())
    });
    write_result.map_err(io_err(&records_path))?;
    read_records(&records_path)
}

fn execute(
    spec: &SuiteRunSpec,
    key: &CellKey,
    bench: &BenchmarkDef,
    model: &LlmConfig,
    factory: &LlmFactory,
    sim: &Simulator,
) -> RunRecord {
    let ws = run_workspace(&spec.out_dir, key);
    if ws.exists() {
        if let Err(e) = std::fs::remove_dir_all(&ws) {
            return failed_record(key, format!("{}: {e}", ws.display()), FailureReason::InternalError);
        }
    }
    let RunClient { mut client, transcript } = match factory(model, bench, key.mode, key.iteration, &ws) {
        Ok(c) => c,
        Err(e) => return failed_record(key, e.to_string(), FailureReason::TransportError),
    };
    let mut config = EngineConfig::new(key.mode, &ws);
    config.prompt_mode = model.mode;
    config.fix_budget = spec.fix_budget;
    config.generation_budget = spec.generation_budget;
    config.timeout = spec.timeout;
    config.pghp_compile_screen = spec.pghp_compile_screen;
    config.transcript_path = transcript;
    match engine::run(&config, bench, client.as_mut(), sim) {
        Ok(mut r) => {
            r.iteration = key.iteration;
            r.model_id = key.model_id.clone();
            r
        }
        Err(e) => failed_record(key, e.to_string(), FailureReason::InternalError),
    }
}

// ---------------------------------------------------------------------------
// Reports

/// Files written by `emit_report` and anything worth telling the operator.
#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub cost: Option<PathBuf>,
    pub notices: Vec<String>,
}

/// Probability with up to four decimals, always showing one.
pub fn format_probability(p: f64) -> String {
    let r = (p * 1e4).round() / 1e4;
    if r.fract() == 0.0 {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

/// One row of the hierarchical-versus-flat cost comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CostComparison {
    pub benchmark_id: String,
    pub model_id: String,
    pub mode: PromptingMode,
    pub h_input: f64,
    pub h_output: f64,
    pub h_cost: f64,
    pub nh_input: f64,
    pub nh_output: f64,
    pub nh_cost: f64,
    pub savings: f64,
}

/// Pairs each hierarchical row with the flat row of the same benchmark
/// and model. Costs use average token counts, unrounded.
pub fn cost_comparisons(rows: &[BenchReportRow], rates: CostRates) -> Vec<CostComparison> {
    let mut out = Vec::new();
    for h in rows.iter().filter(|r| r.mode.is_hierarchical()) {
        let Some(nh) = rows.iter().find(|r| {
            r.mode == PromptingMode::Nh && r.benchmark_id == h.benchmark_id && r.model_id == h.model_id
        }) else {
            continue;
        };
        let cost = |i: f64, o: f64| rates.input_rate * i / 1000.0 + rates.output_rate * o / 1000.0;
        let h_cost = cost(h.avg_input_tokens, h.avg_output_tokens);
        let nh_cost = cost(nh.avg_input_tokens, nh.avg_output_tokens);
        let Ok(savings) = savings_percent(nh_cost, h_cost) else {
            continue;
        };
        out.push(CostComparison {
            benchmark_id: h.benchmark_id.clone(),
            model_id: h.model_id.clone(),
            mode: h.mode,
            h_input: h.avg_input_tokens,
            h_output: h.avg_output_tokens,
            h_cost,
            nh_input: nh.avg_input_tokens,
            nh_output: nh.avg_output_tokens,
            nh_cost,
            savings,
        });
    }
    out
}

/// Writes `report.csv` (pass@k table) and, when both flat and hierarchical
/// rows exist, `cost.csv`. Everything is recomputed from `records`.
pub fn emit_report(
    records: &[RunRecord],
    ks: &[u32],
    rates: Option<CostRates>,
    out_dir: &Path,
) -> Result<ReportFiles, BenchError> {
    let rows = aggregate(records, ks, rates)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = ReportFiles {
        report: out_dir.join(REPORT_NAME),
        ..Default::default()
    };

    let ks: Vec<u32> = ks.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut w = csv::Writer::from_path(&files.report)?;
    let mut header = vec!["benchmark".to_string(), "model".into(), "mode".into(), "n".into(), "c".into()];
    header.extend(ks.iter().map(|k| format!("pass@{k}")));
    header.extend(["avg_time_s", "avg_in_tokens", "avg_out_tokens", "avg_cost"].map(String::from));
    w.write_record(&header)?;
    for r in &rows {
        let mut line = vec![
            r.benchmark_id.clone(),
            r.model_id.clone(),
            r.mode.to_string(),
            r.runs.to_string(),
            r.correct.to_string(),
        ];
        line.extend(ks.iter().map(|k| {
            r.pass_at
                .get(k)
                .map(|&p| format_probability(p))
                .unwrap_or_else(|| "n/a".into())
        }));
        line.push(format!("{:.2}", r.avg_time));
        line.push(format!("{:.1}", r.avg_input_tokens));
        line.push(format!("{:.1}", r.avg_output_tokens));
        line.push(match r.avg_cost {
            Some(c) if r.approximate_tokens => format!("~{}", format_cost(c)),
            Some(c) => format_cost(c),
            None => "n/a".into(),
        });
        w.write_record(&line)?;
        if !r.skipped_ks.is_empty() {
            files.notices.push(format!(
                "{}/{}/{}: pass@k skipped for k={:?} (only {} runs)",
                r.benchmark_id, r.model_id, r.mode, r.skipped_ks, r.runs
            ));
        }
    }
    w.flush().map_err(io_err(&files.report))?;

    if rows.iter().any(|r| r.approximate_tokens) {
        files
            .notices
            .push("token counts marked ~ were estimated locally; costs are approximate".into());
    }
    match rates {
        None => files.notices.push("no cost rates given; cost columns are n/a".into()),
        Some(rates) => {
            let comparisons = cost_comparisons(&rows, rates);
            if comparisons.is_empty() {
                files
                    .notices
                    .push("cost comparison omitted: flat and hierarchical runs are not both present".into());
            } else {
                let path = out_dir.join(COST_REPORT_NAME);
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record([
                    "benchmark", "model", "mode", "h_in_tokens", "h_out_tokens", "h_cost", "nh_in_tokens",
                    "nh_out_tokens", "nh_cost", "savings_pct",
                ])?;
                for c in &comparisons {
                    w.write_record([
                        c.benchmark_id.clone(),
                        c.model_id.clone(),
                        c.mode.to_string(),
                        format!("{:.1}", c.h_input),
                        format!("{:.1}", c.h_output),
                        format_cost(c.h_cost),
                        format!("{:.1}", c.nh_input),
                        format!("{:.1}", c.nh_output),
                        format_cost(c.nh_cost),
                        format!("{:.2}", c.savings),
                    ])?;
                }
                w.flush().map_err(io_err(&path))?;
                files.cost = Some(path);
            }
        }
    }
    for n in &files.notices {
        log::warn!("{n}");
    }
    Ok(files)
}

/// Unrounded cost of a single record.
pub fn record_cost(r: &RunRecord, rates: CostRates) -> f64 {
    cost_estimate(r.input_tokens, r.output_tokens, rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{PlanSource, TopSpec};

    fn record(bench: &str, mode: PromptingMode, iteration: u32, success: bool, tokens: (u64, u64)) -> RunRecord {
        RunRecord {
            benchmark_id: bench.into(),
            model_id: "m".into(),
            mode,
            iteration,
            success,
            wall_time: 2.0,
            per_module_attempts: BTreeMap::new(),
            input_tokens: tokens.0,
            output_tokens: tokens.1,
            approximate_tokens: false,
            plan_used: Some(HierarchyPlan {
                top: TopSpec {
                    name: "t".into(),
                    description: "t".into(),
                    interface: String::new(),
                    testbench: "tb.v".into(),
                },
                submodules: Vec::new(),
                source: PlanSource::Human,
            }),
            transcript_path: None,
            failure_reason: None,
            failure_detail: None,
        }
    }

    #[test]
    fn probability_format() {
        assert_eq!(format_probability(0.8), "0.8");
        assert_eq!(format_probability(1.0), "1.0");
        assert_eq!(format_probability(0.0), "0.0");
        assert_eq!(format_probability(0.916666), "0.9167");
    }

    #[test]
    fn report_row_shape() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = (0..10)
            .map(|i| record("mux_64to1", PromptingMode::Hdhp, i, i < 8, (92, 2376)))
            .collect();
        let files = emit_report(&recs, &[1, 5], Some(CostRates::default()), dir.path()).unwrap();
        let csv = std::fs::read_to_string(&files.report).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "benchmark,model,mode,n,c,pass@1,pass@5,avg_time_s,avg_in_tokens,avg_out_tokens,avg_cost"
        );
        assert_eq!(lines.next().unwrap(), "mux_64to1,m,hdhp,10,8,0.8,1.0,2.00,92.0,2376.0,0.00484");
        assert!(files.cost.is_none());
        assert!(files.notices.iter().any(|n| n.contains("cost comparison omitted")));
    }

    #[test]
    fn cost_table_when_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = vec![record("mux_64to1", PromptingMode::Hdhp, 0, true, (92, 2376))];
        recs.push(record("mux_64to1", PromptingMode::Nh, 0, true, (91, 3283)));
        let files = emit_report(&recs, &[1], Some(CostRates::default()), dir.path()).unwrap();
        let cost = std::fs::read_to_string(files.cost.unwrap()).unwrap();
        assert!(cost.lines().nth(1).unwrap().ends_with(",0.00484,91.0,3283.0,0.00666,27.23"));
    }

    #[test]
    fn no_rates_marks_cost_na() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![record("b", PromptingMode::Nh, 0, false, (1, 1))];
        let files = emit_report(&recs, &[1], None, dir.path()).unwrap();
        let csv = std::fs::read_to_string(files.report).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(",n/a"));
    }

    #[test]
    fn spec_validation() {
        let mut s = SuiteRunSpec::new("out");
        s.iterations = 3;
        s.ks = vec![5];
        assert!(matches!(s.validate(), Err(BenchError::Spec(_))));
        s.ks = vec![1, 3];
        s.validate().unwrap();
    }

    #[test]
    fn empty_suite_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_suite(dir.path()).unwrap().is_empty());
    }
}
