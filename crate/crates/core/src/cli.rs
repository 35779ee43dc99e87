//! Command-line front end: `run`, `compare` and `validate`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::engine::{run, EngineError, MetricRecord, ObserverHook, StepReport, StopReason, Termination};
use crate::fms::metrics::{all_delivered, METRIC_COLUMNS};
use crate::fms::{FmsObserver, RunSummary, SafetyObserver, SafetyViolation};
use crate::scenario::{parse_scenario, Override, ScenarioError, ScenarioSpec, TERMINATE_ALL_DELIVERED};
use crate::state::{InfluenceClass, SystemState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONTRACT: i32 = 1;
pub const EXIT_NO_ESCAPE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

pub const VERDICT_RESOLVED: &str = "control resolves deadlock; all tasks delivered";
pub const VERDICT_NO_DEADLOCK: &str = "no deadlock in either mode";

#[derive(Debug, Parser)]
#[command(name = "irm", version, about = "Multi-level influence/reaction simulator with an AGV shop-floor model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write metrics (and optionally a trace).
    Run(RunArgs),
    /// Run a scenario with the deadlock control off and on, and compare.
    Compare(RunArgs),
    /// Parse and statically check a scenario without running it.
    Validate(ValidateArgs),
}

fn on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got {s}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub ticks: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deadlock control: on or off.
    #[arg(long, value_parser = on_off)]
    pub control: Option<bool>,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    /// Writes the per-influence event trace (JSON lines).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Scenario field override, `dotted.key=value`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<Override>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
}

impl RunArgs {
    /// File overrides first, then the dedicated flags, so flags win.
    pub fn effective_overrides(&self) -> Vec<Override> {
        let mut v = self.overrides.clone();
        if let Some(t) = self.ticks {
            v.push(Override::new("run.ticks", t.to_string()));
        }
        if let Some(s) = self.seed {
            v.push(Override::new("run.seed", s.to_string()));
        }
        if let Some(c) = self.control {
            v.push(Override::new("control", c.to_string()));
        }
        v
    }
}

/// One line of the event trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub level: String,
    pub event: String,
    pub payload: Value,
}

/// Records every produced influence, inhibition, spawn and dissolution,
/// ordered by tick, level and influence id.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    pub records: Vec<TraceRecord>,
}

impl ObserverHook for TraceRecorder {
    fn observe(&mut self, _state: &SystemState, report: &StepReport) -> Option<MetricRecord> {
        let tick = report.tick;
        let mut levels: Vec<&crate::level_graph::LevelId> = report.produced.keys().collect();
        levels.extend(report.inhibitions.keys());
        levels.extend(report.spawned.iter().chain(&report.dissolved).map(|(l, _)| l));
        levels.sort();
        levels.dedup();
        for l in levels {
            let rec = |event: &str, payload: Value| TraceRecord {
                tick,
                level: l.to_string(),
                event: event.into(),
                payload,
            };
            if let Some(set) = report.produced.get(l) {
                for i in set.iter() {
                    let event = match i.class {
                        InfluenceClass::Ordinary => "produced",
                        _ => i.class.name(),
                    };
                    self.records.push(rec(event, json!(i)));
                }
            }
            if let Some(inh) = report.inhibitions.get(l) {
                let mut pairs: Vec<_> = inh
                    .iter()
                    .flat_map(|r| r.inhibited.iter().map(move |x| (x, &r.constraint)))
                    .collect();
                pairs.sort();
                for (inhibited, by) in pairs {
                    self.records.push(rec("inhibited", json!({"influence": inhibited, "by": by})));
                }
            }
            for (_, a) in report.spawned.iter().filter(|(x, _)| x == l) {
                self.records.push(rec("spawned", json!({"agent": a})));
            }
            for (_, a) in report.dissolved.iter().filter(|(x, _)| x == l) {
                self.records.push(rec("dissolved", json!({"agent": a})));
            }
        }
        None
    }
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub scenario: String,
    pub control: bool,
    pub seed: u64,
    pub overrides: Vec<Override>,
    pub records: Vec<MetricRecord>,
    pub trace: Option<Vec<TraceRecord>>,
    pub summary: RunSummary,
    pub safety: Vec<SafetyViolation>,
    pub final_state: SystemState,
}

impl RunArtifacts {
    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.records)
    }

    pub fn trace_lines(&self) -> Option<String> {
        self.trace.as_ref().map(|t| {
            let mut s = String::new();
            for r in t {
                s.push_str(&serde_json::to_string(r).expect("trace serializes"));
                s.push('\n');
            }
            s
        })
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "scenario": self.scenario,
            "control": self.control,
            "seed": self.seed,
            "overrides": self.overrides.iter().map(|o| o.to_string()).collect::<Vec<_>>(),
            "summary": self.summary,
            "safety_violations": self.safety.len(),
        })
    }

    pub fn exit_code(&self) -> i32 {
        if self.summary.no_escape.is_empty() {
            EXIT_OK
        } else {
            EXIT_NO_ESCAPE
        }
    }
}

pub fn metrics_header() -> String {
    let mut h = String::from("tick");
    for c in METRIC_COLUMNS {
        h.push(',');
        h.push_str(c);
    }
    h
}

fn fmt_value(name: &str, v: f64) -> String {
    if name == "agv_idle_ratio" {
        format!("{v:.4}")
    } else {
        format!("{}", v as i64)
    }
}

pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut s = metrics_header();
    s.push('\n');
    for r in records {
        let _ = write!(s, "{}", r.tick);
        for (name, v) in &r.values {
            let _ = write!(s, ",{}", fmt_value(name, *v));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, thiserror::Error)]
pub enum RunFailure {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("contract violation: {0}")]
    Contract(#[from] EngineError),
}

impl RunFailure {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunFailure::Scenario(_) => EXIT_INVALID,
            RunFailure::Contract(_) => EXIT_CONTRACT,
        }
    }
}

/// Runs a validated scenario.
pub fn execute(spec: &ScenarioSpec, overrides: &[Override], trace: bool) -> Result<RunArtifacts, RunFailure> {
    let built = spec.build()?;
    let world = built.world.clone();
    let mut metrics = FmsObserver::new(world.clone());
    let mut safety = SafetyObserver::new(world.clone());
    let mut tracer = TraceRecorder::default();
    safety.check(&built.state);
    let mut observers: Vec<&mut dyn ObserverHook> = vec![&mut metrics, &mut safety];
    if trace {
        observers.push(&mut tracer);
    }
    let w = world.clone();
    let stop = Termination::new(TERMINATE_ALL_DELIVERED, move |s: &SystemState| all_delivered(&w, s));
    let termination = (spec.run.terminate.as_deref() == Some(TERMINATE_ALL_DELIVERED)).then_some(&stop);
    let result = run(&built.model, &built.state, spec.run.ticks, &mut observers, termination)?;
    drop(observers);
    let summary = RunSummary::from_state(&world, &result.final_state, result.stop.clone(), result.ticks_run);
    Ok(RunArtifacts {
        scenario: spec.name.clone(),
        control: spec.control,
        seed: spec.run.seed,
        overrides: overrides.to_vec(),
        records: result.records,
        trace: trace.then_some(tracer.records),
        summary,
        safety: safety.violations,
        final_state: result.final_state,
    })
}

/// Parses the scenario with overrides and runs it.
pub fn cmd_run(args: &RunArgs, trace: bool) -> Result<RunArtifacts, RunFailure> {
    let overrides = args.effective_overrides();
    let spec = parse_scenario(&args.scenario, &overrides)?;
    execute(&spec, &overrides, trace)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub off: RunArtifacts,
    pub on: RunArtifacts,
    pub verdict: String,
}

pub fn verdict(off: &RunSummary, on: &RunSummary) -> String {
    if !on.no_escape.is_empty() {
        let groups: Vec<String> = on
            .no_escape
            .iter()
            .map(|d| {
                let m: Vec<&str> = d.members.iter().map(|a| a.as_str()).collect();
                format!("{} [{}]", d.macro_agent, m.join(","))
            })
            .collect();
        return format!("NoEscapePath under control=on: {}", groups.join("; "));
    }
    if off.deadlocks_detected == 0 && on.deadlocks_detected == 0 {
        return VERDICT_NO_DEADLOCK.into();
    }
    if on.all_delivered() && on.deadlocks_resolved == on.deadlocks_detected {
        if off.all_delivered() {
            return "deadlocks clear without control; control resolves them too; all tasks delivered".into();
        }
        return VERDICT_RESOLVED.into();
    }
    format!(
        "control leaves work undone: {}/{} tasks delivered, {}/{} deadlocks resolved",
        on.tasks_delivered, on.total_tasks, on.deadlocks_resolved, on.deadlocks_detected
    )
}

/// Runs the scenario with control off and on, same seed and tick budget.
/// The two runs share nothing and execute on separate threads.
pub fn cmd_compare(args: &RunArgs) -> Result<Comparison, RunFailure> {
    let base = args.effective_overrides();
    let with = |on: bool| {
        let mut v = base.clone();
        v.push(Override::new("control", on.to_string()));
        v
    };
    let (off_o, on_o) = (with(false), with(true));
    let off_spec = parse_scenario(&args.scenario, &off_o)?;
    let on_spec = parse_scenario(&args.scenario, &on_o)?;
    let (off, on) = std::thread::scope(|s| {
        let a = s.spawn(|| execute(&off_spec, &off_o, false));
        let b = s.spawn(|| execute(&on_spec, &on_o, false));
        (a.join().expect("run thread"), b.join().expect("run thread"))
    });
    let (off, on) = (off?, on?);
    let verdict = verdict(&off.summary, &on.summary);
    Ok(Comparison { off, on, verdict })
}

fn stop_label(s: &StopReason) -> String {
    match s {
        StopReason::TickBudget => "tick-budget".into(),
        StopReason::Terminated(name) => name.clone(),
    }
}

impl Comparison {
    pub fn exit_code(&self) -> i32 {
        self.on.exit_code()
    }

    pub fn table(&self) -> String {
        let (a, b) = (&self.off.summary, &self.on.summary);
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        let rows: Vec<(&str, String, String)> = vec![
            ("ticks_run", a.ticks_run.to_string(), b.ticks_run.to_string()),
            ("stop", stop_label(&a.stop), stop_label(&b.stop)),
            (
                "tasks_delivered",
                format!("{}/{}", a.tasks_delivered, a.total_tasks),
                format!("{}/{}", b.tasks_delivered, b.total_tasks),
            ),
            ("deadlocks_detected", a.deadlocks_detected.to_string(), b.deadlocks_detected.to_string()),
            ("deadlocks_resolved", a.deadlocks_resolved.to_string(), b.deadlocks_resolved.to_string()),
            ("mean_task_latency_ticks", opt(a.mean_task_latency_ticks), opt(b.mean_task_latency_ticks)),
            ("agv_idle_ratio", format!("{:.4}", a.agv_idle_ratio), format!("{:.4}", b.agv_idle_ratio)),
        ];
        let mut s = format!("{:<26}{:>24}{:>24}\n", "metric", "control=off", "control=on");
        for (name, x, y) in rows {
            let _ = writeln!(s, "{name:<26}{x:>24}{y:>24}");
        }
        s
    }

    /// Both metric tables stacked, with a leading `control` column.
    pub fn metrics_csv(&self) -> String {
        let mut s = format!("control,{}\n", metrics_header());
        for (mode, run) in [("off", &self.off), ("on", &self.on)] {
            for line in run.metrics_csv().lines().skip(1) {
                let _ = writeln!(s, "{mode},{line}");
            }
        }
        s
    }
}

fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)
}

fn report_failure(err: &mut dyn Write, f: &RunFailure) -> i32 {
    let _ = writeln!(err, "{f}");
    f.exit_code()
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
            } else {
                let _ = write!(out, "{}", e.render());
            }
            return code;
        }
    };
    match cli.command {
        Command::Run(a) => {
            let arts = match cmd_run(&a, a.trace_out.is_some()) {
                Ok(r) => r,
                Err(f) => return report_failure(err, &f),
            };
            if let Some(p) = &a.metrics_out {
                if let Err(e) = write_file(p, &arts.metrics_csv()) {
                    let _ = writeln!(err, "cannot write {}: {e}", p.display());
                    return EXIT_CONTRACT;
                }
            }
            if let (Some(p), Some(t)) = (&a.trace_out, arts.trace_lines()) {
                if let Err(e) = write_file(p, &t) {
                    let _ = writeln!(err, "cannot write {}: {e}", p.display());
                    return EXIT_CONTRACT;
                }
            }
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&arts.summary_json()).unwrap());
            for d in &arts.summary.no_escape {
                let m: Vec<&str> = d.members.iter().map(|a| a.as_str()).collect();
                let _ = writeln!(err, "no escape path for {} (members {}) at tick {}", d.macro_agent, m.join(","), d.tick);
            }
            arts.exit_code()
        }
        Command::Compare(a) => {
            let cmp = match cmd_compare(&a) {
                Ok(c) => c,
                Err(f) => return report_failure(err, &f),
            };
            if let Some(p) = &a.metrics_out {
                if let Err(e) = write_file(p, &cmp.metrics_csv()) {
                    let _ = writeln!(err, "cannot write {}: {e}", p.display());
                    return EXIT_CONTRACT;
                }
            }
            let _ = write!(out, "{}", cmp.table());
            let _ = writeln!(out, "verdict: {}", cmp.verdict);
            cmp.exit_code()
        }
        Command::Validate(a) => match parse_scenario(&a.scenario, &[]) {
            Ok(spec) => {
                let _ = writeln!(out, "valid: {} ({})", spec.name, a.scenario.display());
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(err, "{}: invalid", a.scenario.display());
                for i in e.issues() {
                    let _ = writeln!(err, "  {i}");
                }
                EXIT_INVALID
            }
        },
    }
}
