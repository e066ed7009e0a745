//! The `regmc` command line: `check`, `schedule` and `simulate`.
//!
//! Exit status: 0 when everything holds, 1 on a violation (or a schedule
//! that cannot be simulated), 2 when a verdict is inconclusive, 3 on usage
//! or input errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use crate::action::ThreadId;
use crate::algorithms::{self, parse_reset_order, LamportVariant, Params};
use crate::bridge::{construct_write_order_trace, simulate_schedule, Simulation, DEFAULT_SIMULATION_LIMIT};
use crate::checker::{
    check_mutex, check_reach, check_reach_divergence, explore, render_timeline, state_limit_from_env, Outcome,
    System, SystemConfig,
};
use crate::register::Model;
use crate::schedule::{
    check_atomic, check_regular, check_safe, check_weak, check_write_order, parse_schedule, OpId, OpKind, Schedule,
    SearchLimits, Verdict,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "regmc", version, about = "Model checking over safe, regular and atomic registers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explore an algorithm and check mutual exclusion and reachability.
    Check(CheckArgs),
    /// Evaluate consistency conditions on a schedule file.
    Schedule(ScheduleArgs),
    /// Turn a schedule file into a trace of a register model.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// One of: peterson, szymanski-flag, szymanski-bits, szymanski-3bit,
    /// lamport-3bit, attiya-welch, attiya-welch-alt.
    pub algorithm: String,
    #[arg(long)]
    pub threads: Option<u8>,
    /// Lamport three-bit variant: snapshot or reread.
    #[arg(long, default_value = "snapshot")]
    pub variant: String,
    /// Exit-protocol order of the flag bits, e.g. door_out,door_in,intent.
    #[arg(long)]
    pub reset_order: Option<String>,
    /// Guard the three-bit algorithm's w/s accesses with a semaphore.
    #[arg(long)]
    pub semaphore: bool,
    /// Register models, e.g. all=safe,turn=atomic; unassigned registers
    /// are atomic.
    #[arg(long, default_value = "all=atomic")]
    pub registers: String,
    /// Comma-separated: mutex, reach, reach-divergence.
    #[arg(long, default_value = "mutex,reach")]
    pub property: String,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Overrides REGMC_STATE_LIMIT and the default limit.
    #[arg(long)]
    pub state_limit: Option<usize>,
    /// Write the counterexample path here on a violation.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the counterexample timeline as SVG here on a violation.
    #[arg(long)]
    pub timeline: Option<PathBuf>,
    /// Write the state graph, one edge per line.
    #[arg(long)]
    pub export_graph: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    pub file: PathBuf,
    /// Comma-separated: safe, regular, atomic, weak, write-order, all.
    #[arg(long, default_value = "all")]
    pub condition: String,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    #[arg(long, default_value_t = SearchLimits::default().atomic_ops)]
    pub atomic_limit: usize,
    #[arg(long, default_value_t = SearchLimits::default().write_order_writes)]
    pub write_order_limit: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub model: Model,
    /// Build the regular trace from a write-order family instead of
    /// searching.
    #[arg(long)]
    pub construct: bool,
    /// Where to write the trace; standard output by default.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SIMULATION_LIMIT)]
    pub limit: usize,
}

/// Failure before any verdict: bad flags, unreadable files, bad input.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

fn usage(e: impl std::fmt::Display) -> UsageError {
    UsageError(e.to_string())
}

/// Parses `args` (including the program name) and runs the command,
/// writing reports to `out`. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Check(a) => cmd_check(&a, out),
        Command::Schedule(a) => cmd_schedule(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PropertyKind {
    Mutex,
    Reach,
    Divergence,
}

fn parse_properties(s: &str) -> Result<Vec<PropertyKind>, UsageError> {
    let mut props = Vec::new();
    for p in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k = match p {
            "mutex" => PropertyKind::Mutex,
            "reach" => PropertyKind::Reach,
            "reach-divergence" => PropertyKind::Divergence,
            _ => return Err(usage(format!("unknown property `{p}`"))),
        };
        if !props.contains(&k) {
            props.push(k);
        }
    }
    if props.is_empty() {
        return Err(usage("no property selected"));
    }
    Ok(props)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{suffix}"),
    };
    path.with_file_name(name)
}

fn write_file(path: &Path, contents: &str) -> Result<(), UsageError> {
    std::fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32, UsageError> {
    let params = Params {
        threads: a.threads,
        variant: a.variant.parse::<LamportVariant>().map_err(usage)?,
        reset_order: match &a.reset_order {
            Some(s) => parse_reset_order(s).map_err(usage)?,
            None => algorithms::Bit::LISTED,
        },
        semaphore: a.semaphore,
    };
    let properties = parse_properties(&a.property)?;
    let program = algorithms::build(&a.algorithm, params).map_err(usage)?;
    let mut config = SystemConfig::uniform(program, Model::Atomic);
    config.assign(&a.registers).map_err(usage)?;
    let limit = match a.state_limit {
        Some(l) => l,
        None => state_limit_from_env().map_err(usage)?,
    };
    let system = System::new(config).map_err(usage)?;
    let graph = explore(system, limit).map_err(usage)?;
    if let Some(path) = &a.export_graph {
        let file = std::fs::File::create(path).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        graph
            .export(std::io::BufWriter::new(file))
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    let system = &graph.system;
    let program = system.program();

    let mut results: Vec<(String, Outcome)> = Vec::new();
    for p in &properties {
        match p {
            PropertyKind::Mutex => results.push(("mutex".into(), check_mutex(&graph))),
            PropertyKind::Reach | PropertyKind::Divergence => {
                for t in 0..system.threads() as u8 {
                    let (name, outcome) = if *p == PropertyKind::Reach {
                        ("reach", check_reach(&graph, ThreadId(t)))
                    } else {
                        ("reach-divergence", check_reach_divergence(&graph, ThreadId(t)))
                    };
                    results.push((format!("{name}({t})"), outcome));
                }
            }
        }
    }

    let violations: Vec<&(String, Outcome)> = results.iter().filter(|(_, o)| o.violated()).collect();
    let suffixed = violations.len() > 1;
    for (name, outcome) in &violations {
        let cx = outcome.counterexample().expect("violated");
        let file_suffix = name.replace(['(', ')'], "");
        if let Some(path) = &a.trace {
            let path = if suffixed { with_suffix(path, &file_suffix) } else { path.clone() };
            write_file(&path, &cx.render(system))?;
        }
        if let Some(path) = &a.timeline {
            let path = if suffixed { with_suffix(path, &file_suffix) } else { path.clone() };
            let timeline = render_timeline(program, cx).map_err(usage)?;
            write_file(&path, &timeline.to_svg())?;
        }
    }

    let models: Vec<(String, String)> = program
        .registers
        .iter()
        .zip(&system.config.models)
        .map(|(r, m)| (r.name.clone(), m.to_string()))
        .collect();
    match a.format {
        Format::Text => {
            let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(usage);
            w(out, format!("algorithm {} threads={}", program.name, program.threads))?;
            let regs: Vec<String> = models.iter().map(|(r, m)| format!("{r}={m}")).collect();
            w(out, format!("registers {}", regs.join(" ")))?;
            let status = if graph.complete { "" } else { " (state limit reached)" };
            w(out, format!("states {} edges {}{status}", graph.states(), graph.edges()))?;
            for (name, outcome) in &results {
                w(out, format!("{name:<22} {}", outcome.label()))?;
            }
            for (name, outcome) in &violations {
                let cx = outcome.counterexample().expect("violated");
                w(out, format!("\ncounterexample for {name}:"))?;
                write!(out, "{}", cx.render(system)).map_err(usage)?;
                let timeline = render_timeline(program, cx).map_err(usage)?;
                write!(out, "\n{}", timeline.to_text()).map_err(usage)?;
            }
        }
        Format::Json => {
            let props: Vec<Json> = results
                .iter()
                .map(|(name, outcome)| {
                    let mut v = json!({ "property": name, "outcome": outcome.label() });
                    if let Some(cx) = outcome.counterexample() {
                        let steps: Vec<String> = cx.labels.iter().map(|l| l.display(program).to_string()).collect();
                        v["counterexample"] = json!({ "steps": steps, "loop_start": cx.loop_start });
                        if let Ok(t) = render_timeline(program, cx) {
                            v["timeline"] = serde_json::to_value(&t).unwrap_or(Json::Null);
                        }
                    }
                    v
                })
                .collect();
            let report = json!({
                "algorithm": program.name,
                "threads": program.threads,
                "registers": models.iter().map(|(r, m)| json!({"name": r, "model": m})).collect::<Vec<_>>(),
                "states": graph.states(),
                "edges": graph.edges(),
                "complete": graph.complete,
                "properties": props,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serialisable")).map_err(usage)?;
        }
    }
    Ok(if !violations.is_empty() {
        EXIT_VIOLATION
    } else if results.iter().any(|(_, o)| matches!(o, Outcome::Inconclusive { .. })) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Condition {
    Safe,
    Regular,
    Atomic,
    Weak,
    WriteOrder,
}

impl Condition {
    const ALL: [Condition; 5] = [
        Condition::Safe,
        Condition::Regular,
        Condition::Atomic,
        Condition::Weak,
        Condition::WriteOrder,
    ];

    fn name(self) -> &'static str {
        match self {
            Condition::Safe => "safe",
            Condition::Regular => "regular",
            Condition::Atomic => "atomic",
            Condition::Weak => "weak",
            Condition::WriteOrder => "write-order",
        }
    }
}

fn parse_conditions(s: &str) -> Result<(Vec<Condition>, bool), UsageError> {
    let mut conds = Vec::new();
    let mut all = false;
    for c in s.split(',').map(str::trim).filter(|c| !c.is_empty()) {
        if c == "all" {
            all = true;
            continue;
        }
        let k = Condition::ALL
            .into_iter()
            .find(|k| k.name() == c)
            .ok_or_else(|| usage(format!("unknown condition `{c}`")))?;
        if !conds.contains(&k) {
            conds.push(k);
        }
    }
    if all {
        conds = Condition::ALL.to_vec();
    }
    if conds.is_empty() {
        return Err(usage("no condition selected"));
    }
    Ok((conds, all))
}

/// `init`, or e.g. `w2(t0:=1)` / `r3(t1=1)`: kind, operation index and the
/// thread and value.
fn describe_op(s: &Schedule, o: OpId) -> String {
    if o == OpId::INIT {
        return "init".into();
    }
    let op = &s.operations()[o.0];
    let t = op.thread.map_or(0, |t| t.0);
    match op.kind {
        OpKind::Write { value } => format!("w{}(t{t}:={value})", o.0),
        OpKind::Read { ret: Some(v) } => format!("r{}(t{t}={v})", o.0),
        OpKind::Read { ret: None } => format!("r{}(t{t})", o.0),
    }
}

fn describe_order(s: &Schedule, order: &[OpId]) -> String {
    order.iter().map(|&o| describe_op(s, o)).collect::<Vec<_>>().join(" < ")
}

struct ConditionReport {
    condition: Condition,
    verdict: &'static str,
    detail: Vec<String>,
}

fn verdict_report<W>(s: &Schedule, c: Condition, v: Verdict<W>, witness: impl Fn(&W) -> Vec<String>) -> ConditionReport {
    let detail = match &v {
        Verdict::Holds(w) => witness(w),
        Verdict::Fails(violation) => {
            let at = violation.read.map(|r| format!("{}: ", describe_op(s, r))).unwrap_or_default();
            vec![format!("{at}{}", violation.reason)]
        }
        Verdict::Unknown(why) => vec![why.clone()],
    };
    ConditionReport {
        condition: c,
        verdict: v.label(),
        detail,
    }
}

pub fn cmd_schedule(a: &ScheduleArgs, out: &mut dyn Write) -> Result<i32, UsageError> {
    let (conds, all) = parse_conditions(&a.condition)?;
    let text = std::fs::read_to_string(&a.file).map_err(|e| usage(format!("cannot read {}: {e}", a.file.display())))?;
    let s = parse_schedule(&text).map_err(usage)?;
    let limits = SearchLimits {
        atomic_ops: a.atomic_limit,
        write_order_writes: a.write_order_limit,
    };
    let mut reports = Vec::new();
    for c in conds {
        let report = match c {
            Condition::Safe | Condition::Regular if !s.is_single_writer() => {
                if !all {
                    return Err(usage(format!("the {} condition needs a single-writer schedule", c.name())));
                }
                ConditionReport {
                    condition: c,
                    verdict: "n/a",
                    detail: vec!["not a single-writer schedule".into()],
                }
            }
            Condition::Safe => verdict_report(&s, c, check_safe(&s).map_err(usage)?, |_| Vec::new()),
            Condition::Regular => verdict_report(&s, c, check_regular(&s).map_err(usage)?, |_| Vec::new()),
            Condition::Atomic => verdict_report(&s, c, check_atomic(&s, limits).map_err(usage)?, |w| {
                vec![describe_order(&s, &w.0)]
            }),
            Condition::Weak => verdict_report(&s, c, check_weak(&s, limits).map_err(usage)?, |w| {
                w.iter()
                    .map(|(r, order)| format!("{}: {}", describe_op(&s, *r), describe_order(&s, &order.0)))
                    .collect()
            }),
            Condition::WriteOrder => verdict_report(&s, c, check_write_order(&s, limits).map_err(usage)?, |w| {
                let mut lines = vec![format!("writes: {}", describe_order(&s, &w.write_order))];
                lines.extend(
                    w.orders
                        .iter()
                        .map(|(r, order)| format!("{}: {}", describe_op(&s, *r), describe_order(&s, order))),
                );
                lines
            }),
        };
        reports.push(report);
    }
    match a.format {
        Format::Text => {
            for r in &reports {
                writeln!(out, "{:<12} {}", r.condition.name(), r.verdict).map_err(usage)?;
                for d in &r.detail {
                    writeln!(out, "    {d}").map_err(usage)?;
                }
            }
        }
        Format::Json => {
            let conditions: Vec<Json> = reports
                .iter()
                .map(|r| json!({ "condition": r.condition.name(), "verdict": r.verdict, "detail": r.detail }))
                .collect();
            let report = json!({
                "threads": s.register_config().threads,
                "domain": s.register_config().domain_size,
                "events": s.len(),
                "conditions": conditions,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serialisable")).map_err(usage)?;
        }
    }
    Ok(if reports.iter().any(|r| r.verdict == "fails") {
        EXIT_VIOLATION
    } else if reports.iter().any(|r| r.verdict == "unknown") {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    })
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32, UsageError> {
    let text = std::fs::read_to_string(&a.file).map_err(|e| usage(format!("cannot read {}: {e}", a.file.display())))?;
    let s = parse_schedule(&text).map_err(usage)?;
    let trace = if a.construct {
        if a.model != Model::Regular {
            return Err(usage("--construct builds regular traces only"));
        }
        match check_write_order(&s, SearchLimits::default()).map_err(usage)? {
            Verdict::Holds(family) => Some(construct_write_order_trace(&s, &family).map_err(usage)?),
            Verdict::Fails(v) => {
                writeln!(out, "not constructible: {}", v.reason).map_err(usage)?;
                return Ok(EXIT_VIOLATION);
            }
            Verdict::Unknown(why) => {
                writeln!(out, "unknown: {why}").map_err(usage)?;
                return Ok(EXIT_INCONCLUSIVE);
            }
        }
    } else {
        match simulate_schedule(a.model, &s, a.limit) {
            Ok(Simulation::Trace(t)) => Some(t),
            Ok(Simulation::NotSimulable) => None,
            Err(crate::bridge::BridgeError::SearchLimit(n)) => {
                writeln!(out, "unknown: search stopped after {n} states").map_err(usage)?;
                return Ok(EXIT_INCONCLUSIVE);
            }
            Err(e) => return Err(usage(e)),
        }
    };
    match trace {
        Some(t) => {
            match &a.output {
                Some(path) => write_file(path, &t.to_string())?,
                None => write!(out, "{t}").map_err(usage)?,
            }
            Ok(EXIT_OK)
        }
        None => {
            writeln!(out, "not simulable in the {} model", a.model).map_err(usage)?;
            Ok(EXIT_VIOLATION)
        }
    }
}
