//! Acceptance suite. Prints one PASS/FAIL line per criterion; the whole run
//! fails if any criterion does. Criteria run one after another in a single
//! test so that only one large state graph is alive at a time.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use regmc::action::{Action, ThreadId};
use regmc::algorithms::{build, cg, ord, parse_reset_order, Bit, LamportVariant, Params};
use regmc::bridge::{is_trace, simulate_schedule, Simulation, DEFAULT_SIMULATION_LIMIT};
use regmc::checker::timeline::OpKind as TimelineKind;
use regmc::checker::{
    check_mutex, check_reach, explore, render_timeline, state_limit_from_env, Counterexample, Outcome, StateGraph,
    System, SystemConfig, Timeline,
};
use regmc::register::Model;
use regmc::schedule::{check_weak, check_write_order, parse_schedule, SearchLimits};

use common::Tally;

/// Verdicts are compared as exact booleans.
type Verdict = (bool, bool);

/// (mutex holds, reach holds for every thread), per model.
struct Row {
    name: &'static str,
    algorithm: &'static str,
    params: Params,
    expected: [Verdict; 3],
}

fn rows() -> Vec<Row> {
    let two = Params::default();
    let three = Params {
        threads: Some(3),
        ..Params::default()
    };
    let y = true;
    let n = false;
    vec![
        Row { name: "Peterson", algorithm: "peterson", params: two, expected: [(n, y), (n, y), (y, y)] },
        Row { name: "Attiya-Welch", algorithm: "attiya-welch", params: two, expected: [(y, y), (y, y), (y, y)] },
        Row { name: "Attiya-Welch alt", algorithm: "attiya-welch-alt", params: two, expected: [(y, n), (y, n), (y, y)] },
        Row { name: "Szymanski flag", algorithm: "szymanski-flag", params: three, expected: [(n, n), (n, y), (y, y)] },
        Row { name: "Szymanski bits", algorithm: "szymanski-bits", params: three, expected: [(n, y), (n, y), (n, y)] },
        Row {
            name: "Szymanski 3-bit",
            algorithm: "szymanski-3bit",
            params: Params { semaphore: true, ..three },
            expected: [(n, y), (n, y), (n, y)],
        },
        Row { name: "Lamport 3-bit", algorithm: "lamport-3bit", params: three, expected: [(y, y), (y, y), (y, y)] },
    ]
}

struct Checked {
    graph: StateGraph,
    mutex: Outcome,
    reach: Vec<Outcome>,
}

impl Checked {
    fn verdict(&self) -> Result<Verdict, String> {
        if !self.graph.complete {
            return Err(format!("state limit {} exceeded", self.graph.limit));
        }
        Ok((self.mutex.holds(), self.reach.iter().all(Outcome::holds)))
    }

    fn counterexamples(&self) -> impl Iterator<Item = &Counterexample> {
        std::iter::once(&self.mutex).chain(&self.reach).filter_map(Outcome::counterexample)
    }
}

fn check(algorithm: &str, params: Params, registers: &str) -> Checked {
    let mut config = SystemConfig::uniform(build(algorithm, params).unwrap(), Model::Atomic);
    config.assign(registers).unwrap();
    let limit = state_limit_from_env().unwrap();
    let graph = explore(System::new(config).unwrap(), limit).unwrap();
    let mutex = check_mutex(&graph);
    let reach = (0..graph.system.threads() as u8).map(|t| check_reach(&graph, ThreadId(t))).collect();
    Checked { graph, mutex, reach }
}

/// Every counterexample of a run replays through the transition relation.
fn replay_all(c: &Checked, what: &str, replayed: &mut usize) -> Result<(), String> {
    for cx in c.counterexamples() {
        cx.replay(&c.graph.system).map_err(|e| format!("{what}: {e}"))?;
        *replayed += 1;
    }
    Ok(())
}

fn show(v: Verdict) -> String {
    let b = |x| if x { "holds" } else { "violated" };
    format!("mutex {} / reach {}", b(v.0), b(v.1))
}

fn criterion_1(replayed: &mut usize, log: &mut Vec<String>) -> Result<(), String> {
    let mut wrong = Vec::new();
    for row in rows() {
        for (model, expected) in Model::ALL.into_iter().zip(row.expected) {
            let start = Instant::now();
            let c = check(row.algorithm, row.params, &format!("all={model}"));
            replay_all(&c, row.name, replayed)?;
            let got = c.verdict().map_err(|e| format!("{} {model}: {e}", row.name))?;
            log.push(format!(
                "  {:<18} {:<8} {:>10} states {:>6.1}s  {}",
                row.name,
                model.to_string(),
                c.graph.states(),
                start.elapsed().as_secs_f64(),
                show(got)
            ));
            if got != expected {
                wrong.push(format!("{} {model}: expected {}, got {}", row.name, show(expected), show(got)));
            }
        }
    }
    if wrong.is_empty() {
        Ok(())
    } else {
        Err(wrong.join("; "))
    }
}

fn criterion_2(replayed: &mut usize) -> Result<(), String> {
    let c = check("peterson", Params::default(), "turn=atomic,flag0=safe,flag1=safe");
    replay_all(&c, "Peterson mixed", replayed)?;
    if c.verdict()?.0 {
        Ok(())
    } else {
        Err("mutex violated with an atomic turn register".into())
    }
}

fn criterion_3(replayed: &mut usize) -> Result<(), String> {
    let reread = Params {
        threads: Some(2),
        variant: LamportVariant::ReRead,
        ..Params::default()
    };
    let c = check("lamport-3bit", reread, "all=atomic");
    replay_all(&c, "Lamport re-read", replayed)?;
    if c.verdict()?.1 {
        return Err("Lamport re-read variant keeps reach with atomic registers".into());
    }
    drop(c);

    let order = parse_reset_order("door_out,door_in,intent").unwrap();
    assert_eq!(order, [Bit::DoorOut, Bit::DoorIn, Bit::Intent]);
    let reordered = Params {
        threads: Some(3),
        reset_order: order,
        ..Params::default()
    };
    let c = check("szymanski-bits", reordered, "all=atomic");
    replay_all(&c, "Szymanski bits reordered", replayed)?;
    if c.verdict()? != (true, true) {
        return Err(format!("reordered flag bits: {}", show(c.verdict()?)));
    }
    drop(c);

    let sem = Params {
        threads: Some(2),
        semaphore: true,
        ..Params::default()
    };
    let c = check("szymanski-3bit", sem, "all=safe");
    replay_all(&c, "Szymanski 3-bit", replayed)?;
    if c.verdict()? != (true, true) {
        return Err(format!("3-bit with semaphore, 2 threads, safe: {}", show(c.verdict()?)));
    }
    Ok(())
}

const OVERLAPPING_WRITES: &str = "\
schedule n=3 domain=3 init=0
sw 0 1
sw 1 2
fw 0
fw 1
sr 2
fr 2 1
sr 2
fr 2 2
";

const STALE_READ_AFTER_NEWER: &str = "\
schedule n=3 domain=3 init=0
sw 0 1
sw 1 2
fw 0
sr 2
fr 2 2
fw 1
sr 0
fr 0 1
";

fn criterion_4() -> Result<(), String> {
    let limits = SearchLimits::default();
    let a = parse_schedule(OVERLAPPING_WRITES).map_err(|e| e.to_string())?;
    let b = parse_schedule(STALE_READ_AFTER_NEWER).map_err(|e| e.to_string())?;
    if !check_weak(&a, limits).unwrap().holds() {
        return Err("overlapping-writes schedule is not weak".into());
    }
    if !check_write_order(&a, limits).unwrap().fails() {
        return Err("overlapping-writes schedule meets write-order".into());
    }
    if simulate_schedule(Model::Regular, &a, DEFAULT_SIMULATION_LIMIT).unwrap() != Simulation::NotSimulable {
        return Err("overlapping-writes schedule is simulable by a regular register".into());
    }
    if !check_write_order(&b, limits).unwrap().fails() {
        return Err("stale-read schedule meets write-order".into());
    }
    let Simulation::Trace(t) = simulate_schedule(Model::Regular, &b, DEFAULT_SIMULATION_LIMIT).unwrap() else {
        return Err("stale-read schedule is not simulable by a regular register".into());
    };
    if t.erase() != b.events() || !is_trace(Model::Regular, b.register_config(), &t.events) {
        return Err("stale-read schedule simulation is not a regular trace of the schedule".into());
    }
    // w1 is thread 0's write, w2 thread 1's
    let pos = |t0: u8| t.events.iter().position(|a| *a == Action::OrderWrite(ThreadId(t0)));
    match (pos(0), pos(1)) {
        (Some(w1), Some(w2)) if w2 < w1 => Ok(()),
        other => Err(format!("order actions at {other:?}")),
    }
}

fn criterion_5() -> Result<(), String> {
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut take = |what: &str, t: Tally| {
        checked += t.checked;
        if t.checked == 0 {
            failures.push(format!("{what}: nothing checked"));
        }
        failures.extend(t.failures.into_iter().map(|f| format!("{what}: {f}")));
    };
    for model in Model::ALL {
        take(&format!("{model} traces"), common::traces_satisfy_condition(model, 10));
        take(&format!("{model} simulation"), common::condition_iff_simulable(model, 6));
    }
    take("regular weak", common::regular_traces_are_weak(10));
    take("write-order round trip", common::write_order_round_trip(6));
    if failures.is_empty() {
        Ok(())
    } else {
        Err(format!("{} discrepancies over {checked} cases: {}", failures.len(), failures.join(" | ")))
    }
}

/// Overlap of two spans of steps, an open span lasting to the end.
fn overlap(t: &Timeline, a: &regmc::checker::timeline::TimelineOp, b: &regmc::checker::timeline::TimelineOp) -> bool {
    let end = |o: &regmc::checker::timeline::TimelineOp| o.end.unwrap_or(t.steps);
    a.start <= end(b) && b.start <= end(a)
}

fn criterion_6(replayed: usize) -> Result<(), String> {
    if replayed == 0 {
        return Err("no counterexamples were replayed".into());
    }
    let c = check("peterson", Params::default(), "all=safe");
    let cx = c.mutex.counterexample().ok_or("no mutex counterexample")?;
    cx.replay(&c.graph.system)?;
    let t = render_timeline(c.graph.system.program(), cx).map_err(|e| e.to_string())?;
    let on_turn: Vec<_> = t.ops.iter().filter(|o| o.register == "turn").collect();
    let writes: Vec<_> = on_turn.iter().filter(|o| o.kind == TimelineKind::Write).collect();
    let reads: Vec<_> = on_turn.iter().filter(|o| o.kind == TimelineKind::Read).collect();
    let racing_writes = writes
        .iter()
        .flat_map(|a| writes.iter().map(move |b| (a, b)))
        .find(|(a, b)| a.thread < b.thread && overlap(&t, a, b));
    let Some((wa, wb)) = racing_writes else {
        return Err("no two writes of turn by different threads overlap".into());
    };
    if wa.value == wb.value {
        return Err("the racing writes of turn write the same value".into());
    }
    let racing_read = reads.iter().find(|r| writes.iter().any(|w| w.thread != r.thread && overlap(&t, r, w)));
    if racing_read.is_none() {
        return Err("no read of turn overlaps a write of turn".into());
    }
    // both threads end with the critical section enabled
    let mut succ = Vec::new();
    c.graph.system.successors(cx.states.last().unwrap(), &mut succ).unwrap();
    let crit: BTreeSet<_> = succ
        .iter()
        .filter(|(l, _)| matches!(l, regmc::checker::Label::Crit(_)))
        .map(|(l, _)| l.thread())
        .collect();
    if crit.len() != 2 {
        return Err(format!("final state enables crit for {crit:?}"));
    }
    Ok(())
}

fn criterion_7() -> Result<(), String> {
    let mut mismatches = 0;
    let mut cases = 0;
    for mask in 1u32..16 {
        let set: BTreeSet<ThreadId> = (0..4u8).filter(|t| mask & (1 << t) != 0).map(ThreadId).collect();
        let cycle = ord(&set).unwrap();
        let elems: Vec<ThreadId> = set.iter().copied().collect();
        let m = elems.len();
        for bits in 0u32..16 {
            let v = |t: ThreadId| bits & (1 << t.0) != 0;
            for j in 0..m {
                cases += 1;
                // the predecessor in the cycle, wrapping from the first
                // element to the last
                let pred = v(elems[(j + m - 1) % m]);
                let expected = if j == 0 { v(elems[j]) == pred } else { v(elems[j]) != pred };
                if cg(v, &cycle, j).unwrap() != expected {
                    mismatches += 1;
                }
            }
        }
    }
    if mismatches == 0 && cases == 4 * 16 + 6 * 2 * 16 + 4 * 3 * 16 + 4 * 16 {
        Ok(())
    } else {
        Err(format!("{mismatches} mismatches in {cases} cases"))
    }
}

fn report(results: &mut Vec<bool>, n: usize, title: &str, f: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let line = match &r {
        Ok(()) => format!("criterion {n}: PASS {title} ({secs:.1}s)"),
        Err(e) => format!("criterion {n}: FAIL {title} ({secs:.1}s): {e}"),
    };
    // bypass output capture so the lines show up in every run
    let _ = writeln!(std::io::stderr(), "{line}");
    results.push(r.is_ok());
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    let mut replayed = 0;
    let mut table = Vec::new();
    report(&mut results, 1, "table verdicts, 7 algorithms x 3 models", || {
        criterion_1(&mut replayed, &mut table)
    });
    for line in &table {
        let _ = writeln!(std::io::stderr(), "{line}");
    }
    report(&mut results, 2, "Peterson with atomic turn and safe flags keeps mutex", || {
        criterion_2(&mut replayed)
    });
    report(&mut results, 3, "targeted variants", || criterion_3(&mut replayed));
    report(&mut results, 4, "schedule separations", criterion_4);
    report(&mut results, 5, "exhaustive trace/schedule correspondences", criterion_5);
    report(&mut results, 6, "counterexample replay and Peterson timeline", || criterion_6(replayed));
    report(&mut results, 7, "cg against brute force, cycles up to 4", criterion_7);
    let failed: Vec<usize> = (1..=results.len()).filter(|&k| !results[k - 1]).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
