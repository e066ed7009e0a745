//! Register traces and their relation to schedules: erasure, membership,
//! simulation of schedules by register runs, and exhaustive enumeration.

mod construct;
mod enumerate;

use std::collections::HashSet;
use std::fmt;

use rustc_hash::FxHashSet;
use thiserror::Error;

use crate::action::{Action, ThreadId, Value};
use crate::register::{Activity, Model, Register, RegisterConfig, RegisterError, RegisterState};
use crate::schedule::{content_lines, header_u8, infer_params, parse_header, Schedule, ScheduleError};

pub use construct::{construct_write_order_trace, write_enumeration, WriteEnumeration};
pub use enumerate::{for_each_trace, TraceFilter};

/// Default bound on the number of search nodes [`simulate_schedule`] visits.
pub const DEFAULT_SIMULATION_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BridgeError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("the event sequence is not a trace of the {0} register")]
    NotATrace(Model),
    #[error("simulation gave up after visiting {0} search nodes")]
    SearchLimit(usize),
    #[error("construction failed: {0}")]
    Construction(String),
}

/// A finite sequence of register actions tagged with the model that
/// produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub model: Model,
    pub config: RegisterConfig,
    pub events: Vec<Action>,
}

impl Trace {
    /// Wraps `events` after checking that the model can produce them.
    pub fn new(model: Model, config: RegisterConfig, events: Vec<Action>) -> Result<Self, BridgeError> {
        config.validate()?;
        if !is_trace(model, config, &events) {
            return Err(BridgeError::NotATrace(model));
        }
        Ok(Trace { model, config, events })
    }

    /// Every thread's projection is empty or ends with a response.
    pub fn is_complete(&self) -> bool {
        complete(self.config.threads, &self.events)
    }

    /// All write invocations and responses are by one thread.
    pub fn is_single_writer(&self) -> bool {
        single_writer(&self.events)
    }

    pub fn erase(&self) -> Vec<Action> {
        erase(&self.events)
    }

    /// The erased trace as a schedule with the same parameters.
    pub fn to_schedule(&self) -> Result<Schedule, ScheduleError> {
        Schedule::new(
            self.config.threads,
            self.config.domain_size,
            self.config.initial,
            self.erase(),
        )
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trace model={} n={} domain={} init={}",
            self.model, self.config.threads, self.config.domain_size, self.config.initial
        )?;
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

pub(crate) fn complete(threads: u8, events: &[Action]) -> bool {
    let mut last: Vec<Option<Action>> = vec![None; threads as usize];
    for &e in events {
        if let Some(slot) = last.get_mut(e.thread().index()) {
            *slot = Some(e);
        }
    }
    last.iter().all(|a| a.is_none_or(|a| a.is_response()))
}

pub(crate) fn single_writer(events: &[Action]) -> bool {
    let mut writer: Option<ThreadId> = None;
    for e in events {
        if let Action::InvokeWrite(t, _) = *e {
            if writer.is_some_and(|w| w != t) {
                return false;
            }
            writer = Some(t);
        }
    }
    true
}

/// Removes the order and execute actions.
pub fn erase(events: &[Action]) -> Vec<Action> {
    events.iter().copied().filter(|a| !a.is_internal()).collect()
}

/// Whether some run of the register from its initial state is labelled with
/// exactly `events`. Tracks the set of states the prefix can lead to.
pub fn is_trace(model: Model, config: RegisterConfig, events: &[Action]) -> bool {
    let Ok(reg) = Register::new(model, config) else {
        return false;
    };
    let mut states: FxHashSet<RegisterState> = FxHashSet::default();
    states.insert(reg.initial());
    let mut buf = Vec::new();
    for &a in events {
        let mut next = FxHashSet::default();
        for s in &states {
            buf.clear();
            reg.step_into(s, a, &mut buf);
            next.extend(buf.drain(..));
        }
        if next.is_empty() {
            return false;
        }
        states = next;
    }
    true
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Simulation {
    Trace(Trace),
    NotSimulable,
}

impl Simulation {
    pub fn trace(&self) -> Option<&Trace> {
        match self {
            Simulation::Trace(t) => Some(t),
            Simulation::NotSimulable => None,
        }
    }
}

/// Searches for a trace of `model` whose erasure is `sched`, inserting
/// internal actions between schedule events. Schedule events are tried
/// before internal actions, so internal actions land as late as possible.
pub fn simulate_schedule(model: Model, sched: &Schedule, limit: usize) -> Result<Simulation, BridgeError> {
    let config = sched.register_config();
    let reg = Register::new(model, config)?;
    let events = sched.events();
    let mut visited: HashSet<(usize, RegisterState)> = HashSet::new();
    let mut path = Vec::with_capacity(events.len() * 2);
    let found = simulate_from(&reg, events, 0, reg.initial(), &mut visited, &mut path, limit)?;
    Ok(if found {
        Simulation::Trace(Trace {
            model,
            config,
            events: path,
        })
    } else {
        Simulation::NotSimulable
    })
}

fn simulate_from(
    reg: &Register,
    events: &[Action],
    pos: usize,
    state: RegisterState,
    visited: &mut HashSet<(usize, RegisterState)>,
    path: &mut Vec<Action>,
    limit: usize,
) -> Result<bool, BridgeError> {
    if pos == events.len() {
        return Ok(true);
    }
    if visited.len() >= limit {
        return Err(BridgeError::SearchLimit(limit));
    }
    if !visited.insert((pos, state.clone())) {
        return Ok(false);
    }
    let mut succ = Vec::new();
    reg.step_into(&state, events[pos], &mut succ);
    for next in succ {
        path.push(events[pos]);
        if simulate_from(reg, events, pos + 1, next, visited, path, limit)? {
            return Ok(true);
        }
        path.pop();
    }
    for a in reg.enabled(&state).into_iter().filter(|a| a.is_internal()) {
        let mut succ = Vec::new();
        reg.step_into(&state, a, &mut succ);
        for next in succ {
            path.push(a);
            if simulate_from(reg, events, pos, next, visited, path, limit)? {
                return Ok(true);
            }
            path.pop();
        }
    }
    Ok(false)
}

/// Parses the trace file format: a `trace model=<m> n=<threads>
/// domain=<size> init=<value>` header followed by one action per line.
/// The sequence must be a trace of the named model.
pub fn parse_trace(text: &str) -> Result<Trace, BridgeError> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(BridgeError::Parse {
        line: 1,
        message: "missing `trace` header".into(),
    })?;
    let fields = parse_header(header, hline, "trace")?;
    let model: Model = fields
        .get("model")
        .ok_or(BridgeError::Parse {
            line: hline,
            message: "header lacks `model=`".into(),
        })?
        .parse()?;
    let mut events = Vec::new();
    for (lineno, line) in lines {
        let action: Action = line.parse().map_err(|e: crate::action::ParseActionError| BridgeError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if matches!(action, Action::Crit(_) | Action::NonCrit(_)) {
            return Err(BridgeError::Parse {
                line: lineno,
                message: "critical-section events are not register actions".into(),
            });
        }
        events.push(action);
    }
    let (threads, domain) = infer_params(&events);
    let config = RegisterConfig::new(
        header_u8(&fields, "domain", hline)?.unwrap_or(domain),
        Value(header_u8(&fields, "init", hline)?.unwrap_or(0)),
        header_u8(&fields, "n", hline)?.unwrap_or(threads),
    )?;
    Trace::new(model, config, events)
}

/// Whether thread `t` has an operation in progress in any of `states`.
pub(crate) fn busy(states: &FxHashSet<RegisterState>, t: ThreadId) -> bool {
    states.iter().any(|s| s.activity(t) != Activity::Idle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::parse_schedule;

    fn cfg(domain: u8, threads: u8) -> RegisterConfig {
        RegisterConfig::new(domain, Value(0), threads).unwrap()
    }

    fn acts(text: &str) -> Vec<Action> {
        text.split(',').map(|a| a.trim().parse().unwrap()).collect()
    }

    #[test]
    fn erase_drops_internal_actions() {
        assert_eq!(erase(&acts("sw 0 1, ow 0, fw 0")), acts("sw 0 1, fw 0"));
        assert_eq!(erase(&acts("sr 0, fr 0 0")), acts("sr 0, fr 0 0"));
        assert_eq!(erase(&acts("sr 0, er 0, fr 0 0")), acts("sr 0, fr 0 0"));
    }

    #[test]
    fn membership() {
        assert!(!is_trace(Model::Regular, cfg(2, 2), &acts("sr 0, fr 0 1")));
        assert!(is_trace(Model::Regular, cfg(2, 2), &acts("sw 0 1, ow 0, fw 0, sr 1, fr 1 1")));
        assert!(!is_trace(Model::Regular, cfg(2, 2), &acts("sw 0 1, fw 0")));
        assert!(is_trace(Model::Atomic, cfg(2, 1), &acts("sr 0, er 0, fr 0 0")));
        assert!(!is_trace(Model::Safe, cfg(2, 1), &acts("sr 0, er 0, fr 0 0")));
        assert!(is_trace(Model::Safe, cfg(2, 2), &[]));
    }

    #[test]
    fn safe_membership_resolves_overlapping_write_values_later() {
        // both writes overlap, the register ends at 0 although 1 was written
        let events = acts("sw 0 1, sw 1 1, fw 0, fw 1, sr 0, fr 0 0");
        assert!(is_trace(Model::Safe, cfg(2, 2), &events));
        assert!(!is_trace(Model::Regular, cfg(2, 2), &acts("sw 0 1, ow 0, sw 1 1, ow 1, fw 0, fw 1, sr 0, fr 0 0")));
    }

    #[test]
    fn trace_file_round_trip() {
        let t = Trace::new(Model::Regular, cfg(2, 2), acts("sw 0 1, ow 0, fw 0, sr 1, fr 1 1")).unwrap();
        assert_eq!(parse_trace(&t.to_string()).unwrap(), t);
        assert!(matches!(
            parse_trace("trace model=regular n=2 domain=2 init=0\nsw 0 1\nfw 0\n"),
            Err(BridgeError::NotATrace(Model::Regular))
        ));
        assert!(matches!(parse_trace("sw 0 1"), Err(BridgeError::Schedule(_))));
    }

    #[test]
    fn completeness_and_single_writer() {
        let t = Trace::new(Model::Regular, cfg(2, 2), acts("sw 0 1, ow 0")).unwrap();
        assert!(!t.is_complete());
        let t = Trace::new(Model::Atomic, cfg(2, 2), acts("sw 0 1, sw 1 0, ew 0, ew 1, fw 0, fw 1")).unwrap();
        assert!(t.is_complete());
        assert!(!t.is_single_writer());
    }

    #[test]
    fn sequential_safe_schedule_simulates_to_itself() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1\n").unwrap();
        let sim = simulate_schedule(Model::Safe, &s, DEFAULT_SIMULATION_LIMIT).unwrap();
        assert_eq!(sim.trace().unwrap().events, s.events());
    }

    #[test]
    fn regular_simulation_inserts_order_actions() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1\n").unwrap();
        let sim = simulate_schedule(Model::Regular, &s, DEFAULT_SIMULATION_LIMIT).unwrap();
        assert_eq!(sim.trace().unwrap().events, acts("sw 0 1, ow 0, fw 0, sr 1, fr 1 1"));
        let bad = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 0\n").unwrap();
        assert_eq!(simulate_schedule(Model::Regular, &bad, DEFAULT_SIMULATION_LIMIT).unwrap(), Simulation::NotSimulable);
    }

    #[test]
    fn simulation_limit_is_an_error() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 0\n").unwrap();
        assert_eq!(simulate_schedule(Model::Regular, &s, 2), Err(BridgeError::SearchLimit(2)));
    }
}
