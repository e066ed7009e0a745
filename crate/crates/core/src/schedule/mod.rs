//! Schedules on a single register: sequences of invocations and responses,
//! the operations they contain and the real-time precedence order between
//! those operations.

mod conditions;
mod enumerate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::action::{Action, ParseActionError, ThreadId, Value, MAX_DOMAIN, MAX_THREADS};
use crate::register::RegisterConfig;

pub use conditions::{
    check_atomic, check_regular, check_safe, check_weak, check_write_order, is_legal_serialisation,
    reads_from, SearchLimits, Serialisation, Verdict, Violation, WriteOrderFamily,
};
pub use enumerate::{for_each_schedule, ScheduleShape};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event {index}: `{action}` is not a register invocation or response")]
    NotBase { index: usize, action: Action },
    #[error("event {index}: thread {thread} out of range")]
    ThreadOutOfRange { index: usize, thread: ThreadId },
    #[error("event {index}: value {value} outside the domain")]
    ValueOutOfDomain { index: usize, value: Value },
    #[error("event {index}: response `{action}` without a matching invocation")]
    ResponseWithoutInvocation { index: usize, action: Action },
    #[error("event {index}: thread {thread} invoked an operation while another is active")]
    ConcurrentOperation { index: usize, thread: ThreadId },
    #[error("invalid schedule parameters: {0}")]
    Config(String),
    #[error("schedule is not complete")]
    Incomplete,
    #[error("schedule has writes by more than one thread")]
    NotSingleWriter,
    #[error("operation {0:?} has the wrong kind for this query")]
    WrongKind(OpId),
    #[error("unknown operation {0:?}")]
    UnknownOp(OpId),
    #[error("invalid serialisation witness: {0}")]
    InvalidWitness(String),
}

impl From<(usize, ParseActionError)> for ScheduleError {
    fn from((line, e): (usize, ParseActionError)) -> Self {
        ScheduleError::Parse {
            line,
            message: e.to_string(),
        }
    }
}

/// Index of an operation within [`Schedule::operations`]; `OpId::INIT` is the
/// implicit write of the initial value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct OpId(pub usize);

impl OpId {
    pub const INIT: OpId = OpId(0);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    /// `ret` is `None` while the read has no response.
    Read { ret: Option<Value> },
    Write { value: Value },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operation {
    /// `None` for the initial write.
    pub thread: Option<ThreadId>,
    /// Position among the operations of the same thread.
    pub ordinal: usize,
    pub kind: OpKind,
    pub invocation: Option<usize>,
    pub response: Option<usize>,
}

impl Operation {
    pub fn is_read(&self) -> bool {
        matches!(self.kind, OpKind::Read { .. })
    }

    pub fn is_write(&self) -> bool {
        matches!(self.kind, OpKind::Write { .. })
    }

    pub fn write_value(&self) -> Option<Value> {
        match self.kind {
            OpKind::Write { value } => Some(value),
            OpKind::Read { .. } => None,
        }
    }

    pub fn return_value(&self) -> Option<Value> {
        match self.kind {
            OpKind::Read { ret } => ret,
            OpKind::Write { .. } => None,
        }
    }
}

/// A finite, well-formed schedule together with its operations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub threads: u8,
    pub domain_size: u8,
    pub initial: Value,
    events: Vec<Action>,
    ops: Vec<Operation>,
    /// Operation of each event.
    event_op: Vec<OpId>,
}

impl Schedule {
    pub fn new(threads: u8, domain_size: u8, initial: Value, events: Vec<Action>) -> Result<Self, ScheduleError> {
        if threads == 0 || threads as usize > MAX_THREADS {
            return Err(ScheduleError::Config(format!("thread count {threads} not in 1..={MAX_THREADS}")));
        }
        if domain_size == 0 || domain_size as usize > MAX_DOMAIN {
            return Err(ScheduleError::Config(format!("domain size {domain_size} not in 1..={MAX_DOMAIN}")));
        }
        if initial.0 >= domain_size {
            return Err(ScheduleError::Config(format!("initial value {initial} outside the domain")));
        }
        let mut ops = vec![Operation {
            thread: None,
            ordinal: 0,
            kind: OpKind::Write { value: initial },
            invocation: None,
            response: None,
        }];
        let mut active: Vec<Option<OpId>> = vec![None; threads as usize];
        let mut ordinals = vec![0usize; threads as usize];
        let mut event_op = Vec::with_capacity(events.len());
        for (index, &action) in events.iter().enumerate() {
            if !action.is_base() {
                return Err(ScheduleError::NotBase { index, action });
            }
            let thread = action.thread();
            if thread.0 >= threads {
                return Err(ScheduleError::ThreadOutOfRange { index, thread });
            }
            if let Some(value) = action.value() {
                if value.0 >= domain_size {
                    return Err(ScheduleError::ValueOutOfDomain { index, value });
                }
            }
            let slot = &mut active[thread.index()];
            if action.is_invocation() {
                if slot.is_some() {
                    return Err(ScheduleError::ConcurrentOperation { index, thread });
                }
                let kind = match action {
                    Action::InvokeWrite(_, value) => OpKind::Write { value },
                    _ => OpKind::Read { ret: None },
                };
                let id = OpId(ops.len());
                ops.push(Operation {
                    thread: Some(thread),
                    ordinal: ordinals[thread.index()],
                    kind,
                    invocation: Some(index),
                    response: None,
                });
                ordinals[thread.index()] += 1;
                *slot = Some(id);
                event_op.push(id);
            } else {
                let id = slot.ok_or(ScheduleError::ResponseWithoutInvocation { index, action })?;
                let op = &mut ops[id.0];
                match (action, &mut op.kind) {
                    (Action::FinishRead(_, v), OpKind::Read { ret }) => *ret = Some(v),
                    (Action::FinishWrite(_), OpKind::Write { .. }) => {}
                    _ => return Err(ScheduleError::ResponseWithoutInvocation { index, action }),
                }
                op.response = Some(index);
                *slot = None;
                event_op.push(id);
            }
        }
        Ok(Schedule {
            threads,
            domain_size,
            initial,
            events,
            ops,
            event_op,
        })
    }

    pub fn empty(threads: u8, domain_size: u8, initial: Value) -> Result<Self, ScheduleError> {
        Schedule::new(threads, domain_size, initial, Vec::new())
    }

    pub fn events(&self) -> &[Action] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Register configuration matching this schedule's parameters.
    pub fn register_config(&self) -> RegisterConfig {
        RegisterConfig {
            domain_size: self.domain_size,
            initial: self.initial,
            threads: self.threads,
        }
    }

    /// All operations, the initial write first, the rest by invocation order.
    pub fn operations(&self) -> &[Operation] {
        &self.ops
    }

    pub fn op(&self, id: OpId) -> Result<&Operation, ScheduleError> {
        self.ops.get(id.0).ok_or(ScheduleError::UnknownOp(id))
    }

    pub fn op_ids(&self) -> impl Iterator<Item = OpId> {
        (0..self.ops.len()).map(OpId)
    }

    /// The operation each event belongs to.
    pub fn event_op(&self, index: usize) -> OpId {
        self.event_op[index]
    }

    pub fn reads(&self) -> Vec<OpId> {
        self.op_ids().filter(|&o| self.ops[o.0].is_read()).collect()
    }

    pub fn writes(&self) -> Vec<OpId> {
        self.op_ids().filter(|&o| self.ops[o.0].is_write()).collect()
    }

    /// Finds an operation by thread (`None` for the initial write) and ordinal.
    pub fn find(&self, thread: Option<ThreadId>, ordinal: usize) -> Option<OpId> {
        self.op_ids()
            .find(|&o| self.ops[o.0].thread == thread && self.ops[o.0].ordinal == ordinal)
    }

    /// Every thread's projection ends with a response.
    pub fn is_complete(&self) -> bool {
        self.ops.iter().all(|o| o.thread.is_none() || o.response.is_some())
    }

    /// All writes (other than the initial one) are by a single thread.
    pub fn is_single_writer(&self) -> bool {
        let mut writer = None;
        for op in self.ops.iter().skip(1).filter(|o| o.is_write()) {
            match writer {
                None => writer = op.thread,
                Some(w) if Some(w) != op.thread => return false,
                _ => {}
            }
        }
        true
    }

    /// `a <σ b`: the response of `a` precedes the invocation of `b`; the
    /// initial write precedes every other operation.
    pub fn precedes(&self, a: OpId, b: OpId) -> Result<bool, ScheduleError> {
        self.op(a)?;
        self.op(b)?;
        Ok(self.prec(a, b))
    }

    pub(crate) fn prec(&self, a: OpId, b: OpId) -> bool {
        if a == b || b == OpId::INIT {
            return false;
        }
        if a == OpId::INIT {
            return true;
        }
        match (self.ops[a.0].response, self.ops[b.0].invocation) {
            (Some(resp), Some(inv)) => resp < inv,
            _ => false,
        }
    }

    fn expect_read(&self, r: OpId) -> Result<(), ScheduleError> {
        if self.op(r)?.is_read() {
            Ok(())
        } else {
            Err(ScheduleError::WrongKind(r))
        }
    }

    fn expect_write(&self, w: OpId) -> Result<(), ScheduleError> {
        if self.op(w)?.is_write() {
            Ok(())
        } else {
            Err(ScheduleError::WrongKind(w))
        }
    }

    /// Writes `w` with `w <σ r`.
    pub fn fixed_writes(&self, r: OpId) -> Result<Vec<OpId>, ScheduleError> {
        self.expect_read(r)?;
        Ok(self.fixed(r))
    }

    pub(crate) fn fixed(&self, r: OpId) -> Vec<OpId> {
        self.op_ids()
            .filter(|&w| self.ops[w.0].is_write() && self.prec(w, r))
            .collect()
    }

    /// Writes `w` with `r ≮σ w`.
    pub fn relevant_writes(&self, r: OpId) -> Result<Vec<OpId>, ScheduleError> {
        self.expect_read(r)?;
        Ok(self.relevant(r))
    }

    pub(crate) fn relevant(&self, r: OpId) -> Vec<OpId> {
        self.op_ids()
            .filter(|&w| self.ops[w.0].is_write() && !self.prec(r, w))
            .collect()
    }

    /// `w` is relevant for `r` and no write lies strictly between them.
    pub fn can_read_from(&self, r: OpId, w: OpId) -> Result<bool, ScheduleError> {
        self.expect_read(r)?;
        self.expect_write(w)?;
        if self.prec(r, w) {
            return Ok(false);
        }
        Ok(!self
            .op_ids()
            .any(|x| self.ops[x.0].is_write() && self.prec(w, x) && self.prec(x, r)))
    }

    /// Some write other than `o` is concurrent with `o`.
    pub fn has_overlapping_writes(&self, o: OpId) -> Result<bool, ScheduleError> {
        self.op(o)?;
        Ok(self.overlapping_writes(o).next().is_some())
    }

    pub(crate) fn overlapping_writes(&self, o: OpId) -> impl Iterator<Item = OpId> + '_ {
        self.op_ids()
            .filter(move |&w| w != o && self.ops[w.0].is_write() && !self.prec(o, w) && !self.prec(w, o))
    }

    pub(crate) fn require_complete(&self) -> Result<(), ScheduleError> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(ScheduleError::Incomplete)
        }
    }
}

/// Parses a `<kind> key=value ...` header line.
pub(crate) fn parse_header(line: &str, lineno: usize, kind: &str) -> Result<BTreeMap<String, String>, ScheduleError> {
    let mut words = line.split_whitespace();
    if words.next() != Some(kind) {
        return Err(ScheduleError::Parse {
            line: lineno,
            message: format!("expected `{kind}` header"),
        });
    }
    let mut out = BTreeMap::new();
    for word in words {
        let (k, v) = word.split_once('=').ok_or_else(|| ScheduleError::Parse {
            line: lineno,
            message: format!("malformed header field `{word}`"),
        })?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

pub(crate) fn header_u8(fields: &BTreeMap<String, String>, key: &str, lineno: usize) -> Result<Option<u8>, ScheduleError> {
    fields
        .get(key)
        .map(|v| {
            v.parse::<u8>().map_err(|_| ScheduleError::Parse {
                line: lineno,
                message: format!("invalid value for `{key}`: `{v}`"),
            })
        })
        .transpose()
}

/// Lines of a schedule or trace file with comments and blanks removed,
/// paired with 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

/// Parameters inferred for headerless input: enough threads and values for
/// every event, initial value 0.
pub(crate) fn infer_params(events: &[Action]) -> (u8, u8) {
    let threads = events.iter().map(|a| a.thread().0 + 1).max().unwrap_or(1);
    let domain = events
        .iter()
        .filter_map(|a| a.value())
        .map(|v| v.0 + 1)
        .max()
        .unwrap_or(1)
        .max(2);
    (threads, domain)
}

/// Parses the schedule file format: an optional
/// `schedule n=<threads> domain=<size> init=<value>` header followed by one
/// `sr`/`fr`/`sw`/`fw` event per line. `#` starts a comment.
pub fn parse_schedule(text: &str) -> Result<Schedule, ScheduleError> {
    let mut header = None;
    let mut events = Vec::new();
    for (lineno, line) in content_lines(text) {
        if line.starts_with("schedule") {
            if header.is_some() || !events.is_empty() {
                return Err(ScheduleError::Parse {
                    line: lineno,
                    message: "header must come first".into(),
                });
            }
            header = Some((lineno, parse_header(line, lineno, "schedule")?));
            continue;
        }
        let action: Action = line.parse().map_err(|e| ScheduleError::from((lineno, e)))?;
        if !action.is_base() {
            return Err(ScheduleError::Parse {
                line: lineno,
                message: format!("`{}` is not allowed in a schedule", action.token()),
            });
        }
        events.push(action);
    }
    let (threads, domain) = infer_params(&events);
    let (threads, domain, initial) = match header {
        Some((lineno, fields)) => (
            header_u8(&fields, "n", lineno)?.unwrap_or(threads),
            header_u8(&fields, "domain", lineno)?.unwrap_or(domain),
            header_u8(&fields, "init", lineno)?.unwrap_or(0),
        ),
        None => (threads, domain, 0),
    };
    Schedule::new(threads, domain, Value(initial), events)
}

impl FromStr for Schedule {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_schedule(s)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "schedule n={} domain={} init={}",
            self.threads, self.domain_size, self.initial
        )?;
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}
