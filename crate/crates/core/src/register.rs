//! Multi-writer multi-reader register processes.
//!
//! Each model is a labelled transition system over states `⟨current, status⟩`.
//! A [`Register`] holds the static part (model and configuration) and exposes
//! pure functions computing enabled actions and successor states.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::action::{Action, ThreadId, Value, ValueSet, MAX_DOMAIN, MAX_THREADS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Safe,
    Regular,
    Atomic,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Safe, Model::Regular, Model::Atomic];

    pub fn name(self) -> &'static str {
        match self {
            Model::Safe => "safe",
            Model::Regular => "regular",
            Model::Atomic => "atomic",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = RegisterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "safe" | "s" => Ok(Model::Safe),
            "regular" | "r" => Ok(Model::Regular),
            "atomic" | "a" => Ok(Model::Atomic),
            _ => Err(RegisterError::UnknownModel(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegisterError {
    #[error("invalid register configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown register model `{0}`")]
    UnknownModel(String),
    #[error("action `{action}` is not enabled")]
    NotEnabled { action: Action },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegisterConfig {
    pub domain_size: u8,
    pub initial: Value,
    pub threads: u8,
}

impl RegisterConfig {
    pub fn new(domain_size: u8, initial: Value, threads: u8) -> Result<Self, RegisterError> {
        let config = RegisterConfig {
            domain_size,
            initial,
            threads,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RegisterError> {
        if self.domain_size == 0 || self.domain_size as usize > MAX_DOMAIN {
            return Err(RegisterError::InvalidConfig(format!(
                "domain size {} not in 1..={MAX_DOMAIN}",
                self.domain_size
            )));
        }
        if self.initial.0 >= self.domain_size {
            return Err(RegisterError::InvalidConfig(format!(
                "initial value {} outside domain of size {}",
                self.initial, self.domain_size
            )));
        }
        if self.threads == 0 || self.threads as usize > MAX_THREADS {
            return Err(RegisterError::InvalidConfig(format!(
                "thread count {} not in 1..={MAX_THREADS}",
                self.threads
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = Value> {
        (0..self.domain_size).map(Value)
    }

    pub fn thread_ids(&self) -> impl Iterator<Item = ThreadId> {
        (0..self.threads).map(ThreadId)
    }

    fn in_domain(&self, v: Value) -> bool {
        v.0 < self.domain_size
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SafeSlot {
    Idle,
    /// `overlap`: a write by another thread was active at some point
    /// during this read.
    Reading { overlap: bool },
    Writing { next: Value, overlap: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegularSlot {
    Idle,
    /// `posval`: the values this read may still return.
    Reading { posval: ValueSet },
    /// `pending`: the order action of this write has not happened yet.
    Writing { pending: bool, wval: Value },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AtomicSlot {
    Idle,
    /// `val` is `None` until the read executes.
    Reading { val: Option<Value> },
    /// `val` is `None` once the write has executed.
    Writing { val: Option<Value> },
}

pub type Slots<T> = SmallVec<[T; 4]>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Safe(Slots<SafeSlot>),
    Regular(Slots<RegularSlot>),
    Atomic(Slots<AtomicSlot>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activity {
    Idle,
    Reading,
    Writing,
}

/// The pair `⟨d, s⟩`: current register value and per-thread status.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RegisterState {
    pub current: Value,
    pub status: Status,
}

impl RegisterState {
    pub fn model(&self) -> Model {
        match self.status {
            Status::Safe(_) => Model::Safe,
            Status::Regular(_) => Model::Regular,
            Status::Atomic(_) => Model::Atomic,
        }
    }

    pub fn threads(&self) -> usize {
        match &self.status {
            Status::Safe(s) => s.len(),
            Status::Regular(s) => s.len(),
            Status::Atomic(s) => s.len(),
        }
    }

    pub fn activity(&self, t: ThreadId) -> Activity {
        let i = t.index();
        match &self.status {
            Status::Safe(s) => match s[i] {
                SafeSlot::Idle => Activity::Idle,
                SafeSlot::Reading { .. } => Activity::Reading,
                SafeSlot::Writing { .. } => Activity::Writing,
            },
            Status::Regular(s) => match s[i] {
                RegularSlot::Idle => Activity::Idle,
                RegularSlot::Reading { .. } => Activity::Reading,
                RegularSlot::Writing { .. } => Activity::Writing,
            },
            Status::Atomic(s) => match s[i] {
                AtomicSlot::Idle => Activity::Idle,
                AtomicSlot::Reading { .. } => Activity::Reading,
                AtomicSlot::Writing { .. } => Activity::Writing,
            },
        }
    }

    fn with_activity(&self, a: Activity) -> Vec<ThreadId> {
        (0..self.threads() as u8)
            .map(ThreadId)
            .filter(|&t| self.activity(t) == a)
            .collect()
    }

    pub fn readers(&self) -> Vec<ThreadId> {
        self.with_activity(Activity::Reading)
    }

    pub fn writers(&self) -> Vec<ThreadId> {
        self.with_activity(Activity::Writing)
    }

    pub fn idle(&self) -> Vec<ThreadId> {
        self.with_activity(Activity::Idle)
    }

    /// Threads whose write has not been ordered yet (regular model only).
    pub fn pending(&self) -> Vec<ThreadId> {
        match &self.status {
            Status::Regular(s) => s
                .iter()
                .enumerate()
                .filter(|(_, slot)| matches!(slot, RegularSlot::Writing { pending: true, .. }))
                .map(|(i, _)| ThreadId(i as u8))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Builds the initial state `⟨d_init, s_init⟩` after validating `config`.
pub fn initial_register(model: Model, config: RegisterConfig) -> Result<RegisterState, RegisterError> {
    config.validate()?;
    Ok(Register { model, config }.initial())
}

/// A register process: a model together with its configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Register {
    pub model: Model,
    pub config: RegisterConfig,
}

impl Register {
    pub fn new(model: Model, config: RegisterConfig) -> Result<Self, RegisterError> {
        config.validate()?;
        Ok(Register { model, config })
    }

    pub fn initial(&self) -> RegisterState {
        let n = self.config.threads as usize;
        let status = match self.model {
            Model::Safe => Status::Safe(SmallVec::from_elem(SafeSlot::Idle, n)),
            Model::Regular => Status::Regular(SmallVec::from_elem(RegularSlot::Idle, n)),
            Model::Atomic => Status::Atomic(SmallVec::from_elem(AtomicSlot::Idle, n)),
        };
        RegisterState {
            current: self.config.initial,
            status,
        }
    }

    /// All enabled actions in canonical order. Invocations of writes are
    /// listed once per domain value.
    pub fn enabled(&self, state: &RegisterState) -> Vec<Action> {
        let mut out = Vec::new();
        for t in self.config.thread_ids() {
            self.enabled_for(state, t, &mut out);
        }
        out.sort();
        out
    }

    /// Actions of thread `t` enabled in `state`, appended to `out`.
    pub fn enabled_for(&self, state: &RegisterState, t: ThreadId, out: &mut Vec<Action>) {
        let i = t.index();
        if state.activity(t) == Activity::Idle {
            out.push(Action::InvokeRead(t));
            out.extend(self.config.values().map(|v| Action::InvokeWrite(t, v)));
            return;
        }
        match &state.status {
            Status::Safe(s) => match s[i] {
                SafeSlot::Reading { overlap: false } => out.push(Action::FinishRead(t, state.current)),
                SafeSlot::Reading { overlap: true } => {
                    out.extend(self.config.values().map(|v| Action::FinishRead(t, v)))
                }
                SafeSlot::Writing { .. } => out.push(Action::FinishWrite(t)),
                SafeSlot::Idle => unreachable!(),
            },
            Status::Regular(s) => match s[i] {
                RegularSlot::Reading { posval } => {
                    out.extend(posval.iter().map(|v| Action::FinishRead(t, v)))
                }
                RegularSlot::Writing { pending: true, .. } => out.push(Action::OrderWrite(t)),
                RegularSlot::Writing { pending: false, .. } => out.push(Action::FinishWrite(t)),
                RegularSlot::Idle => unreachable!(),
            },
            Status::Atomic(s) => match s[i] {
                AtomicSlot::Reading { val: None } => out.push(Action::ExecuteRead(t)),
                AtomicSlot::Reading { val: Some(v) } => out.push(Action::FinishRead(t, v)),
                AtomicSlot::Writing { val: Some(_) } => out.push(Action::ExecuteWrite(t)),
                AtomicSlot::Writing { val: None } => out.push(Action::FinishWrite(t)),
                AtomicSlot::Idle => unreachable!(),
            },
        }
    }

    /// Every successor of `state` under `action`. Fails if the action is
    /// not enabled.
    pub fn step(&self, state: &RegisterState, action: Action) -> Result<Vec<RegisterState>, RegisterError> {
        let mut out = Vec::new();
        self.step_into(state, action, &mut out);
        if out.is_empty() {
            Err(RegisterError::NotEnabled { action })
        } else {
            Ok(out)
        }
    }

    /// All `(action, successor)` pairs in canonical order.
    pub fn successors(&self, state: &RegisterState) -> Vec<(Action, RegisterState)> {
        let mut out = Vec::new();
        let mut succ = Vec::new();
        for action in self.enabled(state) {
            succ.clear();
            self.step_into(state, action, &mut succ);
            out.extend(succ.drain(..).map(|s| (action, s)));
        }
        out
    }

    /// Appends the successors of `state` under `action` to `out`; appends
    /// nothing when the action is not enabled.
    pub fn step_into(&self, state: &RegisterState, action: Action, out: &mut Vec<RegisterState>) {
        let t = action.thread();
        if t.0 >= self.config.threads || state.threads() != self.config.threads as usize {
            return;
        }
        if let Some(v) = action.value() {
            if !self.config.in_domain(v) {
                return;
            }
        }
        match &state.status {
            Status::Safe(slots) => self.step_safe(state.current, slots, action, out),
            Status::Regular(slots) => self.step_regular(state.current, slots, action, out),
            Status::Atomic(slots) => self.step_atomic(state.current, slots, action, out),
        }
    }

    fn step_safe(&self, current: Value, slots: &Slots<SafeSlot>, action: Action, out: &mut Vec<RegisterState>) {
        let i = action.thread().index();
        let other_writing = || {
            slots
                .iter()
                .enumerate()
                .any(|(j, s)| j != i && matches!(s, SafeSlot::Writing { .. }))
        };
        let emit = |out: &mut Vec<RegisterState>, current: Value, slots: Slots<SafeSlot>| {
            out.push(RegisterState {
                current,
                status: Status::Safe(slots),
            })
        };
        match (action, slots[i]) {
            (Action::InvokeRead(_), SafeSlot::Idle) => {
                let mut next = slots.clone();
                next[i] = SafeSlot::Reading {
                    overlap: other_writing(),
                };
                emit(out, current, next);
            }
            (Action::InvokeWrite(_, v), SafeSlot::Idle) => {
                let mut next = slots.clone();
                for (j, slot) in next.iter_mut().enumerate() {
                    if j == i {
                        continue;
                    }
                    match slot {
                        SafeSlot::Reading { overlap } | SafeSlot::Writing { overlap, .. } => *overlap = true,
                        SafeSlot::Idle => {}
                    }
                }
                next[i] = SafeSlot::Writing {
                    next: v,
                    overlap: other_writing(),
                };
                emit(out, current, next);
            }
            (Action::FinishRead(_, v), SafeSlot::Reading { overlap }) => {
                if overlap || v == current {
                    let mut next = slots.clone();
                    next[i] = SafeSlot::Idle;
                    emit(out, current, next);
                }
            }
            (Action::FinishWrite(_), SafeSlot::Writing { next: nv, overlap }) => {
                let mut next = slots.clone();
                next[i] = SafeSlot::Idle;
                if overlap {
                    for d in self.config.values() {
                        emit(out, d, next.clone());
                    }
                } else {
                    emit(out, nv, next);
                }
            }
            _ => {}
        }
    }

    fn step_regular(
        &self,
        current: Value,
        slots: &Slots<RegularSlot>,
        action: Action,
        out: &mut Vec<RegisterState>,
    ) {
        let i = action.thread().index();
        let emit = |out: &mut Vec<RegisterState>, current: Value, slots: Slots<RegularSlot>| {
            out.push(RegisterState {
                current,
                status: Status::Regular(slots),
            })
        };
        match (action, slots[i]) {
            (Action::InvokeRead(_), RegularSlot::Idle) => {
                let mut posval = ValueSet::singleton(current);
                for slot in slots.iter() {
                    if let RegularSlot::Writing { wval, .. } = slot {
                        posval.insert(*wval);
                    }
                }
                let mut next = slots.clone();
                next[i] = RegularSlot::Reading { posval };
                emit(out, current, next);
            }
            (Action::InvokeWrite(_, v), RegularSlot::Idle) => {
                let mut next = slots.clone();
                for slot in next.iter_mut() {
                    if let RegularSlot::Reading { posval } = slot {
                        posval.insert(v);
                    }
                }
                next[i] = RegularSlot::Writing {
                    pending: true,
                    wval: v,
                };
                emit(out, current, next);
            }
            (Action::OrderWrite(_), RegularSlot::Writing { pending: true, wval }) => {
                let mut next = slots.clone();
                next[i] = RegularSlot::Writing { pending: false, wval };
                emit(out, wval, next);
            }
            (Action::FinishRead(_, v), RegularSlot::Reading { posval }) => {
                if posval.contains(v) {
                    let mut next = slots.clone();
                    next[i] = RegularSlot::Idle;
                    emit(out, current, next);
                }
            }
            (Action::FinishWrite(_), RegularSlot::Writing { pending: false, .. }) => {
                let mut next = slots.clone();
                next[i] = RegularSlot::Idle;
                emit(out, current, next);
            }
            _ => {}
        }
    }

    fn step_atomic(
        &self,
        current: Value,
        slots: &Slots<AtomicSlot>,
        action: Action,
        out: &mut Vec<RegisterState>,
    ) {
        let i = action.thread().index();
        let mut next = slots.clone();
        let new_current = match (action, slots[i]) {
            (Action::InvokeRead(_), AtomicSlot::Idle) => {
                next[i] = AtomicSlot::Reading { val: None };
                current
            }
            (Action::InvokeWrite(_, v), AtomicSlot::Idle) => {
                next[i] = AtomicSlot::Writing { val: Some(v) };
                current
            }
            (Action::ExecuteRead(_), AtomicSlot::Reading { val: None }) => {
                next[i] = AtomicSlot::Reading { val: Some(current) };
                current
            }
            (Action::ExecuteWrite(_), AtomicSlot::Writing { val: Some(v) }) => {
                next[i] = AtomicSlot::Writing { val: None };
                v
            }
            (Action::FinishRead(_, v), AtomicSlot::Reading { val: Some(r) }) if v == r => {
                next[i] = AtomicSlot::Idle;
                current
            }
            (Action::FinishWrite(_), AtomicSlot::Writing { val: None }) => {
                next[i] = AtomicSlot::Idle;
                current
            }
            _ => return,
        };
        out.push(RegisterState {
            current: new_current,
            status: Status::Atomic(next),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn t(i: u8) -> ThreadId {
        ThreadId(i)
    }
    fn v(x: u8) -> Value {
        Value(x)
    }

    fn reg(model: Model, domain: u8, threads: u8) -> Register {
        Register::new(model, RegisterConfig::new(domain, Value(0), threads).unwrap()).unwrap()
    }

    fn only(r: &Register, s: &RegisterState, a: Action) -> RegisterState {
        let mut succ = r.step(s, a).unwrap();
        assert_eq!(succ.len(), 1, "{a} should be deterministic");
        succ.pop().unwrap()
    }

    #[test]
    fn initial_states() {
        let s = initial_register(Model::Safe, RegisterConfig { domain_size: 2, initial: v(0), threads: 2 }).unwrap();
        assert_eq!(s.current, v(0));
        assert_eq!(s.idle(), vec![t(0), t(1)]);
        let r = initial_register(Model::Regular, RegisterConfig { domain_size: 5, initial: v(0), threads: 3 }).unwrap();
        assert_eq!(r.current, v(0));
        assert!(r.pending().is_empty());
        assert_eq!(r.idle().len(), 3);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            RegisterConfig { domain_size: 0, initial: v(0), threads: 2 },
            RegisterConfig { domain_size: 2, initial: v(2), threads: 2 },
            RegisterConfig { domain_size: 2, initial: v(0), threads: 0 },
        ];
        for config in bad {
            assert!(matches!(
                initial_register(Model::Safe, config),
                Err(RegisterError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn safe_initial_enabled_set() {
        let r = reg(Model::Safe, 2, 2);
        let enabled = r.enabled(&r.initial());
        assert_eq!(
            enabled,
            vec![
                Action::InvokeRead(t(0)),
                Action::InvokeRead(t(1)),
                Action::InvokeWrite(t(0), v(0)),
                Action::InvokeWrite(t(0), v(1)),
                Action::InvokeWrite(t(1), v(0)),
                Action::InvokeWrite(t(1), v(1)),
            ]
        );
    }

    #[test]
    fn safe_overlapping_read_may_return_anything() {
        let r = reg(Model::Safe, 2, 2);
        let s = only(&r, &r.initial(), Action::InvokeWrite(t(1), v(1)));
        let s = only(&r, &s, Action::InvokeRead(t(0)));
        let enabled = r.enabled(&s);
        assert!(enabled.contains(&Action::FinishRead(t(0), v(0))));
        assert!(enabled.contains(&Action::FinishRead(t(0), v(1))));
    }

    #[test]
    fn safe_overlap_flag_is_sticky_after_write_ends() {
        let r = reg(Model::Safe, 2, 2);
        let s = only(&r, &r.initial(), Action::InvokeRead(t(0)));
        let s = only(&r, &s, Action::InvokeWrite(t(1), v(0)));
        let s = only(&r, &s, Action::FinishWrite(t(1)));
        assert_eq!(s.current, v(0));
        assert!(r.step(&s, Action::FinishRead(t(0), v(1))).is_ok());
    }

    #[test]
    fn safe_overlapping_writes_leave_arbitrary_value() {
        let r = reg(Model::Safe, 2, 2);
        let s = only(&r, &r.initial(), Action::InvokeWrite(t(0), v(0)));
        let s = only(&r, &s, Action::InvokeWrite(t(1), v(0)));
        let succ = r.step(&s, Action::FinishWrite(t(0))).unwrap();
        let values: HashSet<Value> = succ.iter().map(|s| s.current).collect();
        assert_eq!(values, HashSet::from([v(0), v(1)]));
    }

    #[test]
    fn safe_non_overlapping_read_returns_current() {
        let r = reg(Model::Safe, 3, 2);
        let s = only(&r, &r.initial(), Action::InvokeWrite(t(0), v(2)));
        let s = only(&r, &s, Action::FinishWrite(t(0)));
        let s = only(&r, &s, Action::InvokeRead(t(1)));
        assert_eq!(r.enabled(&s), {
            let mut e = vec![Action::FinishRead(t(1), v(2)), Action::InvokeRead(t(0))];
            e.extend((0..3).map(|x| Action::InvokeWrite(t(0), v(x))));
            e.sort();
            e
        });
        assert_eq!(
            r.step(&s, Action::FinishRead(t(1), v(0))),
            Err(RegisterError::NotEnabled { action: Action::FinishRead(t(1), v(0)) })
        );
    }

    #[test]
    fn regular_read_sees_current_and_overlapping_writes() {
        let r = reg(Model::Regular, 3, 3);
        // w1 by thread 0 writes 1 and is ordered and finished.
        let s = only(&r, &r.initial(), Action::InvokeWrite(t(0), v(1)));
        let s = only(&r, &s, Action::OrderWrite(t(0)));
        let s = only(&r, &s, Action::FinishWrite(t(0)));
        // w2 by thread 1 writes 2, still pending.
        let s = only(&r, &s, Action::InvokeWrite(t(1), v(2)));
        let s = only(&r, &s, Action::InvokeRead(t(2)));
        match &s.status {
            Status::Regular(slots) => assert_eq!(
                slots[2],
                RegularSlot::Reading { posval: [v(1), v(2)].into_iter().collect() }
            ),
            _ => unreachable!(),
        }
    }

    #[test]
    fn regular_write_extends_active_reads() {
        let r = reg(Model::Regular, 3, 2);
        let s = only(&r, &r.initial(), Action::InvokeRead(t(0)));
        let s = only(&r, &s, Action::InvokeWrite(t(1), v(2)));
        let e = r.enabled(&s);
        assert!(e.contains(&Action::FinishRead(t(0), v(0))));
        assert!(e.contains(&Action::FinishRead(t(0), v(2))));
        assert!(!e.contains(&Action::FinishRead(t(0), v(1))));
        // finishing the write is blocked until its order action
        assert!(!e.contains(&Action::FinishWrite(t(1))));
        assert!(e.contains(&Action::OrderWrite(t(1))));
    }

    #[test]
    fn atomic_execute_read_copies_current() {
        let r = Register::new(Model::Atomic, RegisterConfig::new(4, v(3), 1).unwrap()).unwrap();
        let s = only(&r, &r.initial(), Action::InvokeRead(t(0)));
        assert_eq!(r.enabled(&s), vec![Action::ExecuteRead(t(0))]);
        let s2 = only(&r, &s, Action::ExecuteRead(t(0)));
        assert_eq!(s2.current, v(3));
        assert_eq!(s2.status, Status::Atomic(SmallVec::from_elem(AtomicSlot::Reading { val: Some(v(3)) }, 1)));
        assert_eq!(r.enabled(&s2), vec![Action::FinishRead(t(0), v(3))]);
    }

    #[test]
    fn atomic_write_updates_at_execution() {
        let r = reg(Model::Atomic, 2, 2);
        let s = only(&r, &r.initial(), Action::InvokeWrite(t(0), v(1)));
        assert_eq!(s.current, v(0));
        assert!(r.step(&s, Action::FinishWrite(t(0))).is_err());
        let s = only(&r, &s, Action::ExecuteWrite(t(0)));
        assert_eq!(s.current, v(1));
        let s = only(&r, &s, Action::FinishWrite(t(0)));
        assert_eq!(s.idle().len(), 2);
    }

    #[test]
    fn model_specific_actions_are_rejected_elsewhere() {
        let safe = reg(Model::Safe, 2, 1);
        let s = only(&safe, &safe.initial(), Action::InvokeWrite(t(0), v(1)));
        assert!(safe.step(&s, Action::OrderWrite(t(0))).is_err());
        assert!(safe.step(&s, Action::ExecuteWrite(t(0))).is_err());
        assert!(safe.step(&s, Action::Crit(t(0))).is_err());
    }
}
