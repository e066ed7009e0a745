//! The parallel composition of thread programs, register processes and an
//! optional semaphore, over a fixed-width byte encoding of global states.
//!
//! Layout of a state: one byte per register with its current value, then
//! per thread the program counter (two bytes), the locals, and the slot of
//! the register operation the thread has in progress (tag, value, and the
//! possible-value set for regular reads), then the semaphore holder.
//!
//! A thread's slot belongs to the register named by the read or write
//! statement at its program counter, so per-register status is rebuilt from
//! the threads rather than stored twice.
//!
//! Assignments and branches run eagerly after every visible step; only
//! register actions, `crit`, `noncrit` and semaphore operations are
//! transitions. Locals that are dead at a thread's resting point are zeroed.

use std::fmt;

use smallvec::SmallVec;

use super::CheckError;
use crate::action::{Action, ThreadId, Value, ValueSet};
use crate::algorithms::program::{Event, NodeId, RegisterId, Statement};
use crate::algorithms::Program;
use crate::register::{
    AtomicSlot, Model, Register, RegisterConfig, RegisterState, RegularSlot, SafeSlot, Slots, Status,
};

/// Bound on consecutive local statements before a thread is declared stuck
/// in a loop that never touches shared state.
const LOCAL_STEP_BOUND: usize = 100_000;

const TAG_IDLE: u8 = 0;
const TAG_READ: u8 = 1;
const TAG_WRITE: u8 = 2;
/// Safe: overlap. Regular write: order action pending. Atomic: value held.
const TAG_FLAG: u8 = 0x10;

/// Transition labels of the composed system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Register(RegisterId, Action),
    Crit(ThreadId),
    NonCrit(ThreadId),
    Acquire(ThreadId),
    Release(ThreadId),
}

impl Label {
    pub fn thread(self) -> ThreadId {
        match self {
            Label::Register(_, a) => a.thread(),
            Label::Crit(t) | Label::NonCrit(t) | Label::Acquire(t) | Label::Release(t) => t,
        }
    }

    /// Renders the label with register names, e.g. `sw 0 1 @turn`.
    pub fn display<'a>(&'a self, program: &'a Program) -> impl fmt::Display + 'a {
        LabelDisplay { label: self, program }
    }
}

struct LabelDisplay<'a> {
    label: &'a Label,
    program: &'a Program,
}

impl fmt::Display for LabelDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self.label {
            Label::Register(r, a) => write!(f, "{a} @{}", self.program.registers[r].name),
            Label::Crit(t) => write!(f, "crit {t}"),
            Label::NonCrit(t) => write!(f, "noncrit {t}"),
            Label::Acquire(t) => write!(f, "acquire {t}"),
            Label::Release(t) => write!(f, "release {t}"),
        }
    }
}

/// A program with a register model chosen for each of its registers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemConfig {
    pub program: Program,
    pub models: Vec<Model>,
}

impl SystemConfig {
    /// Every register gets `model`.
    pub fn uniform(program: Program, model: Model) -> Self {
        let models = vec![model; program.registers.len()];
        SystemConfig { program, models }
    }

    /// Applies assignments such as `all=safe,turn=atomic`. `all` sets every
    /// register; named registers override it regardless of position. A
    /// register array's bare name covers all of its registers.
    pub fn assign(&mut self, spec: &str) -> Result<(), CheckError> {
        let mut specific = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, model) = part
                .split_once('=')
                .ok_or_else(|| CheckError::Assignment(format!("expected name=model, got `{part}`")))?;
            let model: Model = model
                .trim()
                .parse()
                .map_err(|_| CheckError::Assignment(format!("unknown model `{}`", model.trim())))?;
            let name = name.trim();
            if name == "all" {
                self.models.iter_mut().for_each(|m| *m = model);
            } else {
                specific.push((name.to_string(), model));
            }
        }
        for (name, model) in specific {
            let regs = self.registers_named(&name)?;
            for r in regs {
                self.models[r] = model;
            }
        }
        Ok(())
    }

    fn registers_named(&self, name: &str) -> Result<Vec<RegisterId>, CheckError> {
        let p = &self.program;
        if let Some(r) = p.register_id(name) {
            return Ok(vec![r]);
        }
        if let Some(a) = p.array_id(name) {
            let a = &p.arrays[a];
            return Ok((a.base..a.base + a.len).collect());
        }
        Err(CheckError::UnknownRegister(name.to_string()))
    }
}

#[derive(Clone, Debug)]
struct Layout {
    threads: usize,
    registers: usize,
    locals: usize,
    posval_bytes: usize,
    thread_size: usize,
    semaphore: Option<usize>,
    size: usize,
}

impl Layout {
    fn thread(&self, t: usize) -> usize {
        self.registers + t * self.thread_size
    }
    fn pc(&self, t: usize) -> usize {
        self.thread(t)
    }
    fn locals(&self, t: usize) -> usize {
        self.thread(t) + 2
    }
    fn slot(&self, t: usize) -> usize {
        self.thread(t) + 2 + self.locals
    }
}

/// A composed system ready for exploration.
#[derive(Clone, Debug)]
pub struct System {
    pub config: SystemConfig,
    registers: Vec<Register>,
    layout: Layout,
}

impl System {
    pub fn new(config: SystemConfig) -> Result<Self, CheckError> {
        let p = &config.program;
        p.validate()?;
        if config.models.len() != p.registers.len() {
            return Err(CheckError::Assignment("one model per register is required".into()));
        }
        if p.locals.len() > 64 {
            return Err(CheckError::Assignment("at most 64 locals are supported".into()));
        }
        let mut registers = Vec::with_capacity(p.registers.len());
        for (decl, &model) in p.registers.iter().zip(&config.models) {
            let rc = RegisterConfig::new(decl.domain_size, decl.initial, p.threads)?;
            registers.push(Register::new(model, rc)?);
        }
        let max_regular = registers
            .iter()
            .filter(|r| r.model == Model::Regular)
            .map(|r| r.config.domain_size as usize)
            .max()
            .unwrap_or(0);
        let posval_bytes = max_regular.div_ceil(8);
        let threads = p.threads as usize;
        let thread_size = 2 + p.locals.len() + 2 + posval_bytes;
        let base = p.registers.len() + threads * thread_size;
        let layout = Layout {
            threads,
            registers: p.registers.len(),
            locals: p.locals.len(),
            posval_bytes,
            thread_size,
            semaphore: p.uses_semaphore.then_some(base),
            size: base + p.uses_semaphore as usize,
        };
        Ok(System {
            config,
            registers,
            layout,
        })
    }

    pub fn program(&self) -> &Program {
        &self.config.program
    }

    pub fn threads(&self) -> usize {
        self.layout.threads
    }

    /// Bytes per encoded state.
    pub fn state_size(&self) -> usize {
        self.layout.size
    }

    pub fn initial(&self) -> Result<Vec<u8>, CheckError> {
        let mut s = vec![0u8; self.layout.size];
        for (r, decl) in self.program().registers.iter().enumerate() {
            s[r] = decl.initial.0;
        }
        for t in 0..self.threads() {
            self.set_pc(&mut s, t, self.program().entries[t]);
            self.settle(&mut s, t)?;
        }
        Ok(s)
    }

    pub fn pc(&self, s: &[u8], t: usize) -> NodeId {
        let o = self.layout.pc(t);
        u16::from_le_bytes([s[o], s[o + 1]]) as NodeId
    }

    fn set_pc(&self, s: &mut [u8], t: usize, pc: NodeId) {
        let o = self.layout.pc(t);
        s[o..o + 2].copy_from_slice(&(pc as u16).to_le_bytes());
    }

    pub fn locals<'a>(&self, s: &'a [u8], t: usize) -> &'a [u8] {
        let o = self.layout.locals(t);
        &s[o..o + self.layout.locals]
    }

    /// Holder of the semaphore, if the program uses one and it is held.
    pub fn semaphore(&self, s: &[u8]) -> Option<ThreadId> {
        self.layout.semaphore.and_then(|o| s[o].checked_sub(1).map(ThreadId))
    }

    /// Current value of register `r`.
    pub fn current(&self, s: &[u8], r: RegisterId) -> Value {
        Value(s[r])
    }

    fn resolve(&self, s: &[u8], t: usize, array: usize, index: &crate::algorithms::Expr) -> Result<RegisterId, CheckError> {
        let i = index.eval(self.locals(s, t));
        self.program().resolve(array, i).ok_or_else(|| CheckError::Runtime {
            thread: ThreadId(t as u8),
            message: format!("index {i} out of range for {}", self.program().arrays[array].name),
        })
    }

    /// The register thread `t` has an operation in progress on.
    pub fn active_register(&self, s: &[u8], t: usize) -> Option<RegisterId> {
        if s[self.layout.slot(t)] == TAG_IDLE {
            return None;
        }
        match &self.program().nodes[self.pc(s, t)] {
            Statement::Read { array, index, .. } | Statement::Write { array, index, .. } => {
                self.resolve(s, t, *array, index).ok()
            }
            _ => None,
        }
    }

    /// The full state of register `r`.
    pub fn register_state(&self, s: &[u8], r: RegisterId) -> RegisterState {
        let model = self.registers[r].model;
        let active: SmallVec<[bool; 8]> = (0..self.threads()).map(|t| self.active_register(s, t) == Some(r)).collect();
        let status = match model {
            Model::Safe => Status::Safe(
                (0..self.threads())
                    .map(|t| if active[t] { self.safe_slot(s, t) } else { SafeSlot::Idle })
                    .collect::<Slots<_>>(),
            ),
            Model::Regular => Status::Regular(
                (0..self.threads())
                    .map(|t| if active[t] { self.regular_slot(s, t) } else { RegularSlot::Idle })
                    .collect::<Slots<_>>(),
            ),
            Model::Atomic => Status::Atomic(
                (0..self.threads())
                    .map(|t| if active[t] { self.atomic_slot(s, t) } else { AtomicSlot::Idle })
                    .collect::<Slots<_>>(),
            ),
        };
        RegisterState {
            current: Value(s[r]),
            status,
        }
    }

    fn slot_bytes<'a>(&self, s: &'a [u8], t: usize) -> (u8, u8, &'a [u8]) {
        let o = self.layout.slot(t);
        (s[o], s[o + 1], &s[o + 2..o + 2 + self.layout.posval_bytes])
    }

    fn safe_slot(&self, s: &[u8], t: usize) -> SafeSlot {
        let (tag, v, _) = self.slot_bytes(s, t);
        let overlap = tag & TAG_FLAG != 0;
        match tag & !TAG_FLAG {
            TAG_READ => SafeSlot::Reading { overlap },
            TAG_WRITE => SafeSlot::Writing { next: Value(v), overlap },
            _ => SafeSlot::Idle,
        }
    }

    fn regular_slot(&self, s: &[u8], t: usize) -> RegularSlot {
        let (tag, v, pv) = self.slot_bytes(s, t);
        match tag & !TAG_FLAG {
            TAG_READ => {
                let mut bits = 0u32;
                for (k, b) in pv.iter().enumerate() {
                    bits |= (*b as u32) << (8 * k);
                }
                RegularSlot::Reading { posval: ValueSet(bits) }
            }
            TAG_WRITE => RegularSlot::Writing {
                pending: tag & TAG_FLAG != 0,
                wval: Value(v),
            },
            _ => RegularSlot::Idle,
        }
    }

    fn atomic_slot(&self, s: &[u8], t: usize) -> AtomicSlot {
        let (tag, v, _) = self.slot_bytes(s, t);
        let val = (tag & TAG_FLAG != 0).then_some(Value(v));
        match tag & !TAG_FLAG {
            TAG_READ => AtomicSlot::Reading { val },
            TAG_WRITE => AtomicSlot::Writing { val },
            _ => AtomicSlot::Idle,
        }
    }

    fn encode_slot(&self, s: &mut [u8], t: usize, status: &Status) {
        let (tag, v, posval) = match status {
            Status::Safe(slots) => match slots[t] {
                SafeSlot::Idle => (TAG_IDLE, 0, 0),
                SafeSlot::Reading { overlap } => (TAG_READ | flag(overlap), 0, 0),
                SafeSlot::Writing { next, overlap } => (TAG_WRITE | flag(overlap), next.0, 0),
            },
            Status::Regular(slots) => match slots[t] {
                RegularSlot::Idle => (TAG_IDLE, 0, 0),
                RegularSlot::Reading { posval } => (TAG_READ, 0, posval.0),
                RegularSlot::Writing { pending, wval } => (TAG_WRITE | flag(pending), wval.0, 0),
            },
            Status::Atomic(slots) => match slots[t] {
                AtomicSlot::Idle => (TAG_IDLE, 0, 0),
                AtomicSlot::Reading { val } => (TAG_READ | flag(val.is_some()), val.map_or(0, |v| v.0), 0),
                AtomicSlot::Writing { val } => (TAG_WRITE | flag(val.is_some()), val.map_or(0, |v| v.0), 0),
            },
        };
        let o = self.layout.slot(t);
        s[o] = tag;
        s[o + 1] = v;
        for k in 0..self.layout.posval_bytes {
            s[o + 2 + k] = (posval >> (8 * k)) as u8;
        }
    }

    /// Writes back register `r`; `before[t]` says whether thread `t` was
    /// active on `r` in the source state.
    fn store_register(&self, s: &mut [u8], r: RegisterId, rs: &RegisterState, before: &[bool]) {
        s[r] = rs.current.0;
        for (t, &was) in before.iter().enumerate() {
            if was || rs.activity(ThreadId(t as u8)) != crate::register::Activity::Idle {
                self.encode_slot(s, t, &rs.status);
            }
        }
    }

    /// Runs local statements of thread `t` until it rests at a visible
    /// statement, then zeroes its dead locals.
    fn settle(&self, s: &mut [u8], t: usize) -> Result<(), CheckError> {
        let p = self.program();
        let mut pc = self.pc(s, t);
        let lo = self.layout.locals(t);
        let mut steps = 0;
        loop {
            match &p.nodes[pc] {
                Statement::Assign { local, value, next } => {
                    let v = value.eval(&s[lo..lo + self.layout.locals]);
                    s[lo + local] = u8::try_from(v).map_err(|_| CheckError::Runtime {
                        thread: ThreadId(t as u8),
                        message: format!("value {v} does not fit local {}", p.locals[*local]),
                    })?;
                    pc = *next;
                }
                Statement::Branch { cond, then, otherwise } => {
                    pc = if cond.eval(&s[lo..lo + self.layout.locals]) != 0 { *then } else { *otherwise };
                }
                _ => break,
            }
            steps += 1;
            if steps > LOCAL_STEP_BOUND {
                return Err(CheckError::Runtime {
                    thread: ThreadId(t as u8),
                    message: "local statements loop without a visible step".into(),
                });
            }
        }
        self.set_pc(s, t, pc);
        let live = p.live[pc];
        for l in 0..self.layout.locals {
            if live & (1 << l) == 0 {
                s[lo + l] = 0;
            }
        }
        Ok(())
    }

    /// Appends every `(label, successor)` of `s` to `out`, thread by thread.
    pub fn successors(&self, s: &[u8], out: &mut Vec<(Label, Vec<u8>)>) -> Result<(), CheckError> {
        let mut actions = Vec::new();
        let mut reg_succ = Vec::new();
        for t in 0..self.threads() {
            let tid = ThreadId(t as u8);
            let pc = self.pc(s, t);
            match &self.program().nodes[pc] {
                stmt @ (Statement::Read { array, index, .. } | Statement::Write { array, index, .. }) => {
                    let r = self.resolve(s, t, *array, index)?;
                    let rs = self.register_state(s, r);
                    let reg = &self.registers[r];
                    actions.clear();
                    if s[self.layout.slot(t)] == TAG_IDLE {
                        actions.push(match stmt {
                            Statement::Write { value, .. } => {
                                let v = value.eval(self.locals(s, t));
                                if v < 0 || v >= reg.config.domain_size as i32 {
                                    return Err(CheckError::Runtime {
                                        thread: tid,
                                        message: format!(
                                            "value {v} outside the domain of {}",
                                            self.program().registers[r].name
                                        ),
                                    });
                                }
                                Action::InvokeWrite(tid, Value(v as u8))
                            }
                            _ => Action::InvokeRead(tid),
                        });
                    } else {
                        reg.enabled_for(&rs, tid, &mut actions);
                    }
                    let before: SmallVec<[bool; 8]> =
                        (0..self.threads()).map(|u| self.active_register(s, u) == Some(r)).collect();
                    for &a in &actions {
                        reg_succ.clear();
                        reg.step_into(&rs, a, &mut reg_succ);
                        for next_rs in &reg_succ {
                            let mut n = s.to_vec();
                            self.store_register(&mut n, r, next_rs, &before);
                            match (a, stmt) {
                                (Action::FinishRead(_, v), Statement::Read { into, next, .. }) => {
                                    n[self.layout.locals(t) + into] = v.0;
                                    self.set_pc(&mut n, t, *next);
                                    self.settle(&mut n, t)?;
                                }
                                (Action::FinishWrite(_), Statement::Write { next, .. }) => {
                                    self.set_pc(&mut n, t, *next);
                                    self.settle(&mut n, t)?;
                                }
                                _ => {}
                            }
                            out.push((Label::Register(r, a), n));
                        }
                    }
                }
                Statement::Emit { event, next } => {
                    let mut n = s.to_vec();
                    self.set_pc(&mut n, t, *next);
                    self.settle(&mut n, t)?;
                    let label = match event {
                        Event::Crit => Label::Crit(tid),
                        Event::NonCrit => Label::NonCrit(tid),
                    };
                    out.push((label, n));
                }
                Statement::Acquire { next } => {
                    let o = self.layout.semaphore.expect("programs with acquire use a semaphore");
                    if s[o] == 0 {
                        let mut n = s.to_vec();
                        n[o] = t as u8 + 1;
                        self.set_pc(&mut n, t, *next);
                        self.settle(&mut n, t)?;
                        out.push((Label::Acquire(tid), n));
                    }
                }
                Statement::Release { next } => {
                    let o = self.layout.semaphore.expect("programs with release use a semaphore");
                    if s[o] != t as u8 + 1 {
                        return Err(CheckError::Runtime {
                            thread: tid,
                            message: "release without holding the semaphore".into(),
                        });
                    }
                    let mut n = s.to_vec();
                    n[o] = 0;
                    self.set_pc(&mut n, t, *next);
                    self.settle(&mut n, t)?;
                    out.push((Label::Release(tid), n));
                }
                Statement::Stop => {}
                Statement::Assign { .. } | Statement::Branch { .. } => {
                    unreachable!("threads rest only at visible statements")
                }
            }
        }
        Ok(())
    }

    /// Human-readable rendering of a state.
    pub fn describe(&self, s: &[u8]) -> String {
        let p = self.program();
        let mut out = String::new();
        for (r, decl) in p.registers.iter().enumerate() {
            out.push_str(&format!("{}={} ", decl.name, s[r]));
        }
        for t in 0..self.threads() {
            out.push_str(&format!("| t{t} pc={}", self.pc(s, t)));
            for (l, name) in p.locals.iter().enumerate() {
                out.push_str(&format!(" {name}={}", self.locals(s, t)[l]));
            }
            if let Some(r) = self.active_register(s, t) {
                out.push_str(&format!(" busy@{}", p.registers[r].name));
            }
            out.push(' ');
        }
        if let Some(t) = self.semaphore(s) {
            out.push_str(&format!("| sem={t}"));
        }
        out.trim_end().to_string()
    }
}

fn flag(b: bool) -> u8 {
    if b {
        TAG_FLAG
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{build, Params};
    use crate::checker::explore;

    fn system(name: &str, params: Params, registers: &str) -> System {
        let mut config = SystemConfig::uniform(build(name, params).unwrap(), Model::Atomic);
        config.assign(registers).unwrap();
        System::new(config).unwrap()
    }

    #[test]
    fn peterson_starts_with_noncritical_steps() {
        let sys = system("peterson", Params::default(), "all=safe");
        let mut out = Vec::new();
        sys.successors(&sys.initial().unwrap(), &mut out).unwrap();
        let mut labels: Vec<Label> = out.iter().map(|(l, _)| *l).collect();
        labels.sort();
        assert_eq!(labels, vec![Label::NonCrit(ThreadId(0)), Label::NonCrit(ThreadId(1))]);
    }

    /// Largest number of distinct values one thread's pending read can
    /// return from any reachable state.
    fn max_read_choices(registers: &str) -> usize {
        let g = explore(system("peterson", Params::default(), registers), usize::MAX).unwrap();
        let mut best = 0;
        for s in 0..g.states() as u32 {
            for t in 0..2u8 {
                let values: std::collections::BTreeSet<_> = g
                    .successors(s)
                    .filter_map(|(l, _)| match l {
                        Label::Register(_, Action::FinishRead(u, v)) if u == ThreadId(t) => Some(v),
                        _ => None,
                    })
                    .collect();
                best = best.max(values.len());
            }
        }
        best
    }

    #[test]
    fn overlapped_reads_branch_except_under_atomic() {
        assert_eq!(max_read_choices("all=safe"), 2);
        assert_eq!(max_read_choices("all=regular"), 2);
        assert_eq!(max_read_choices("all=atomic"), 1);
    }

    #[test]
    fn semaphore_is_exclusive() {
        let params = Params {
            threads: Some(2),
            semaphore: true,
            ..Params::default()
        };
        let g = explore(system("szymanski-3bit", params, "all=safe"), usize::MAX).unwrap();
        assert!(g.complete);
        let sys = &g.system;
        let mut acquired = 0;
        for s in 0..g.states() as u32 {
            let holder = sys.semaphore(g.state(s));
            for (l, d) in g.successors(s) {
                match l {
                    Label::Acquire(t) => {
                        acquired += 1;
                        assert_eq!(holder, None);
                        assert_eq!(sys.semaphore(g.state(d)), Some(t));
                    }
                    Label::Release(t) => {
                        assert_eq!(holder, Some(t));
                        assert_eq!(sys.semaphore(g.state(d)), None);
                    }
                    _ => assert_eq!(sys.semaphore(g.state(d)), holder),
                }
            }
        }
        assert!(acquired > 0);
    }

    #[test]
    fn assignments_override_all() {
        let mut config = SystemConfig::uniform(build("peterson", Params::default()).unwrap(), Model::Atomic);
        config.assign("all=safe,turn=atomic").unwrap();
        let names: Vec<(&str, Model)> = config
            .program
            .registers
            .iter()
            .zip(&config.models)
            .map(|(r, m)| (r.name.as_str(), *m))
            .collect();
        assert_eq!(names, vec![("flag0", Model::Safe), ("flag1", Model::Safe), ("turn", Model::Atomic)]);
        assert!(config.assign("nope=safe").is_err());
        assert!(config.assign("turn=sticky").is_err());
    }
}
