//! Control-flow-graph programs: registers, locals, statements and the
//! expression language for guards.

use std::fmt;

use crate::action::{ThreadId, Value, MAX_DOMAIN, MAX_THREADS};

use super::cycles::{cg_min_mask, cycle_next, cycle_prev};
use super::AlgorithmError;

pub type NodeId = usize;
pub type LocalId = usize;
pub type ArrayId = usize;
pub type RegisterId = usize;

/// Which threads may write a register.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Writer {
    Owner(ThreadId),
    Any,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterDecl {
    pub name: String,
    pub domain_size: u8,
    pub initial: Value,
    pub writer: Writer,
}

/// A family of registers indexed from 0, such as `flag[0..n]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterArray {
    pub name: String,
    pub base: RegisterId,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Crit,
    NonCrit,
}

/// Integer expressions over locals. Booleans are 0/1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(i32),
    Local(LocalId),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    Ne(Box<Expr>, Box<Expr>),
    Lt(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    /// `mask | (bit << index)`
    SetBit {
        mask: Box<Expr>,
        index: Box<Expr>,
        bit: Box<Expr>,
    },
    /// Bit `index` of `mask`.
    TestBit {
        mask: Box<Expr>,
        index: Box<Expr>,
    },
    /// Smallest member of the set `mask`.
    Min(Box<Expr>),
    /// Successor of `elem` in the ordered cycle of `mask`.
    CycleNext {
        mask: Box<Expr>,
        elem: Box<Expr>,
    },
    /// Predecessor of `elem` in the ordered cycle of `mask`.
    CyclePrev {
        mask: Box<Expr>,
        elem: Box<Expr>,
    },
    /// Least `j` in the ordered cycle of `cycle` with `CG(bits, cycle, j)`,
    /// or [`NONE`] when there is none.
    CgMin {
        bits: Box<Expr>,
        cycle: Box<Expr>,
    },
}

/// Value of [`Expr::CgMin`] when no element qualifies.
pub const NONE: i32 = -1;

impl Expr {
    pub fn c(v: i32) -> Expr {
        Expr::Const(v)
    }

    pub fn l(local: LocalId) -> Expr {
        Expr::Local(local)
    }

    pub fn eval(&self, locals: &[u8]) -> i32 {
        let b = |x: bool| x as i32;
        match self {
            Expr::Const(v) => *v,
            Expr::Local(l) => locals[*l] as i32,
            Expr::Add(a, c) => a.eval(locals) + c.eval(locals),
            Expr::Sub(a, c) => a.eval(locals) - c.eval(locals),
            Expr::Eq(a, c) => b(a.eval(locals) == c.eval(locals)),
            Expr::Ne(a, c) => b(a.eval(locals) != c.eval(locals)),
            Expr::Lt(a, c) => b(a.eval(locals) < c.eval(locals)),
            Expr::And(a, c) => b(a.eval(locals) != 0 && c.eval(locals) != 0),
            Expr::Or(a, c) => b(a.eval(locals) != 0 || c.eval(locals) != 0),
            Expr::Not(a) => b(a.eval(locals) == 0),
            Expr::SetBit { mask, index, bit } => {
                let m = mask.eval(locals);
                let i = index.eval(locals);
                if bit.eval(locals) != 0 {
                    m | (1 << i)
                } else {
                    m & !(1 << i)
                }
            }
            Expr::TestBit { mask, index } => (mask.eval(locals) >> index.eval(locals)) & 1,
            Expr::Min(mask) => {
                let m = mask.eval(locals);
                if m == 0 {
                    NONE
                } else {
                    m.trailing_zeros() as i32
                }
            }
            Expr::CycleNext { mask, elem } => cycle_next(mask.eval(locals) as u32, elem.eval(locals) as u32) as i32,
            Expr::CyclePrev { mask, elem } => cycle_prev(mask.eval(locals) as u32, elem.eval(locals) as u32) as i32,
            Expr::CgMin { bits, cycle } => {
                cg_min_mask(bits.eval(locals) as u32, cycle.eval(locals) as u32).map_or(NONE, |j| j as i32)
            }
        }
    }

    /// Locals the expression reads, appended to `out`.
    pub fn locals_used(&self, out: &mut Vec<LocalId>) {
        match self {
            Expr::Const(_) => {}
            Expr::Local(l) => out.push(*l),
            Expr::Not(a) | Expr::Min(a) => a.locals_used(out),
            Expr::Add(a, c)
            | Expr::Sub(a, c)
            | Expr::Eq(a, c)
            | Expr::Ne(a, c)
            | Expr::Lt(a, c)
            | Expr::And(a, c)
            | Expr::Or(a, c)
            | Expr::TestBit { mask: a, index: c }
            | Expr::CycleNext { mask: a, elem: c }
            | Expr::CyclePrev { mask: a, elem: c }
            | Expr::CgMin { bits: a, cycle: c } => {
                a.locals_used(out);
                c.locals_used(out);
            }
            Expr::SetBit { mask, index, bit } => {
                mask.locals_used(out);
                index.locals_used(out);
                bit.locals_used(out);
            }
        }
    }

    /// The value of a local-free expression.
    pub fn constant(&self) -> Option<i32> {
        let mut used = Vec::new();
        self.locals_used(&mut used);
        used.is_empty().then(|| self.eval(&[]))
    }
}

macro_rules! binop {
    ($name:ident, $variant:ident) => {
        pub fn $name(a: Expr, b: Expr) -> Expr {
            Expr::$variant(Box::new(a), Box::new(b))
        }
    };
}

binop!(add, Add);
binop!(sub, Sub);
binop!(eq, Eq);
binop!(ne, Ne);
binop!(lt, Lt);
binop!(and, And);
binop!(or, Or);

pub fn not(a: Expr) -> Expr {
    Expr::Not(Box::new(a))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Statement {
    /// Reads `array[index]` into `into`: an invocation, then later a
    /// response that binds the value.
    Read {
        array: ArrayId,
        index: Expr,
        into: LocalId,
        next: NodeId,
    },
    Write {
        array: ArrayId,
        index: Expr,
        value: Expr,
        next: NodeId,
    },
    Assign {
        local: LocalId,
        value: Expr,
        next: NodeId,
    },
    Branch {
        cond: Expr,
        then: NodeId,
        otherwise: NodeId,
    },
    Emit {
        event: Event,
        next: NodeId,
    },
    Acquire {
        next: NodeId,
    },
    Release {
        next: NodeId,
    },
    /// No further steps are possible.
    Stop,
}

impl Statement {
    pub fn successors(&self) -> Vec<NodeId> {
        match self {
            Statement::Read { next, .. }
            | Statement::Write { next, .. }
            | Statement::Assign { next, .. }
            | Statement::Emit { next, .. }
            | Statement::Acquire { next }
            | Statement::Release { next } => vec![*next],
            Statement::Branch { then, otherwise, .. } => vec![*then, *otherwise],
            Statement::Stop => Vec::new(),
        }
    }

    /// Statements executed without any interaction with registers, the
    /// semaphore or the observer.
    pub fn is_local(&self) -> bool {
        matches!(self, Statement::Assign { .. } | Statement::Branch { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub name: String,
    pub threads: u8,
    pub registers: Vec<RegisterDecl>,
    pub arrays: Vec<RegisterArray>,
    /// Names of the per-thread locals; every local holds a byte and starts
    /// at 0.
    pub locals: Vec<String>,
    /// Statements of all threads.
    pub nodes: Vec<Statement>,
    /// First statement of each thread.
    pub entries: Vec<NodeId>,
    pub uses_semaphore: bool,
    /// `live[node]`: bitmask of locals that may be read before being
    /// overwritten when control is at `node`.
    pub live: Vec<u64>,
}

impl Program {
    pub fn register_id(&self, name: &str) -> Option<RegisterId> {
        self.registers.iter().position(|r| r.name == name)
    }

    pub fn array_id(&self, name: &str) -> Option<ArrayId> {
        self.arrays.iter().position(|a| a.name == name)
    }

    /// The register an access to `array[index]` targets.
    pub fn resolve(&self, array: ArrayId, index: i32) -> Option<RegisterId> {
        let a = &self.arrays[array];
        (index >= 0 && (index as usize) < a.len).then(|| a.base + index as usize)
    }

    /// Checks structural invariants: targets exist, constant write indices
    /// name registers the writing thread owns, values fit their domains.
    pub fn validate(&self) -> Result<(), AlgorithmError> {
        let bad = |m: String| Err(AlgorithmError::Invalid(m));
        if self.threads == 0 || self.threads as usize > MAX_THREADS {
            return bad(format!("thread count {} out of range", self.threads));
        }
        if self.entries.len() != self.threads as usize {
            return bad("one entry point per thread is required".into());
        }
        if self.locals.len() > 64 {
            return bad("at most 64 locals are supported".into());
        }
        for r in &self.registers {
            if r.domain_size == 0 || r.domain_size as usize > MAX_DOMAIN || r.initial.0 >= r.domain_size {
                return bad(format!("register {} has an invalid domain", r.name));
            }
        }
        for a in &self.arrays {
            if a.len == 0 || a.base + a.len > self.registers.len() {
                return bad(format!("array {} does not fit the register list", a.name));
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.successors().iter().any(|&n| n >= self.nodes.len()) {
                return bad(format!("statement {id} jumps outside the program"));
            }
            let mut used = Vec::new();
            match node {
                Statement::Read { array, index, into, .. } => {
                    index.locals_used(&mut used);
                    used.push(*into);
                    if *array >= self.arrays.len() {
                        return bad(format!("statement {id} reads an unknown register array"));
                    }
                }
                Statement::Write { array, index, value, .. } => {
                    index.locals_used(&mut used);
                    value.locals_used(&mut used);
                    if *array >= self.arrays.len() {
                        return bad(format!("statement {id} writes an unknown register array"));
                    }
                }
                Statement::Assign { local, value, .. } => {
                    value.locals_used(&mut used);
                    used.push(*local);
                }
                Statement::Branch { cond, .. } => cond.locals_used(&mut used),
                _ => {}
            }
            if used.iter().any(|&l| l >= self.locals.len()) {
                return bad(format!("statement {id} uses an undeclared local"));
            }
        }
        for (t, &entry) in self.entries.iter().enumerate() {
            let thread = ThreadId(t as u8);
            for id in self.reachable_from(entry) {
                let Statement::Write { array, index, value, .. } = &self.nodes[id] else { continue };
                let Some(idx) = index.constant() else {
                    return bad(format!("statement {id}: write indices must be constant"));
                };
                let Some(reg) = self.resolve(*array, idx) else {
                    return bad(format!("statement {id} writes outside array {}", self.arrays[*array].name));
                };
                let decl = &self.registers[reg];
                if let Writer::Owner(owner) = decl.writer {
                    if owner != thread {
                        return bad(format!("thread {t} writes {}, which thread {owner} owns", decl.name));
                    }
                }
                if let Some(v) = value.constant() {
                    if v < 0 || v >= decl.domain_size as i32 {
                        return bad(format!("statement {id} writes {v} outside the domain of {}", decl.name));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn reachable_from(&self, entry: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![entry];
        let mut out = Vec::new();
        while let Some(n) = stack.pop() {
            if n >= seen.len() || std::mem::replace(&mut seen[n], true) {
                continue;
            }
            out.push(n);
            stack.extend(self.nodes[n].successors());
        }
        out.sort_unstable();
        out
    }

    /// Backward live-variable analysis over all statements.
    pub(crate) fn compute_liveness(nodes: &[Statement]) -> Vec<u64> {
        let mask_of = |e: &Expr| {
            let mut used = Vec::new();
            e.locals_used(&mut used);
            used.into_iter().fold(0u64, |m, l| m | (1 << l))
        };
        let mut live = vec![0u64; nodes.len()];
        loop {
            let mut changed = false;
            for id in (0..nodes.len()).rev() {
                let out = |n: &NodeId| live[*n];
                let new = match &nodes[id] {
                    Statement::Read { index, into, next, .. } => (out(next) & !(1 << into)) | mask_of(index),
                    Statement::Write { index, value, next, .. } => out(next) | mask_of(index) | mask_of(value),
                    Statement::Assign { local, value, next } => (out(next) & !(1 << local)) | mask_of(value),
                    Statement::Branch { cond, then, otherwise } => out(then) | out(otherwise) | mask_of(cond),
                    Statement::Emit { next, .. } | Statement::Acquire { next } | Statement::Release { next } => out(next),
                    Statement::Stop => 0,
                };
                if new != live[id] {
                    live[id] = new;
                    changed = true;
                }
            }
            if !changed {
                return live;
            }
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program {} ({} threads)", self.name, self.threads)?;
        for r in &self.registers {
            let writer = match r.writer {
                Writer::Owner(t) => format!("written by {t}"),
                Writer::Any => "written by all".into(),
            };
            writeln!(f, "  register {} domain={} init={} {writer}", r.name, r.domain_size, r.initial)?;
        }
        Ok(())
    }
}

/// Forward reference to a statement not yet emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Label(usize);

enum Pending {
    Done(Statement),
    Read { array: ArrayId, index: Expr, into: LocalId },
    Write { array: ArrayId, index: Expr, value: Expr },
    Assign { local: LocalId, value: Expr },
    Branch { cond: Expr, then: Label },
    Goto(Label),
    Emit(Event),
    Acquire,
    Release,
}

/// Assembles programs: statements fall through to the next one unless they
/// jump to a [`Label`].
pub struct Builder {
    name: String,
    threads: u8,
    registers: Vec<RegisterDecl>,
    arrays: Vec<RegisterArray>,
    locals: Vec<String>,
    code: Vec<Pending>,
    labels: Vec<Option<usize>>,
    entries: Vec<NodeId>,
    uses_semaphore: bool,
}

impl Builder {
    pub fn new(name: &str, threads: u8) -> Self {
        Builder {
            name: name.to_string(),
            threads,
            registers: Vec::new(),
            arrays: Vec::new(),
            locals: Vec::new(),
            code: Vec::new(),
            labels: Vec::new(),
            entries: Vec::new(),
            uses_semaphore: false,
        }
    }

    /// Declares `len` registers; a single register keeps the bare name,
    /// otherwise they are named `name0`, `name1`, ... With `owned`, register
    /// `k` may only be written by thread `k`.
    pub fn array(&mut self, name: &str, len: usize, domain_size: u8, owned: bool) -> ArrayId {
        let base = self.registers.len();
        for k in 0..len {
            self.registers.push(RegisterDecl {
                name: if len == 1 { name.to_string() } else { format!("{name}{k}") },
                domain_size,
                initial: Value(0),
                writer: if owned { Writer::Owner(ThreadId(k as u8)) } else { Writer::Any },
            });
        }
        self.arrays.push(RegisterArray {
            name: name.to_string(),
            base,
            len,
        });
        self.arrays.len() - 1
    }

    pub fn local(&mut self, name: &str) -> LocalId {
        if let Some(l) = self.locals.iter().position(|n| n == name) {
            return l;
        }
        self.locals.push(name.to_string());
        self.locals.len() - 1
    }

    pub fn label(&mut self) -> Label {
        self.labels.push(None);
        Label(self.labels.len() - 1)
    }

    /// Binds `label` to the next statement emitted.
    pub fn mark(&mut self, label: Label) {
        self.labels[label.0] = Some(self.code.len());
    }

    pub fn here(&mut self) -> Label {
        let l = self.label();
        self.mark(l);
        l
    }

    /// Starts the code of the next thread.
    pub fn begin_thread(&mut self) {
        self.entries.push(self.code.len());
    }

    pub fn read(&mut self, array: ArrayId, index: Expr, into: LocalId) {
        self.code.push(Pending::Read { array, index, into });
    }

    pub fn write(&mut self, array: ArrayId, index: Expr, value: Expr) {
        self.code.push(Pending::Write { array, index, value });
    }

    pub fn assign(&mut self, local: LocalId, value: Expr) {
        self.code.push(Pending::Assign { local, value });
    }

    /// Jumps to `then` when `cond` is non-zero.
    pub fn branch(&mut self, cond: Expr, then: Label) {
        self.code.push(Pending::Branch { cond, then });
    }

    pub fn goto(&mut self, target: Label) {
        self.code.push(Pending::Goto(target));
    }

    pub fn emit(&mut self, event: Event) {
        self.code.push(Pending::Emit(event));
    }

    pub fn acquire(&mut self) {
        self.uses_semaphore = true;
        self.code.push(Pending::Acquire);
    }

    pub fn release(&mut self) {
        self.uses_semaphore = true;
        self.code.push(Pending::Release);
    }

    pub fn stop(&mut self) {
        self.code.push(Pending::Done(Statement::Stop));
    }

    pub fn finish(self) -> Result<Program, AlgorithmError> {
        let resolve = |l: Label| -> Result<NodeId, AlgorithmError> {
            self.labels[l.0].ok_or_else(|| AlgorithmError::Invalid("label used but never placed".into()))
        };
        let len = self.code.len();
        let fall = |id: usize| -> Result<NodeId, AlgorithmError> {
            if id + 1 < len {
                Ok(id + 1)
            } else {
                Err(AlgorithmError::Invalid("control falls off the end of the program".into()))
            }
        };
        let mut nodes = Vec::with_capacity(len);
        for (id, p) in self.code.into_iter().enumerate() {
            nodes.push(match p {
                Pending::Done(s) => s,
                Pending::Read { array, index, into } => Statement::Read {
                    array,
                    index,
                    into,
                    next: fall(id)?,
                },
                Pending::Write { array, index, value } => Statement::Write {
                    array,
                    index,
                    value,
                    next: fall(id)?,
                },
                Pending::Assign { local, value } => Statement::Assign {
                    local,
                    value,
                    next: fall(id)?,
                },
                Pending::Branch { cond, then } => Statement::Branch {
                    cond,
                    then: resolve(then)?,
                    otherwise: fall(id)?,
                },
                Pending::Goto(target) => {
                    let t = resolve(target)?;
                    Statement::Branch {
                        cond: Expr::Const(1),
                        then: t,
                        otherwise: t,
                    }
                }
                Pending::Emit(event) => Statement::Emit { event, next: fall(id)? },
                Pending::Acquire => Statement::Acquire { next: fall(id)? },
                Pending::Release => Statement::Release { next: fall(id)? },
            });
        }
        let live = Program::compute_liveness(&nodes);
        let program = Program {
            name: self.name,
            threads: self.threads,
            registers: self.registers,
            arrays: self.arrays,
            locals: self.locals,
            nodes,
            entries: self.entries,
            uses_semaphore: self.uses_semaphore,
            live,
        };
        program.validate()?;
        Ok(program)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions_evaluate() {
        let locals = [3u8, 5];
        assert_eq!(add(Expr::l(0), Expr::c(2)).eval(&locals), 5);
        assert_eq!(and(eq(Expr::l(0), Expr::c(3)), lt(Expr::l(0), Expr::l(1))).eval(&locals), 1);
        assert_eq!(or(Expr::c(0), not(Expr::c(1))).eval(&locals), 0);
        let set = Expr::SetBit {
            mask: Box::new(Expr::c(0b001)),
            index: Box::new(Expr::c(2)),
            bit: Box::new(Expr::c(1)),
        };
        assert_eq!(set.eval(&locals), 0b101);
        assert_eq!(Expr::Min(Box::new(Expr::c(0b100))).eval(&[]), 2);
        assert_eq!(Expr::Min(Box::new(Expr::c(0))).eval(&[]), NONE);
        assert_eq!(add(Expr::l(1), Expr::c(1)).constant(), None);
        assert_eq!(sub(Expr::c(4), Expr::c(1)).constant(), Some(3));
    }

    #[test]
    fn builder_resolves_labels_and_liveness() {
        let mut b = Builder::new("toy", 1);
        let reg = b.array("r", 1, 2, false);
        let t = b.local("t");
        let u = b.local("u");
        b.begin_thread();
        let top = b.here();
        b.emit(Event::NonCrit);
        b.read(reg, Expr::c(0), t);
        b.assign(u, Expr::c(1));
        let skip = b.label();
        b.branch(eq(Expr::l(t), Expr::c(0)), skip);
        b.write(reg, Expr::c(0), Expr::l(u));
        b.mark(skip);
        b.emit(Event::Crit);
        b.goto(top);
        let p = b.finish().unwrap();
        assert_eq!(p.nodes.len(), 7);
        assert_eq!(p.nodes[3], Statement::Branch { cond: eq(Expr::l(t), Expr::c(0)), then: 5, otherwise: 4 });
        // t is live after the read until the branch; u is live until the write
        assert_eq!(p.live[2], 1 << t);
        assert_eq!(p.live[3], (1 << t) | (1 << u));
        assert_eq!(p.live[4], 1 << u);
        assert_eq!(p.live[5], 0);
    }

    #[test]
    fn builder_rejects_dangling_control() {
        let mut b = Builder::new("toy", 1);
        b.begin_thread();
        b.emit(Event::Crit);
        assert!(matches!(b.finish(), Err(AlgorithmError::Invalid(_))));
    }

    #[test]
    fn writes_to_foreign_registers_are_rejected() {
        let mut b = Builder::new("toy", 2);
        let flag = b.array("flag", 2, 2, true);
        for i in 0..2 {
            b.begin_thread();
            let top = b.here();
            // every thread writes flag0
            b.write(flag, Expr::c(0), Expr::c(1 - i));
            b.goto(top);
        }
        let err = b.finish().unwrap_err();
        assert_eq!(err, AlgorithmError::Invalid("thread 1 writes flag0, which thread 0 owns".into()));
    }
}
