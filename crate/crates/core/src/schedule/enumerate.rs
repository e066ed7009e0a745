//! Exhaustive generation of complete schedules up to a number of operations.

use super::{Schedule, ScheduleError};
use crate::action::{Action, ThreadId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleShape {
    pub threads: u8,
    pub domain_size: u8,
    pub initial: Value,
    /// Largest number of operations (excluding the initial write).
    pub max_ops: usize,
    /// Only generate schedules whose writes are all by one thread.
    pub single_writer: bool,
}

/// Calls `f` on every complete schedule of the given shape, in a fixed
/// order. Each distinct event sequence is produced exactly once.
pub fn for_each_schedule(shape: ScheduleShape, mut f: impl FnMut(&Schedule)) -> Result<(), ScheduleError> {
    Schedule::empty(shape.threads, shape.domain_size, shape.initial)?;
    let mut gen = Gen {
        shape,
        events: Vec::new(),
        active: vec![None; shape.threads as usize],
        writer: None,
    };
    gen.run(0, &mut f);
    Ok(())
}

#[derive(Clone, Copy)]
enum Active {
    Read,
    Write,
}

struct Gen {
    shape: ScheduleShape,
    events: Vec<Action>,
    active: Vec<Option<Active>>,
    writer: Option<ThreadId>,
}

impl Gen {
    fn run(&mut self, ops: usize, f: &mut impl FnMut(&Schedule)) {
        if self.active.iter().all(Option::is_none) {
            let s = Schedule::new(
                self.shape.threads,
                self.shape.domain_size,
                self.shape.initial,
                self.events.clone(),
            )
            .expect("generated schedules are well formed");
            f(&s);
        }
        for t in 0..self.shape.threads {
            let tid = ThreadId(t);
            match self.active[t as usize] {
                None if ops < self.shape.max_ops => {
                    self.push(Action::InvokeRead(tid), Some(Active::Read), ops + 1, f);
                    let may_write = !self.shape.single_writer || self.writer.is_none_or(|w| w == tid);
                    if may_write {
                        let saved = self.writer;
                        self.writer = Some(tid);
                        for v in 0..self.shape.domain_size {
                            self.push(Action::InvokeWrite(tid, Value(v)), Some(Active::Write), ops + 1, f);
                        }
                        self.writer = saved;
                    }
                }
                None => {}
                Some(Active::Read) => {
                    for v in 0..self.shape.domain_size {
                        self.push(Action::FinishRead(tid, Value(v)), None, ops, f);
                    }
                }
                Some(Active::Write) => self.push(Action::FinishWrite(tid), None, ops, f),
            }
        }
    }

    fn push(&mut self, action: Action, next: Option<Active>, ops: usize, f: &mut impl FnMut(&Schedule)) {
        let t = action.thread().index();
        let saved = self.active[t];
        self.active[t] = next;
        self.events.push(action);
        self.run(ops, f);
        self.events.pop();
        self.active[t] = saved;
    }
}
