//! Exhaustive oracles shared by the integration tests.

#![allow(dead_code)]

use regmc::action::Value;
use regmc::bridge::{
    construct_write_order_trace, for_each_trace, is_trace, simulate_schedule, write_enumeration, Simulation, TraceFilter,
    DEFAULT_SIMULATION_LIMIT,
};
use regmc::register::{Model, RegisterConfig};
use regmc::schedule::{
    check_atomic, check_regular, check_safe, check_weak, check_write_order, for_each_schedule, is_legal_serialisation,
    Schedule, ScheduleShape, SearchLimits,
};

/// Outcome of one exhaustive sweep.
#[derive(Debug, Default)]
pub struct Tally {
    pub checked: usize,
    pub failures: Vec<String>,
}

impl Tally {
    pub fn fail(&mut self, msg: String) {
        if self.failures.len() < 10 {
            self.failures.push(msg);
        } else if self.failures.len() == 10 {
            self.failures.push("...".into());
        }
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn config() -> RegisterConfig {
    RegisterConfig::new(2, Value(0), 2).unwrap()
}

pub fn shape(max_ops: usize, single_writer: bool) -> ScheduleShape {
    ScheduleShape {
        threads: 2,
        domain_size: 2,
        initial: Value(0),
        max_ops,
        single_writer,
    }
}

/// The schedule condition matching a register model on single-writer
/// schedules.
pub fn matching_condition(model: Model, s: &Schedule) -> bool {
    match model {
        Model::Safe => check_safe(s).unwrap().holds(),
        Model::Regular => check_regular(s).unwrap().holds(),
        Model::Atomic => {
            let v = check_atomic(s, SearchLimits::default()).unwrap();
            if let Some(w) = v.witness() {
                is_legal_serialisation(s, &w.0).unwrap();
            }
            v.holds()
        }
    }
}

/// Every complete single-writer trace up to `depth` erases to a schedule
/// satisfying the matching condition.
pub fn traces_satisfy_condition(model: Model, depth: usize) -> Tally {
    let mut tally = Tally::default();
    let filter = TraceFilter {
        complete: true,
        single_writer: true,
    };
    for_each_trace(model, config(), depth, filter, |events| {
        tally.checked += 1;
        let s = Schedule::new(2, 2, Value(0), regmc::bridge::erase(events)).unwrap();
        if !matching_condition(model, &s) {
            tally.fail(format!("{model}: trace {events:?} erases to a schedule failing the condition"));
        }
    })
    .unwrap();
    tally
}

/// A single-writer schedule satisfies the matching condition exactly when
/// the model can simulate it.
pub fn condition_iff_simulable(model: Model, max_ops: usize) -> Tally {
    let mut tally = Tally::default();
    for_each_schedule(shape(max_ops, true), |s| {
        tally.checked += 1;
        let holds = matching_condition(model, s);
        let sim = simulate_schedule(model, s, DEFAULT_SIMULATION_LIMIT).unwrap();
        match (&sim, holds) {
            (Simulation::Trace(t), true) => {
                if t.erase() != s.events() || !is_trace(model, s.register_config(), &t.events) {
                    tally.fail(format!("{model}: bad simulation of {s}"));
                }
            }
            (Simulation::NotSimulable, false) => {}
            _ => tally.fail(format!("{model}: condition {holds} but simulation {sim:?} for\n{s}")),
        }
    })
    .unwrap();
    tally
}

/// Every complete regular trace up to `depth` erases to a schedule meeting
/// the weak condition.
pub fn regular_traces_are_weak(depth: usize) -> Tally {
    let mut tally = Tally::default();
    let filter = TraceFilter {
        complete: true,
        single_writer: false,
    };
    for_each_trace(Model::Regular, config(), depth, filter, |events| {
        tally.checked += 1;
        let s = Schedule::new(2, 2, Value(0), regmc::bridge::erase(events)).unwrap();
        if !check_weak(&s, SearchLimits::default()).unwrap().holds() {
            tally.fail(format!("regular trace {events:?} is not weak"));
        }
    })
    .unwrap();
    tally
}

/// Every write-order schedule converts to a regular trace that erases back
/// to it; also checks the implication chain atomic, write-order, weak.
pub fn write_order_round_trip(max_ops: usize) -> Tally {
    let mut tally = Tally::default();
    let limits = SearchLimits::default();
    for_each_schedule(shape(max_ops, false), |s| {
        let atomic = check_atomic(s, limits).unwrap().holds();
        let wo = check_write_order(s, limits).unwrap();
        let weak = check_weak(s, limits).unwrap().holds();
        if (atomic && !wo.holds()) || (wo.holds() && !weak) {
            tally.fail(format!("implication chain broken (atomic {atomic}, write-order {}, weak {weak}) for\n{s}", wo.holds()));
        }
        let Some(family) = wo.witness() else { return };
        tally.checked += 1;
        match write_enumeration(s, family) {
            Ok((en, rho)) => {
                if let Err(e) = en.check(s, &rho) {
                    tally.fail(format!("enumeration property violated ({e}) for\n{s}"));
                }
            }
            Err(e) => tally.fail(format!("no enumeration ({e}) for\n{s}")),
        }
        match construct_write_order_trace(s, family) {
            Ok(t) => {
                if t.erase() != s.events() || !is_trace(Model::Regular, s.register_config(), &t.events) {
                    tally.fail(format!("round trip failed for\n{s}"));
                }
            }
            Err(e) => tally.fail(format!("construction failed ({e}) for\n{s}")),
        }
    })
    .unwrap();
    tally
}
