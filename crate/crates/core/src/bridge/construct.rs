//! Turning a schedule that meets the write-order condition into a trace of
//! the regular register by inserting order actions.
//!
//! The writes are enumerated in the order the family agrees on, each
//! non-overlapping read is placed right after the write it reads from, and
//! the resulting enumeration drives where each order action goes.

use std::collections::{BTreeMap, BTreeSet};

use super::{is_trace, BridgeError, Trace};
use crate::action::Action;
use crate::register::Model;
use crate::schedule::{reads_from, OpId, Schedule, WriteOrderFamily};

/// An enumeration of the non-overlapping reads and all writes of a schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriteEnumeration(pub Vec<OpId>);

impl WriteEnumeration {
    /// Checks the four enumeration properties against `sched` and the
    /// reads-from map `rho`, and that exactly the non-overlapping reads and
    /// the writes are listed.
    pub fn check(&self, sched: &Schedule, rho: &BTreeMap<OpId, OpId>) -> Result<(), String> {
        let ops = sched.operations();
        let is_write = |o: OpId| ops[o.0].is_write();
        let non_overlapping: BTreeSet<OpId> = rho
            .iter()
            .filter(|&(&r, &w)| sched.prec(w, r))
            .map(|(&r, _)| r)
            .collect();
        let listed: BTreeSet<OpId> = self.0.iter().copied().collect();
        let expected: BTreeSet<OpId> = sched.writes().into_iter().chain(non_overlapping.iter().copied()).collect();
        if listed != expected || listed.len() != self.0.len() {
            return Err("enumeration must list each write and non-overlapping read once".into());
        }
        if self.0.first() != Some(&OpId::INIT) {
            return Err("enumeration must start with the initial write".into());
        }
        for (i, &a) in self.0.iter().enumerate() {
            for &b in &self.0[i + 1..] {
                if sched.prec(b, a) {
                    return Err(format!("operation {} precedes {} but is listed after it", b.0, a.0));
                }
            }
        }
        let pos = |o: OpId| self.0.iter().position(|&x| x == o).expect("listed");
        for &r in &non_overlapping {
            let (pw, pr) = (pos(rho[&r]), pos(r));
            if pw > pr || self.0[pw + 1..pr].iter().any(|&o| is_write(o)) {
                return Err(format!("read {} is not directly after the write it reads from", r.0));
            }
        }
        for (i, &a) in self.0.iter().enumerate() {
            for &b in &self.0[i + 1..] {
                if non_overlapping.contains(&a)
                    && non_overlapping.contains(&b)
                    && rho[&a] == rho[&b]
                    && ops[a.0].invocation > ops[b.0].invocation
                {
                    return Err(format!("reads {} and {} are out of invocation order", a.0, b.0));
                }
            }
        }
        Ok(())
    }
}

/// Builds the enumeration from a write-order family. Also returns the
/// reads-from map it was derived from.
pub fn write_enumeration(
    sched: &Schedule,
    family: &WriteOrderFamily,
) -> Result<(WriteEnumeration, BTreeMap<OpId, OpId>), BridgeError> {
    let rho = reads_from(sched, family)?;
    let ops = sched.operations();

    // W: writes relevant to some read, ordered by the union of the
    // per-read orders.
    let mut before: BTreeSet<(OpId, OpId)> = BTreeSet::new();
    for seq in family.orders.values() {
        let ws: Vec<OpId> = seq.iter().copied().filter(|o| ops[o.0].is_write()).collect();
        for (i, &a) in ws.iter().enumerate() {
            for &b in &ws[i + 1..] {
                before.insert((a, b));
            }
        }
    }
    let relevant: BTreeSet<OpId> = sched.reads().into_iter().flat_map(|r| sched.relevant(r)).collect();
    let mut w_order: Vec<OpId> = relevant.iter().copied().collect();
    w_order.sort_by_key(|&w| relevant.iter().filter(|&&x| before.contains(&(x, w))).count());
    for (i, &a) in w_order.iter().enumerate() {
        for &b in &w_order[i + 1..] {
            if !before.contains(&(a, b)) || before.contains(&(b, a)) {
                return Err(BridgeError::Construction(format!(
                    "the family does not totally order writes {} and {}",
                    a.0, b.0
                )));
            }
        }
    }
    if w_order.is_empty() {
        w_order.push(OpId::INIT);
    }
    // W': the remaining writes by invocation; operation ids follow
    // invocation order already.
    w_order.extend(sched.writes().into_iter().filter(|w| !relevant.contains(w) && *w != OpId::INIT));

    let mut enumeration = Vec::with_capacity(ops.len());
    for &w in &w_order {
        enumeration.push(w);
        enumeration.extend(
            rho.iter()
                .filter(|&(&r, &rw)| rw == w && sched.prec(w, r))
                .map(|(&r, _)| r),
        );
    }
    Ok((WriteEnumeration(enumeration), rho))
}

/// Inserts one order action per write into `sched`, guided by the
/// enumeration: a read moves the cursor past its invocation; a write moves
/// it past its invocation if needed and then places its order action.
pub fn construct_write_order_trace(sched: &Schedule, family: &WriteOrderFamily) -> Result<Trace, BridgeError> {
    let (enumeration, _) = write_enumeration(sched, family)?;
    let ops = sched.operations();
    let events = sched.events();
    let mut out = Vec::with_capacity(events.len() + ops.len());
    let mut cursor = 0;
    for &o in enumeration.0.iter().filter(|&&o| o != OpId::INIT) {
        let op = &ops[o.0];
        let inv = op.invocation.expect("non-initial operations are invoked");
        while cursor <= inv {
            out.push(events[cursor]);
            cursor += 1;
        }
        if op.is_write() {
            out.push(Action::OrderWrite(op.thread.expect("non-initial write")));
        }
    }
    out.extend_from_slice(&events[cursor..]);
    let config = sched.register_config();
    if !is_trace(Model::Regular, config, &out) {
        return Err(BridgeError::Construction(
            "the constructed sequence is not a trace of the regular register".into(),
        ));
    }
    Ok(Trace {
        model: Model::Regular,
        config,
        events: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{simulate_schedule, Simulation, DEFAULT_SIMULATION_LIMIT};
    use crate::schedule::{check_write_order, parse_schedule, SearchLimits};

    fn family(s: &Schedule) -> WriteOrderFamily {
        check_write_order(s, SearchLimits::default())
            .unwrap()
            .witness()
            .cloned()
            .expect("write-order schedule")
    }

    #[test]
    fn sequential_write_then_read() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1\n").unwrap();
        let t = construct_write_order_trace(&s, &family(&s)).unwrap();
        let expected: Vec<Action> = ["sw 0 1", "ow 0", "fw 0", "sr 1", "fr 1 1"]
            .iter()
            .map(|a| a.parse().unwrap())
            .collect();
        assert_eq!(t.events, expected);
    }

    #[test]
    fn overlapping_write_is_ordered_after_the_read_starts() {
        // r overlaps w2 and still returns w1's value
        let s = parse_schedule("schedule n=2 domain=3 init=0\nsw 0 1\nfw 0\nsw 0 2\nsr 1\nfr 1 1\nfw 0\n").unwrap();
        let fam = family(&s);
        let (en, rho) = write_enumeration(&s, &fam).unwrap();
        en.check(&s, &rho).unwrap();
        let t = construct_write_order_trace(&s, &fam).unwrap();
        assert_eq!(t.erase(), s.events());
        let pos = |a: &str| t.events.iter().position(|e| *e == a.parse().unwrap()).unwrap();
        let second_order = t.events.iter().rposition(|e| *e == "ow 0".parse().unwrap()).unwrap();
        assert!(second_order > pos("sr 1"));
        // the search-based simulation agrees that the schedule is a trace
        assert!(matches!(
            simulate_schedule(Model::Regular, &s, DEFAULT_SIMULATION_LIMIT).unwrap(),
            Simulation::Trace(_)
        ));
    }

    #[test]
    fn enumeration_check_rejects_broken_orders() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1\n").unwrap();
        let (en, rho) = write_enumeration(&s, &family(&s)).unwrap();
        assert_eq!(en.0, vec![OpId(0), OpId(1), OpId(2)]);
        en.check(&s, &rho).unwrap();
        assert!(WriteEnumeration(vec![OpId(1), OpId(0), OpId(2)]).check(&s, &rho).is_err());
        assert!(WriteEnumeration(vec![OpId(0), OpId(2), OpId(1)]).check(&s, &rho).is_err());
        assert!(WriteEnumeration(vec![OpId(0), OpId(1)]).check(&s, &rho).is_err());
    }

    #[test]
    fn invalid_family_is_rejected() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1\n").unwrap();
        let mut fam = family(&s);
        fam.orders.clear();
        assert!(matches!(construct_write_order_trace(&s, &fam), Err(BridgeError::Schedule(_))));
    }
}
