//! The five schedule conditions and their witnesses.
//!
//! Safe and regular are per-read value checks on single-writer schedules.
//! Atomic and weak search for legal serialisations; write-order searches for
//! one global order on the writes that every read can be slotted into.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::{OpId, Schedule, ScheduleError};
use crate::action::Value;

/// Bounds on the exponential searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchLimits {
    /// Most operations (excluding the initial write) a serialisation search
    /// will consider.
    pub atomic_ops: usize,
    /// Most writes (excluding the initial write) the write-order search will
    /// order.
    pub write_order_writes: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            atomic_ops: 12,
            write_order_writes: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// The offending read, when a single one can be blamed.
    pub read: Option<OpId>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict<W> {
    Holds(W),
    Fails(Violation),
    /// The search bound was exceeded before a decision was reached.
    Unknown(String),
}

impl<W> Verdict<W> {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds(_))
    }

    pub fn fails(&self) -> bool {
        matches!(self, Verdict::Fails(_))
    }

    pub fn witness(&self) -> Option<&W> {
        match self {
            Verdict::Holds(w) => Some(w),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Holds(_) => "holds",
            Verdict::Fails(_) => "fails",
            Verdict::Unknown(_) => "unknown",
        }
    }
}

/// A total order on a set of operations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Serialisation(pub Vec<OpId>);

/// One serialisation per read of its relevant writes plus the read itself,
/// together with the global write order they were cut from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WriteOrderFamily {
    pub write_order: Vec<OpId>,
    pub orders: BTreeMap<OpId, Vec<OpId>>,
}

fn require_single_writer(s: &Schedule) -> Result<(), ScheduleError> {
    if s.is_single_writer() {
        Ok(())
    } else {
        Err(ScheduleError::NotSingleWriter)
    }
}

/// Value of the `≺`-maximum fixed write; writes of a single-writer schedule
/// are totally ordered so the maximum is the last one in invocation order.
fn latest_fixed_value(s: &Schedule, r: OpId) -> Value {
    let last = s.fixed(r).into_iter().last().unwrap_or(OpId::INIT);
    s.ops[last.0].write_value().expect("fixed writes are writes")
}

/// Every read without overlapping writes returns the value of the latest
/// preceding write. Reads still awaiting a response are ignored.
pub fn check_safe(s: &Schedule) -> Result<Verdict<()>, ScheduleError> {
    require_single_writer(s)?;
    for r in s.reads() {
        let Some(ret) = s.ops[r.0].return_value() else { continue };
        if s.overlapping_writes(r).next().is_some() {
            continue;
        }
        let expected = latest_fixed_value(s, r);
        if ret != expected {
            return Ok(Verdict::Fails(Violation {
                read: Some(r),
                reason: format!("read returned {ret} without overlapping writes; latest write wrote {expected}"),
            }));
        }
    }
    Ok(Verdict::Holds(()))
}

/// Every read returns the value of the latest preceding write or of some
/// overlapping write.
pub fn check_regular(s: &Schedule) -> Result<Verdict<()>, ScheduleError> {
    require_single_writer(s)?;
    for r in s.reads() {
        let Some(ret) = s.ops[r.0].return_value() else { continue };
        let expected = latest_fixed_value(s, r);
        let overlapping = s
            .overlapping_writes(r)
            .any(|w| s.ops[w.0].write_value() == Some(ret));
        if ret != expected && !overlapping {
            return Ok(Verdict::Fails(Violation {
                read: Some(r),
                reason: format!("read returned {ret}, which is neither the latest value {expected} nor an overlapping write"),
            }));
        }
    }
    Ok(Verdict::Holds(()))
}

/// Checks that `order` is a legal serialisation of exactly the operations it
/// lists: no duplicates, consistent with `≺`, starting from the initial
/// write, and every read returning the value of the last write before it.
pub fn is_legal_serialisation(s: &Schedule, order: &[OpId]) -> Result<(), String> {
    let mut seen = HashSet::new();
    for &o in order {
        if o.0 >= s.ops.len() {
            return Err(format!("unknown operation {}", o.0));
        }
        if !seen.insert(o) {
            return Err(format!("operation {} listed twice", o.0));
        }
    }
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if s.prec(b, a) {
                return Err(format!("operation {} is ordered before {} but follows it in real time", a.0, b.0));
            }
        }
    }
    let mut current: Option<Value> = None;
    for &o in order {
        let op = &s.ops[o.0];
        match (op.write_value(), op.return_value()) {
            (Some(v), _) => current = Some(v),
            (None, ret) => {
                if current.is_none() {
                    return Err(format!("read {} precedes every write", o.0));
                }
                if ret != current {
                    return Err(format!("read {} does not return the last written value", o.0));
                }
            }
        }
    }
    Ok(())
}

/// Depth-first search for a legal serialisation of `subset` (which must
/// contain the initial write), memoising failed (placed-set, value) pairs.
fn serialise(s: &Schedule, subset: &[OpId]) -> Option<Vec<OpId>> {
    let k = subset.len();
    debug_assert!(k <= 64 && subset.contains(&OpId::INIT));
    // preds[i]: bitmask of subset members that must come before subset[i]
    let preds: Vec<u64> = subset
        .iter()
        .map(|&b| {
            subset
                .iter()
                .enumerate()
                .filter(|&(_, &a)| s.prec(a, b))
                .fold(0u64, |m, (j, _)| m | (1 << j))
        })
        .collect();
    let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let mut failed: HashSet<(u64, Option<Value>)> = HashSet::new();
    let mut order = Vec::with_capacity(k);

    #[allow(clippy::too_many_arguments)]
    fn go(
        s: &Schedule,
        subset: &[OpId],
        preds: &[u64],
        full: u64,
        placed: u64,
        current: Option<Value>,
        failed: &mut HashSet<(u64, Option<Value>)>,
        order: &mut Vec<OpId>,
    ) -> bool {
        if placed == full {
            return true;
        }
        if failed.contains(&(placed, current)) {
            return false;
        }
        for (i, &o) in subset.iter().enumerate() {
            let bit = 1u64 << i;
            if placed & bit != 0 || preds[i] & !placed != 0 {
                continue;
            }
            let op = &s.ops[o.0];
            let next = match op.write_value() {
                Some(v) => Some(v),
                None => {
                    if current.is_none() || op.return_value() != current {
                        continue;
                    }
                    current
                }
            };
            order.push(o);
            if go(s, subset, preds, full, placed | bit, next, failed, order) {
                return true;
            }
            order.pop();
        }
        failed.insert((placed, current));
        false
    }

    go(s, subset, &preds, full, 0, None, &mut failed, &mut order).then_some(order)
}

fn over_limit(count: usize, limit: usize, what: &str) -> Option<String> {
    let limit = limit.min(62);
    (count > limit).then(|| format!("{count} {what} exceed the search limit of {limit}"))
}

/// Some total order on all operations is consistent with `≺` and legal.
pub fn check_atomic(s: &Schedule, limits: SearchLimits) -> Result<Verdict<Serialisation>, ScheduleError> {
    s.require_complete()?;
    if let Some(msg) = over_limit(s.ops.len() - 1, limits.atomic_ops, "operations") {
        return Ok(Verdict::Unknown(msg));
    }
    let all: Vec<OpId> = s.op_ids().collect();
    Ok(match serialise(s, &all) {
        Some(order) => Verdict::Holds(Serialisation(order)),
        None => Verdict::Fails(Violation {
            read: None,
            reason: "no legal serialisation of all operations exists".into(),
        }),
    })
}

/// For each read separately, the writes together with that read have a legal
/// serialisation. The witness lists one serialisation per read.
pub fn check_weak(s: &Schedule, limits: SearchLimits) -> Result<Verdict<BTreeMap<OpId, Serialisation>>, ScheduleError> {
    s.require_complete()?;
    let writes = s.writes();
    if let Some(msg) = over_limit(writes.len(), limits.atomic_ops, "operations per read") {
        return Ok(Verdict::Unknown(msg));
    }
    let mut witness = BTreeMap::new();
    for r in s.reads() {
        let mut subset = writes.clone();
        subset.push(r);
        match serialise(s, &subset) {
            Some(order) => {
                witness.insert(r, Serialisation(order));
            }
            None => {
                return Ok(Verdict::Fails(Violation {
                    read: Some(r),
                    reason: "no legal serialisation of the writes and this read exists".into(),
                }))
            }
        }
    }
    Ok(Verdict::Holds(witness))
}

/// Per-read data used by the write-order search.
struct ReadInfo {
    read: OpId,
    ret: Value,
    relevant: u64,
    fixed: u64,
}

/// Where `r` slots into a global write order: after the earliest relevant
/// write carrying its return value that is not followed by a fixed write.
fn insertion_point(s: &Schedule, writes: &[OpId], info: &ReadInfo, order: &[usize]) -> Option<usize> {
    let last_fixed = order.iter().rposition(|&w| info.fixed & (1 << w) != 0)?;
    (last_fixed..order.len()).find(|&p| {
        let w = order[p];
        info.relevant & (1 << w) != 0 && s.ops[writes[w].0].write_value() == Some(info.ret)
    })
}

/// There is a family of legal per-read serialisations of each read's
/// relevant writes that agree on the order of shared writes. Found as one
/// global write order consistent with `≺` into which every read fits.
pub fn check_write_order(s: &Schedule, limits: SearchLimits) -> Result<Verdict<WriteOrderFamily>, ScheduleError> {
    s.require_complete()?;
    let writes = s.writes();
    if let Some(msg) = over_limit(writes.len() - 1, limits.write_order_writes, "writes") {
        return Ok(Verdict::Unknown(msg));
    }
    let index_of = |o: OpId| writes.iter().position(|&w| w == o).expect("write");
    let mask = |ops: Vec<OpId>| ops.into_iter().fold(0u64, |m, w| m | 1 << index_of(w));
    let reads: Vec<ReadInfo> = s
        .reads()
        .into_iter()
        .map(|r| ReadInfo {
            read: r,
            ret: s.ops[r.0].return_value().expect("complete schedule"),
            relevant: mask(s.relevant(r)),
            fixed: mask(s.fixed(r)),
        })
        .collect();
    let preds: Vec<u64> = writes
        .iter()
        .map(|&b| {
            writes
                .iter()
                .enumerate()
                .filter(|&(_, &a)| s.prec(a, b))
                .fold(0u64, |m, (j, _)| m | (1 << j))
        })
        .collect();
    let full = (1u64 << writes.len()) - 1;
    let mut order = Vec::with_capacity(writes.len());
    let found = extend_write_order(s, &writes, &reads, &preds, full, 0, &mut order);
    if !found {
        return Ok(Verdict::Fails(Violation {
            read: None,
            reason: "no global write order lets every read return the last write before it".into(),
        }));
    }
    let mut orders = BTreeMap::new();
    for info in &reads {
        let p = insertion_point(s, &writes, info, &order).expect("checked during search");
        let mut seq = Vec::new();
        for (q, &w) in order.iter().enumerate() {
            if info.relevant & (1 << w) != 0 {
                seq.push(writes[w]);
            }
            if q == p {
                seq.push(info.read);
            }
        }
        orders.insert(info.read, seq);
    }
    Ok(Verdict::Holds(WriteOrderFamily {
        write_order: order.iter().map(|&w| writes[w]).collect(),
        orders,
    }))
}

fn extend_write_order(
    s: &Schedule,
    writes: &[OpId],
    reads: &[ReadInfo],
    preds: &[u64],
    full: u64,
    placed: u64,
    order: &mut Vec<usize>,
) -> bool {
    if placed == full {
        return true;
    }
    for w in 0..writes.len() {
        let bit = 1u64 << w;
        if placed & bit != 0 || preds[w] & !placed != 0 {
            continue;
        }
        order.push(w);
        let now = placed | bit;
        // Reads whose relevant writes have just become fully ordered.
        let ok = reads.iter().all(|info| {
            info.relevant & bit == 0
                || info.relevant & !now != 0
                || insertion_point(s, writes, info, order).is_some()
        });
        if ok && extend_write_order(s, writes, reads, preds, full, now, order) {
            return true;
        }
        order.pop();
    }
    false
}

/// Validates a write-order family and returns the reads-from map: each read
/// paired with its direct predecessor in its own serialisation.
pub fn reads_from(s: &Schedule, family: &WriteOrderFamily) -> Result<BTreeMap<OpId, OpId>, ScheduleError> {
    s.require_complete()?;
    let invalid = |m: String| ScheduleError::InvalidWitness(m);
    let mut rho = BTreeMap::new();
    for r in s.reads() {
        let seq = family
            .orders
            .get(&r)
            .ok_or_else(|| invalid(format!("no serialisation for read {}", r.0)))?;
        let mut expected: Vec<OpId> = s.relevant(r);
        expected.push(r);
        expected.sort();
        let mut got = seq.clone();
        got.sort();
        if got != expected {
            return Err(invalid(format!(
                "serialisation for read {} must cover exactly its relevant writes and itself",
                r.0
            )));
        }
        is_legal_serialisation(s, seq).map_err(|e| invalid(format!("read {}: {e}", r.0)))?;
        let pos = seq.iter().position(|&o| o == r).expect("present");
        rho.insert(r, seq[pos - 1]);
    }
    if let Some(extra) = family.orders.keys().find(|o| !s.ops.get(o.0).is_some_and(|op| op.is_read())) {
        return Err(invalid(format!("operation {} is not a read", extra.0)));
    }
    let seqs: Vec<&Vec<OpId>> = family.orders.values().collect();
    for (i, a) in seqs.iter().enumerate() {
        for b in &seqs[i + 1..] {
            let shared: Vec<OpId> = a.iter().copied().filter(|o| s.ops[o.0].is_write() && b.contains(o)).collect();
            let in_b: Vec<OpId> = b.iter().copied().filter(|o| shared.contains(o)).collect();
            if shared != in_b {
                return Err(invalid("serialisations disagree on the order of shared writes".into()));
            }
        }
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ThreadId;
    use crate::schedule::parse_schedule;
    use crate::schedule::tests::{OVERLAPPING_WRITES, STALE_READ_AFTER_NEWER};

    fn lim() -> SearchLimits {
        SearchLimits::default()
    }

    #[test]
    fn safe_examples() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1").unwrap();
        assert!(check_safe(&s).unwrap().holds());
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 0").unwrap();
        let v = check_safe(&s).unwrap();
        assert_eq!(
            v,
            Verdict::Fails(Violation {
                read: Some(OpId(2)),
                reason: "read returned 0 without overlapping writes; latest write wrote 1".into()
            })
        );
        let s = parse_schedule("sw 0 1\nsr 1\nfr 1 0\nfw 0").unwrap();
        assert!(check_safe(&s).unwrap().holds());
    }

    #[test]
    fn safe_allows_arbitrary_values_under_overlap() {
        let s = parse_schedule("schedule n=2 domain=4 init=0\nsw 0 1\nsr 1\nfr 1 3\nfw 0").unwrap();
        assert!(check_safe(&s).unwrap().holds());
        assert!(check_regular(&s).unwrap().fails());
    }

    #[test]
    fn regular_examples() {
        let s = parse_schedule("sw 0 1\nsr 1\nfr 1 1\nfw 0").unwrap();
        assert!(check_regular(&s).unwrap().holds());
        let s = parse_schedule("schedule n=2 domain=3 init=0\nsw 0 1\nsr 1\nfr 1 2\nfw 0").unwrap();
        assert!(check_regular(&s).unwrap().fails());
        // new value then old value while the write is still in progress
        let s = parse_schedule(
            "schedule n=2 domain=4 init=1\nsw 0 3\nsr 1\nfr 1 3\nsr 1\nfr 1 1\nfw 0",
        )
        .unwrap();
        assert!(check_regular(&s).unwrap().holds());
        assert!(check_atomic(&s, lim()).unwrap().fails());
    }

    #[test]
    fn multi_writer_rejected_by_safe_and_regular() {
        let s = parse_schedule(OVERLAPPING_WRITES).unwrap();
        assert_eq!(check_safe(&s), Err(ScheduleError::NotSingleWriter));
        assert_eq!(check_regular(&s), Err(ScheduleError::NotSingleWriter));
    }

    #[test]
    fn atomic_examples() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1").unwrap();
        let v = check_atomic(&s, lim()).unwrap();
        assert_eq!(v, Verdict::Holds(Serialisation(vec![OpId(0), OpId(1), OpId(2)])));

        let s = parse_schedule("sw 0 1\nsr 1\nfr 1 1\nfw 0").unwrap();
        let v = check_atomic(&s, lim()).unwrap();
        assert_eq!(v.witness().unwrap().0, vec![OpId(0), OpId(1), OpId(2)]);

        let s = parse_schedule(OVERLAPPING_WRITES).unwrap();
        assert!(check_atomic(&s, lim()).unwrap().fails());
    }

    #[test]
    fn atomic_needs_complete_schedule() {
        let s = parse_schedule("sw 0 1").unwrap();
        assert_eq!(check_atomic(&s, lim()), Err(ScheduleError::Incomplete));
    }

    #[test]
    fn atomic_search_limit_is_reported() {
        let mut text = String::new();
        for _ in 0..13 {
            text.push_str("sr 0\nfr 0 0\n");
        }
        let s = parse_schedule(&text).unwrap();
        assert!(matches!(check_atomic(&s, lim()).unwrap(), Verdict::Unknown(_)));
        let wide = SearchLimits { atomic_ops: 20, ..lim() };
        assert!(check_atomic(&s, wide).unwrap().holds());
    }

    #[test]
    fn weak_examples() {
        assert!(check_weak(&parse_schedule(OVERLAPPING_WRITES).unwrap(), lim()).unwrap().holds());
        let empty = parse_schedule("").unwrap();
        assert!(check_weak(&empty, lim()).unwrap().holds());
        // overlapping writes of 1 and 2 leave 3 behind
        let s = parse_schedule(
            "schedule n=3 domain=4 init=0\nsw 0 1\nsw 1 2\nfw 0\nfw 1\nsr 2\nfr 2 3",
        )
        .unwrap();
        let v = check_weak(&s, lim()).unwrap();
        assert!(matches!(v, Verdict::Fails(Violation { read: Some(_), .. })));
    }

    #[test]
    fn write_order_examples() {
        assert!(check_write_order(&parse_schedule(OVERLAPPING_WRITES).unwrap(), lim()).unwrap().fails());
        assert!(check_write_order(&parse_schedule(STALE_READ_AFTER_NEWER).unwrap(), lim()).unwrap().fails());
        let s = parse_schedule("sw 0 1\nsr 1\nfr 1 1\nfw 0").unwrap();
        let fam = check_write_order(&s, lim()).unwrap();
        let fam = fam.witness().unwrap();
        assert_eq!(fam.orders[&OpId(2)], vec![OpId(0), OpId(1), OpId(2)]);
    }

    #[test]
    fn write_order_family_restricts_to_relevant_writes() {
        // the read completes before the second write starts
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1\nsw 0 0\nfw 0").unwrap();
        let v = check_write_order(&s, lim()).unwrap();
        let fam = v.witness().unwrap();
        let r = s.find(Some(ThreadId(1)), 0).unwrap();
        assert_eq!(fam.orders[&r], vec![OpId::INIT, OpId(1), r]);
        assert_eq!(fam.write_order.len(), 3);
    }

    #[test]
    fn reads_from_examples() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1").unwrap();
        let fam = check_write_order(&s, lim()).unwrap().witness().cloned().unwrap();
        let rho = reads_from(&s, &fam).unwrap();
        assert_eq!(rho[&OpId(2)], OpId(1));

        let s = parse_schedule("sr 0\nfr 0 0").unwrap();
        let fam = check_write_order(&s, lim()).unwrap().witness().cloned().unwrap();
        assert_eq!(reads_from(&s, &fam).unwrap()[&OpId(1)], OpId::INIT);
    }

    #[test]
    fn reads_from_rejects_the_stale_read_candidate() {
        let s = parse_schedule(STALE_READ_AFTER_NEWER).unwrap();
        let w1 = s.find(Some(ThreadId(0)), 0).unwrap();
        let w2 = s.find(Some(ThreadId(1)), 0).unwrap();
        let r1 = s.find(Some(ThreadId(2)), 0).unwrap();
        let r2 = s.find(Some(ThreadId(0)), 1).unwrap();
        // each read is individually legal, but they order w1 and w2 differently
        let family = WriteOrderFamily {
            write_order: vec![OpId::INIT, w1, w2],
            orders: BTreeMap::from([
                (r1, vec![OpId::INIT, w1, w2, r1]),
                (r2, vec![OpId::INIT, w2, w1, r2]),
            ]),
        };
        assert!(matches!(reads_from(&s, &family), Err(ScheduleError::InvalidWitness(_))));
        let mut missing = family.clone();
        missing.orders.remove(&r2);
        assert!(matches!(reads_from(&s, &missing), Err(ScheduleError::InvalidWitness(_))));
    }

    #[test]
    fn legality_recheck_catches_bad_orders() {
        let s = parse_schedule("sw 0 1\nfw 0\nsr 1\nfr 1 1").unwrap();
        assert!(is_legal_serialisation(&s, &[OpId(0), OpId(1), OpId(2)]).is_ok());
        assert!(is_legal_serialisation(&s, &[OpId(0), OpId(2), OpId(1)]).is_err());
        assert!(is_legal_serialisation(&s, &[OpId(0), OpId(0)]).is_err());
        assert!(is_legal_serialisation(&s, &[OpId(2)]).is_err());
    }
}
