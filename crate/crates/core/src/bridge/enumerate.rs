//! Exhaustive enumeration of register traces up to a length bound.

use rustc_hash::FxHashSet;

use super::busy;
use crate::action::{Action, ThreadId};
use crate::register::{Model, Register, RegisterConfig, RegisterError, RegisterState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceFilter {
    /// Only report traces in which no operation is in progress.
    pub complete: bool,
    /// Only report (and only extend) traces whose writes are by one thread.
    pub single_writer: bool,
}

/// Calls `f` on every trace of length at most `depth`, in canonical order
/// (shorter prefixes first, then successors by action order). Each label
/// sequence is reported once, however many runs produce it.
pub fn for_each_trace(
    model: Model,
    config: RegisterConfig,
    depth: usize,
    filter: TraceFilter,
    mut f: impl FnMut(&[Action]),
) -> Result<(), RegisterError> {
    let reg = Register::new(model, config)?;
    let mut states = FxHashSet::default();
    states.insert(reg.initial());
    let mut path = Vec::with_capacity(depth);
    walk(&reg, &states, depth, filter, None, &mut path, &mut f);
    Ok(())
}

fn walk(
    reg: &Register,
    states: &FxHashSet<RegisterState>,
    depth: usize,
    filter: TraceFilter,
    writer: Option<ThreadId>,
    path: &mut Vec<Action>,
    f: &mut impl FnMut(&[Action]),
) {
    if !filter.complete || reg.config.thread_ids().all(|t| !busy(states, t)) {
        f(path);
    }
    if path.len() == depth {
        return;
    }
    let mut labels: Vec<Action> = states.iter().flat_map(|s| reg.enabled(s)).collect();
    labels.sort();
    labels.dedup();
    let mut buf = Vec::new();
    for a in labels {
        let mut writer = writer;
        if let Action::InvokeWrite(t, _) = a {
            if filter.single_writer && writer.is_some_and(|w| w != t) {
                continue;
            }
            writer = Some(t);
        }
        let mut next = FxHashSet::default();
        for s in states {
            buf.clear();
            reg.step_into(s, a, &mut buf);
            next.extend(buf.drain(..));
        }
        path.push(a);
        walk(reg, &next, depth, filter, writer, path, f);
        path.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Value;
    use crate::bridge::is_trace;

    fn collect(model: Model, domain: u8, threads: u8, depth: usize, filter: TraceFilter) -> Vec<Vec<Action>> {
        let config = RegisterConfig::new(domain, Value(0), threads).unwrap();
        let mut out = Vec::new();
        for_each_trace(model, config, depth, filter, |t| out.push(t.to_vec())).unwrap();
        out
    }

    #[test]
    fn depth_zero_is_the_empty_trace() {
        assert_eq!(collect(Model::Safe, 2, 2, 0, TraceFilter::default()), vec![Vec::<Action>::new()]);
    }

    #[test]
    fn single_thread_depth_two() {
        let traces = collect(Model::Safe, 1, 1, 2, TraceFilter::default());
        let read: Vec<Action> = vec!["sr 0".parse().unwrap(), "fr 0 0".parse().unwrap()];
        let write: Vec<Action> = vec!["sw 0 0".parse().unwrap(), "fw 0".parse().unwrap()];
        assert!(traces.contains(&read));
        assert!(traces.contains(&write));
        assert_eq!(traces.len(), 5);
        let complete = collect(Model::Safe, 1, 1, 2, TraceFilter { complete: true, single_writer: false });
        assert_eq!(complete.len(), 3);
    }

    #[test]
    fn every_enumerated_sequence_is_a_distinct_trace() {
        for model in Model::ALL {
            let config = RegisterConfig::new(2, Value(0), 2).unwrap();
            let traces = collect(model, 2, 2, 5, TraceFilter::default());
            let distinct: std::collections::HashSet<_> = traces.iter().collect();
            assert_eq!(distinct.len(), traces.len());
            assert!(traces.iter().all(|t| is_trace(model, config, t)));
        }
    }
}
