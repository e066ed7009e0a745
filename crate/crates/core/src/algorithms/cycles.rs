//! Ordered cycles of thread ids and the `CG` predicate of the three-bit
//! algorithm.

use std::collections::BTreeSet;

use crate::action::ThreadId;

use super::AlgorithmError;

/// A cycle of distinct threads, represented with its smallest element
/// first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cycle(Vec<ThreadId>);

impl Cycle {
    /// Builds a cycle from its elements in cyclic order, rotating the
    /// smallest to the front.
    pub fn new(elements: Vec<ThreadId>) -> Result<Cycle, AlgorithmError> {
        let distinct: BTreeSet<_> = elements.iter().collect();
        if elements.is_empty() || distinct.len() != elements.len() {
            return Err(AlgorithmError::InvalidCycle);
        }
        let mut elements = elements;
        let min = elements.iter().enumerate().min_by_key(|(_, t)| **t).map(|(i, _)| i).unwrap();
        elements.rotate_left(min);
        Ok(Cycle(elements))
    }

    pub fn elements(&self) -> &[ThreadId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The ordered cycle containing exactly the elements of `set`.
pub fn ord(set: &BTreeSet<ThreadId>) -> Result<Cycle, AlgorithmError> {
    Cycle::new(set.iter().copied().collect())
}

/// `CG(v, γ, γ[j])`: `v(γ[j])` equals `¬v(γ[j-1])` for `j > 0`, and
/// equals `v(γ[m])` (the last element) for `j = 0`.
pub fn cg(v: impl Fn(ThreadId) -> bool, cycle: &Cycle, j: usize) -> Result<bool, AlgorithmError> {
    let elems = cycle.elements();
    if j >= elems.len() {
        return Err(AlgorithmError::IndexOutOfRange { index: j, len: elems.len() });
    }
    let cgv = if j > 0 { !v(elems[j - 1]) } else { v(elems[elems.len() - 1]) };
    Ok(v(elems[j]) == cgv)
}

fn mask_cycle(mask: u32) -> Vec<u32> {
    (0..32).filter(|b| mask & (1 << b) != 0).collect()
}

/// Element after `elem` in the ordered cycle of `mask`, wrapping around.
pub(crate) fn cycle_next(mask: u32, elem: u32) -> u32 {
    let elems = mask_cycle(mask);
    elems.iter().copied().find(|&e| e > elem).unwrap_or(elems[0])
}

/// Element before `elem` in the ordered cycle of `mask`, wrapping around.
pub(crate) fn cycle_prev(mask: u32, elem: u32) -> u32 {
    let elems = mask_cycle(mask);
    elems.iter().rev().copied().find(|&e| e < elem).unwrap_or(elems[elems.len() - 1])
}

/// The least element `j` of the ordered cycle of `cycle_mask` with
/// `CG(bits, γ, j)`, reading `v(t)` as bit `t` of `bits`.
pub(crate) fn cg_min_mask(bits: u32, cycle_mask: u32) -> Option<u32> {
    let elems: Vec<ThreadId> = mask_cycle(cycle_mask).into_iter().map(|t| ThreadId(t as u8)).collect();
    let cycle = Cycle::new(elems).ok()?;
    let v = |t: ThreadId| bits & (1 << t.0) != 0;
    (0..cycle.len())
        .find(|&j| cg(v, &cycle, j).expect("index in range"))
        .map(|j| cycle.elements()[j].0 as u32)
}
