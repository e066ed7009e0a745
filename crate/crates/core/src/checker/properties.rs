//! Mutual exclusion and reachability of the critical section, evaluated on
//! explored graphs, with counterexamples.

use std::collections::VecDeque;

use serde::Serialize;

use super::explore::StateGraph;
use super::system::{Label, System};
use crate::action::ThreadId;

/// Read access to a finite labelled graph whose state 0 is initial. Labels
/// are interned as small ids.
pub trait Lts {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn for_each_edge(&self, s: u32, f: &mut dyn FnMut(u16, u32));
    /// Labels have the ids `0..label_count()`.
    fn label_count(&self) -> usize;
    fn label(&self, id: u16) -> Label;
    fn label_id(&self, label: Label) -> Option<u16>;
}

impl Lts for StateGraph {
    fn len(&self) -> usize {
        self.states()
    }

    fn for_each_edge(&self, s: u32, f: &mut dyn FnMut(u16, u32)) {
        for e in self.edge_range(s) {
            let (l, t) = self.edge(e);
            f(l, t);
        }
    }

    fn label_count(&self) -> usize {
        StateGraph::label_count(self)
    }

    fn label(&self, id: u16) -> Label {
        StateGraph::label(self, id)
    }

    fn label_id(&self, label: Label) -> Option<u16> {
        StateGraph::label_id(self, label)
    }
}

/// A small explicit graph, mostly for tests.
#[derive(Clone, Debug, Default)]
pub struct EdgeList {
    states: usize,
    labels: Vec<Label>,
    edges: Vec<(u32, u16, u32)>,
}

impl EdgeList {
    pub fn new(states: usize, edges: &[(u32, Label, u32)]) -> Self {
        let mut labels: Vec<Label> = edges.iter().map(|e| e.1).collect();
        labels.sort();
        labels.dedup();
        let id = |l: Label| labels.binary_search(&l).expect("interned") as u16;
        let edges = edges.iter().map(|&(a, l, b)| (a, id(l), b)).collect();
        EdgeList { states, labels, edges }
    }
}

impl Lts for EdgeList {
    fn len(&self) -> usize {
        self.states
    }

    fn for_each_edge(&self, s: u32, f: &mut dyn FnMut(u16, u32)) {
        for &(a, l, b) in &self.edges {
            if a == s {
                f(l, b);
            }
        }
    }

    fn label_count(&self) -> usize {
        self.labels.len()
    }

    fn label(&self, id: u16) -> Label {
        self.labels[id as usize]
    }

    fn label_id(&self, label: Label) -> Option<u16> {
        self.labels.binary_search(&label).ok().map(|i| i as u16)
    }
}

/// Id that matches no edge, for labels absent from a graph.
const NO_LABEL: u16 = u16::MAX;

fn id_of(g: &dyn Lts, label: Label) -> u16 {
    g.label_id(label).unwrap_or(NO_LABEL)
}

/// Predecessor lists in compressed sparse row form.
struct Reverse {
    offsets: Vec<u64>,
    sources: Vec<u32>,
    labels: Vec<u16>,
}

impl Reverse {
    fn new(g: &dyn Lts) -> Self {
        let n = g.len();
        let mut offsets = vec![0u64; n + 1];
        for s in 0..n as u32 {
            g.for_each_edge(s, &mut |_, t| offsets[t as usize + 1] += 1);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let m = offsets[n] as usize;
        let mut fill: Vec<u64> = offsets[..n].to_vec();
        let mut sources = vec![0u32; m];
        let mut labels = vec![0u16; m];
        for s in 0..n as u32 {
            g.for_each_edge(s, &mut |l, t| {
                let k = fill[t as usize] as usize;
                sources[k] = s;
                labels[k] = l;
                fill[t as usize] += 1;
            });
        }
        Reverse {
            offsets,
            sources,
            labels,
        }
    }

    fn of(&self, t: u32) -> impl Iterator<Item = (u16, u32)> + '_ {
        let r = self.offsets[t as usize] as usize..self.offsets[t as usize + 1] as usize;
        r.map(move |k| (self.labels[k], self.sources[k]))
    }
}

/// A path through state indices: `states[k]` to `states[k + 1]` via
/// `labels[k]`. With `loop_start`, the last state equals
/// `states[loop_start]`, closing a cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexPath {
    pub labels: Vec<Label>,
    pub states: Vec<u32>,
    pub loop_start: Option<usize>,
}

const NO_PARENT: u32 = u32::MAX;

/// Breadth-first search tree over `nodes` nodes, with node 0 as root.
struct Bfs {
    parent: Vec<u32>,
    label: Vec<u16>,
}

impl Bfs {
    fn new(nodes: usize) -> Self {
        Bfs {
            parent: vec![NO_PARENT; nodes],
            label: vec![0; nodes],
        }
    }

    fn seen(&self, k: u32) -> bool {
        k == 0 || self.parent[k as usize] != NO_PARENT
    }

    fn set(&mut self, k: u32, p: u32, l: u16) {
        self.parent[k as usize] = p;
        self.label[k as usize] = l;
    }

    /// Path from the root to `end`, with node ids mapped through `state`.
    fn unwind(&self, g: &dyn Lts, end: u32, state: impl Fn(u32) -> u32) -> IndexPath {
        let mut labels = Vec::new();
        let mut states = vec![state(end)];
        let mut cur = end;
        while cur != 0 {
            labels.push(g.label(self.label[cur as usize]));
            cur = self.parent[cur as usize];
            states.push(state(cur));
        }
        labels.reverse();
        states.reverse();
        IndexPath {
            labels,
            states,
            loop_start: None,
        }
    }
}

/// Shortest path from state 0 to some state satisfying `target`.
fn shortest_path(g: &dyn Lts, target: impl Fn(u32) -> bool) -> Option<IndexPath> {
    if g.is_empty() {
        return None;
    }
    let mut bfs = Bfs::new(g.len());
    let mut queue = VecDeque::from([0u32]);
    while let Some(s) = queue.pop_front() {
        if target(s) {
            return Some(bfs.unwind(g, s, |x| x));
        }
        g.for_each_edge(s, &mut |l, t| {
            if !bfs.seen(t) {
                bfs.set(t, s, l);
                queue.push_back(t);
            }
        });
    }
    None
}

/// Two distinct threads with `crit` enabled in `s`.
fn mutex_violation(g: &dyn Lts, crit_of: &[Option<ThreadId>], s: u32) -> Option<(ThreadId, ThreadId)> {
    let mut first: Option<ThreadId> = None;
    let mut pair = None;
    g.for_each_edge(s, &mut |l, _| {
        if let Some(t) = crit_of.get(l as usize).copied().flatten() {
            match first {
                None => first = Some(t),
                Some(u) if u != t && pair.is_none() => pair = Some((u, t)),
                _ => {}
            }
        }
    });
    pair
}

/// A shortest path to a state where two threads can both enter their
/// critical sections.
pub fn find_mutex_violation(g: &dyn Lts) -> Option<(IndexPath, (ThreadId, ThreadId))> {
    let crit_of: Vec<Option<ThreadId>> = (0..g.label_count())
        .map(|k| match g.label(k as u16) {
            Label::Crit(t) => Some(t),
            _ => None,
        })
        .collect();
    let path = shortest_path(g, |s| mutex_violation(g, &crit_of, s).is_some())?;
    let pair = mutex_violation(g, &crit_of, *path.states.last().expect("non-empty")).expect("target state");
    Some((path, pair))
}

/// Extends `path` forward from its last state, following the first allowed
/// edge each time, until a state repeats or no allowed edge is left.
fn walk_lasso(g: &dyn Lts, mut path: IndexPath, allowed: impl Fn(u16, u32) -> bool) -> IndexPath {
    let stem = path.states.len() - 1;
    let mut position = std::collections::HashMap::new();
    let mut cur = *path.states.last().expect("non-empty");
    position.insert(cur, stem);
    loop {
        let mut next = None;
        g.for_each_edge(cur, &mut |l, t| {
            if next.is_none() && allowed(l, t) {
                next = Some((l, t));
            }
        });
        let Some((l, t)) = next else {
            return path;
        };
        path.labels.push(g.label(l));
        path.states.push(t);
        if let Some(&k) = position.get(&t) {
            path.loop_start = Some(k);
            return path;
        }
        position.insert(t, path.states.len() - 1);
        cur = t;
    }
}

/// Reachability of the critical section for thread `i`: after any
/// `noncrit(i)`, and however the system proceeds without `crit(i)`, a state
/// with `crit(i)` enabled stays reachable.
///
/// Returns a path to a state, reached without `crit(i)` since the last
/// `noncrit(i)`, from which `crit(i)` can never again be enabled, extended
/// into a lasso or a deadlock.
pub fn find_reach_violation(g: &dyn Lts, i: ThreadId) -> Option<IndexPath> {
    let n = g.len();
    if n == 0 {
        return None;
    }
    let crit = id_of(g, Label::Crit(i));
    let noncrit = id_of(g, Label::NonCrit(i));
    // can_enter[s]: a state with crit(i) enabled is reachable from s
    let mut can_enter = vec![false; n];
    let mut stack = Vec::new();
    for s in 0..n as u32 {
        let mut enabled = false;
        g.for_each_edge(s, &mut |l, _| enabled |= l == crit);
        if enabled {
            can_enter[s as usize] = true;
            stack.push(s);
        }
    }
    {
        let rev = Reverse::new(g);
        while let Some(s) = stack.pop() {
            for (_, p) in rev.of(s) {
                if !can_enter[p as usize] {
                    can_enter[p as usize] = true;
                    stack.push(p);
                }
            }
        }
    }
    // BFS over (state, waiting): waiting means a noncrit(i) happened and no
    // crit(i) since
    let node = |s: u32, w: bool| s * 2 + w as u32;
    let mut bfs = Bfs::new(2 * n);
    let mut queue = VecDeque::from([0u32]);
    let mut found = None;
    while let Some(k) = queue.pop_front() {
        let (s, w) = (k / 2, k % 2 == 1);
        if w && !can_enter[s as usize] {
            found = Some(k);
            break;
        }
        g.for_each_edge(s, &mut |l, t| {
            let tw = if l == noncrit {
                true
            } else if l == crit {
                false
            } else {
                w
            };
            let j = node(t, tw);
            if !bfs.seen(j) {
                bfs.set(j, k, l);
                queue.push_back(j);
            }
        });
    }
    let path = bfs.unwind(g, found?, |k| k / 2);
    drop(bfs);
    Some(walk_lasso(g, path, |_, _| true))
}

/// The greatest fixpoint of `X = {s | s has a non-crit(i) edge into X}`:
/// the states with an infinite path avoiding `crit(i)`.
pub fn divergent_states(g: &dyn Lts, i: ThreadId) -> Vec<bool> {
    let n = g.len();
    let crit = id_of(g, Label::Crit(i));
    let mut count = vec![0u32; n];
    for s in 0..n as u32 {
        g.for_each_edge(s, &mut |l, _| {
            if l != crit {
                count[s as usize] += 1;
            }
        });
    }
    let rev = Reverse::new(g);
    let mut inside = vec![true; n];
    let mut stack: Vec<u32> = (0..n as u32).filter(|&s| count[s as usize] == 0).collect();
    for &s in &stack {
        inside[s as usize] = false;
    }
    while let Some(s) = stack.pop() {
        for (l, p) in rev.of(s) {
            if l == crit || !inside[p as usize] {
                continue;
            }
            count[p as usize] -= 1;
            if count[p as usize] == 0 {
                inside[p as usize] = false;
                stack.push(p);
            }
        }
    }
    inside
}

/// The formula `¬⟨true*·noncrit(i)⟩ νX.⟨¬crit(i)⟩X` read literally: fails
/// when some `noncrit(i)` edge leads into a state with an infinite
/// `crit(i)`-free continuation. Returns the stem through that edge and the
/// lasso.
pub fn find_reach_divergence(g: &dyn Lts, i: ThreadId) -> Option<IndexPath> {
    let inside = divergent_states(g, i);
    let crit = id_of(g, Label::Crit(i));
    let noncrit = id_of(g, Label::NonCrit(i));
    let enters = |s: u32| {
        let mut step = None;
        g.for_each_edge(s, &mut |l, t| {
            if step.is_none() && l == noncrit && inside[t as usize] {
                step = Some((l, t));
            }
        });
        step
    };
    let mut path = shortest_path(g, |s| enters(s).is_some())?;
    let (l, t) = enters(*path.states.last().expect("non-empty")).expect("edge exists");
    path.labels.push(g.label(l));
    path.states.push(t);
    Some(walk_lasso(g, path, |l, t| l != crit && inside[t as usize]))
}

/// A path through encoded states of a system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub labels: Vec<Label>,
    pub states: Vec<Vec<u8>>,
    /// Index into `states` where the closing cycle starts; the last state
    /// repeats it.
    pub loop_start: Option<usize>,
}

impl Counterexample {
    pub fn from_path(graph: &StateGraph, path: &IndexPath) -> Self {
        Counterexample {
            labels: path.labels.clone(),
            states: path.states.iter().map(|&s| graph.state(s).to_vec()).collect(),
            loop_start: path.loop_start,
        }
    }

    /// Re-executes the path from the initial state of `system`, checking
    /// that each step is a transition.
    pub fn replay(&self, system: &System) -> Result<(), String> {
        if self.states.len() != self.labels.len() + 1 {
            return Err("a path needs one more state than labels".into());
        }
        let initial = system.initial().map_err(|e| e.to_string())?;
        if self.states[0] != initial {
            return Err("the path does not start in the initial state".into());
        }
        let mut succ = Vec::new();
        for (k, label) in self.labels.iter().enumerate() {
            succ.clear();
            system.successors(&self.states[k], &mut succ).map_err(|e| e.to_string())?;
            if !succ.iter().any(|(l, s)| l == label && *s == self.states[k + 1]) {
                return Err(format!("step {k} ({}) is not a transition", label.display(system.program())));
            }
        }
        if let Some(k) = self.loop_start {
            if self.states.get(k) != self.states.last() {
                return Err("the cycle does not close".into());
            }
        }
        Ok(())
    }

    /// Renders one line per step.
    pub fn render(&self, system: &System) -> String {
        let p = system.program();
        let mut out = String::new();
        for (k, l) in self.labels.iter().enumerate() {
            if self.loop_start == Some(k) {
                out.push_str("-- cycle --\n");
            }
            out.push_str(&format!("{:4}  {}\n", k + 1, l.display(p)));
        }
        if self.loop_start.is_none() && !self.labels.is_empty() {
            if let Some(last) = self.states.last() {
                let mut succ = Vec::new();
                if system.successors(last, &mut succ).is_ok() && succ.is_empty() {
                    out.push_str("-- deadlock --\n");
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "property", content = "thread", rename_all = "lowercase")]
pub enum Property {
    Mutex,
    Reach(ThreadId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Holds,
    Violated(Counterexample),
    /// Exploration stopped at the state limit before a verdict was certain.
    Inconclusive { states: usize },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Holds => "holds",
            Outcome::Violated(_) => "violated",
            Outcome::Inconclusive { .. } => "inconclusive",
        }
    }

    pub fn holds(&self) -> bool {
        matches!(self, Outcome::Holds)
    }

    pub fn violated(&self) -> bool {
        matches!(self, Outcome::Violated(_))
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            Outcome::Violated(c) => Some(c),
            _ => None,
        }
    }
}

/// Mutual exclusion: no reachable state enables `crit` for two threads. A
/// violation found in a partial graph is still reported.
pub fn check_mutex(graph: &StateGraph) -> Outcome {
    match find_mutex_violation(graph) {
        Some((path, _)) => Outcome::Violated(Counterexample::from_path(graph, &path)),
        None if graph.complete => Outcome::Holds,
        None => Outcome::Inconclusive {
            states: graph.states(),
        },
    }
}

/// Reachability of the critical section for thread `i`, see
/// [`find_reach_violation`].
pub fn check_reach(graph: &StateGraph, i: ThreadId) -> Outcome {
    if !graph.complete {
        return Outcome::Inconclusive {
            states: graph.states(),
        };
    }
    match find_reach_violation(graph, i) {
        Some(path) => Outcome::Violated(Counterexample::from_path(graph, &path)),
        None => Outcome::Holds,
    }
}

/// The literal fixpoint reading, see [`find_reach_divergence`].
pub fn check_reach_divergence(graph: &StateGraph, i: ThreadId) -> Outcome {
    if !graph.complete {
        return Outcome::Inconclusive {
            states: graph.states(),
        };
    }
    match find_reach_divergence(graph, i) {
        Some(path) => Outcome::Violated(Counterexample::from_path(graph, &path)),
        None => Outcome::Holds,
    }
}

/// Reachability for every thread; the first violation wins.
pub fn check_reach_all(graph: &StateGraph) -> Vec<(ThreadId, Outcome)> {
    (0..graph.system.threads() as u8)
        .map(|t| (ThreadId(t), check_reach(graph, ThreadId(t))))
        .collect()
}
