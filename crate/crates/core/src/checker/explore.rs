//! Breadth-first construction of the reachable state graph.

use std::hash::BuildHasher;

use hashbrown::HashTable;
use indexmap::IndexSet;
use rustc_hash::FxBuildHasher;

use super::system::{Label, System};
use super::CheckError;

/// States stored back to back in fixed-size chunks, deduplicated through a
/// hash table of indices.
struct StateStore {
    size: usize,
    chunks: Vec<Vec<u8>>,
    len: usize,
    table: HashTable<u32>,
    hasher: FxBuildHasher,
}

const CHUNK_BITS: u32 = 16;
const CHUNK_STATES: usize = 1 << CHUNK_BITS;

fn locate(chunks: &[Vec<u8>], size: usize, i: u32) -> &[u8] {
    let c = &chunks[(i >> CHUNK_BITS) as usize];
    let o = (i as usize & (CHUNK_STATES - 1)) * size;
    &c[o..o + size]
}

impl StateStore {
    fn new(size: usize) -> Self {
        StateStore {
            size,
            chunks: Vec::new(),
            len: 0,
            table: HashTable::new(),
            hasher: FxBuildHasher,
        }
    }

    fn len(&self) -> usize {
        self.len
    }

    fn get(&self, i: u32) -> &[u8] {
        locate(&self.chunks, self.size, i)
    }

    /// Index of `s`, and whether it was newly added.
    fn insert(&mut self, s: &[u8]) -> (u32, bool) {
        let hash = self.hasher.hash_one(s);
        let StateStore {
            size,
            chunks,
            len,
            table,
            hasher,
        } = self;
        let size = *size;
        if let Some(&i) = table.find(hash, |&i| locate(chunks, size, i) == s) {
            return (i, false);
        }
        let i = *len as u32;
        table.insert_unique(hash, i, |&j| hasher.hash_one(locate(chunks, size, j)));
        if *len % CHUNK_STATES == 0 {
            chunks.push(Vec::with_capacity(CHUNK_STATES * size));
        }
        chunks.last_mut().expect("chunk").extend_from_slice(s);
        *len += 1;
        (i, true)
    }

    /// Drops the lookup table; the states stay readable.
    fn freeze(&mut self) {
        self.table = HashTable::new();
    }
}

/// The reachable part of a system's transition graph, in compressed sparse
/// row form. State 0 is initial; states are numbered in discovery order.
pub struct StateGraph {
    pub system: System,
    store: StateStore,
    offsets: Vec<u64>,
    targets: Vec<u32>,
    labels: Vec<u16>,
    label_table: IndexSet<Label>,
    /// False when exploration stopped at the state limit; successors of
    /// states from `offsets.len() - 1` on are then missing.
    pub complete: bool,
    pub limit: usize,
}

impl StateGraph {
    pub fn states(&self) -> usize {
        self.store.len()
    }

    pub fn edges(&self) -> usize {
        self.targets.len()
    }

    pub fn state(&self, i: u32) -> &[u8] {
        self.store.get(i)
    }

    /// States whose successors were computed.
    pub fn expanded(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Outgoing edges of `i` as `(label, target)`.
    pub fn successors(&self, i: u32) -> impl Iterator<Item = (Label, u32)> + '_ {
        self.edge_range(i).map(move |e| (self.label_table[self.labels[e] as usize], self.targets[e]))
    }

    pub(crate) fn edge_range(&self, i: u32) -> std::ops::Range<usize> {
        if (i as usize) < self.expanded() {
            self.offsets[i as usize] as usize..self.offsets[i as usize + 1] as usize
        } else {
            0..0
        }
    }

    pub(crate) fn edge(&self, e: usize) -> (u16, u32) {
        (self.labels[e], self.targets[e])
    }

    pub fn label_count(&self) -> usize {
        self.label_table.len()
    }

    pub fn label(&self, id: u16) -> Label {
        self.label_table[id as usize]
    }

    pub fn label_id(&self, label: Label) -> Option<u16> {
        self.label_table.get_index_of(&label).map(|i| i as u16)
    }

    /// One edge per line: `<src> <label> <dst>`.
    pub fn export(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        let program = self.system.program();
        let names: Vec<String> = self
            .label_table
            .iter()
            .map(|l| l.display(program).to_string().replace(' ', "_"))
            .collect();
        for s in 0..self.expanded() as u32 {
            for e in self.edge_range(s) {
                writeln!(w, "{} {} {}", s, names[self.labels[e] as usize], self.targets[e])?;
            }
        }
        Ok(())
    }
}

/// Explores `system` breadth-first. Stops with an incomplete graph once
/// more than `limit` states have been found.
pub fn explore(system: System, limit: usize) -> Result<StateGraph, CheckError> {
    let mut store = StateStore::new(system.state_size());
    let mut offsets = vec![0u64];
    let mut targets = Vec::new();
    let mut labels = Vec::new();
    let mut label_table = IndexSet::new();
    let initial = system.initial()?;
    store.insert(&initial);
    let mut succ = Vec::new();
    let mut edges: Vec<(u16, u32)> = Vec::new();
    let mut current = Vec::with_capacity(system.state_size());
    let mut complete = true;
    let mut i = 0u32;
    while (i as usize) < store.len() {
        current.clear();
        current.extend_from_slice(store.get(i));
        succ.clear();
        system.successors(&current, &mut succ)?;
        edges.clear();
        for (label, next) in succ.drain(..) {
            let (l, _) = label_table.insert_full(label);
            let l = u16::try_from(l).map_err(|_| CheckError::Limit("more than 65536 distinct labels".into()))?;
            let (j, _) = store.insert(&next);
            if !edges.contains(&(l, j)) {
                edges.push((l, j));
            }
        }
        for &(l, j) in &edges {
            labels.push(l);
            targets.push(j);
        }
        offsets.push(targets.len() as u64);
        i += 1;
        if store.len() > limit {
            complete = false;
            break;
        }
    }
    store.freeze();
    targets.shrink_to_fit();
    labels.shrink_to_fit();
    Ok(StateGraph {
        system,
        store,
        offsets,
        targets,
        labels,
        label_table,
        complete,
        limit,
    })
}
