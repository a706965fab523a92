//! Majority tournaments and their elementary cycles.
//!
//! Each context's preference matrix induces a complete directed graph with an
//! edge `j → i` whenever `p(y_i ≻ y_j) > 0.5`, pointing from the less preferred
//! action towards the more preferred one. A preference function is transitive
//! on a context exactly when that graph is acyclic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::PreferenceMatrix;

pub const DEFAULT_CYCLE_CAP: u64 = 10_000_000;

/// What to do with an off-diagonal entry of exactly `0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    Reject,
    /// The action with the lower index is treated as preferred.
    LowerIndexWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleOptions {
    pub tie_break: TieBreak,
    /// Enumeration stops once this many cycles have been found in a context.
    pub cap: u64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            tie_break: TieBreak::Reject,
            cap: DEFAULT_CYCLE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextCycles {
    /// Action index (into the full action list) beating every other analysed action.
    pub condorcet_winner: Option<usize>,
    pub cycle_count: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub contexts: Vec<ContextCycles>,
    pub cycle_count: u64,
    /// Cycle length → number of cycles of that length.
    pub cycle_length_histogram: BTreeMap<usize, u64>,
    pub cyclic_fraction: f64,
    pub truncated: bool,
}

/// Adjacency of a tournament on `n` nodes: `adj[u]` lists the successors of `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tournament {
    adj: Vec<Vec<usize>>,
}

impl Tournament {
    /// Build from a predicate `beats(i, j)` meaning the edge `j → i` exists.
    pub fn from_beats(n: usize, beats: impl Fn(usize, usize) -> bool) -> Self {
        let adj = (0..n)
            .map(|j| (0..n).filter(|&i| i != j && beats(i, j)).collect())
            .collect();
        Tournament { adj }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn successors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    /// Enumerates elementary cycles (Johnson's circuit search), counting by
    /// length. Returns `(histogram, truncated)`.
    pub fn count_cycles(&self, cap: u64) -> (BTreeMap<usize, u64>, bool) {
        let n = self.len();
        let mut search = CircuitSearch {
            adj: &self.adj,
            start: 0,
            blocked: vec![false; n],
            block_map: vec![Vec::new(); n],
            stack: Vec::with_capacity(n),
            hist: BTreeMap::new(),
            found: 0,
            cap,
        };
        for s in 0..n {
            if search.found >= cap {
                break;
            }
            search.start = s;
            for v in s..n {
                search.blocked[v] = false;
                search.block_map[v].clear();
            }
            search.circuit(s);
        }
        let truncated = search.found >= cap;
        (search.hist, truncated)
    }
}

struct CircuitSearch<'a> {
    adj: &'a [Vec<usize>],
    start: usize,
    blocked: Vec<bool>,
    block_map: Vec<Vec<usize>>,
    stack: Vec<usize>,
    hist: BTreeMap<usize, u64>,
    found: u64,
    cap: u64,
}

impl CircuitSearch<'_> {
    fn unblock(&mut self, u: usize) {
        self.blocked[u] = false;
        let waiting = std::mem::take(&mut self.block_map[u]);
        for w in waiting {
            if self.blocked[w] {
                self.unblock(w);
            }
        }
    }

    // Only vertices >= start take part, which makes every cycle counted once,
    // rooted at its smallest vertex.
    fn circuit(&mut self, v: usize) -> bool {
        let mut closed = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in &self.adj[v] {
            if self.found >= self.cap {
                break;
            }
            if w < self.start {
                continue;
            }
            if w == self.start {
                *self.hist.entry(self.stack.len()).or_insert(0) += 1;
                self.found += 1;
                closed = true;
            } else if !self.blocked[w] && self.circuit(w) {
                closed = true;
            }
        }
        if closed {
            self.unblock(v);
        } else {
            for &w in &self.adj[v] {
                if w >= self.start && !self.block_map[w].contains(&v) {
                    self.block_map[w].push(v);
                }
            }
        }
        self.stack.pop();
        closed
    }
}

/// Builds each context's majority tournament (optionally restricted to a
/// subset of actions) and counts its elementary cycles.
pub fn cycle_stats(
    p: &PreferenceMatrix,
    samples: Option<&[Vec<usize>]>,
    opts: CycleOptions,
) -> Result<CycleReport> {
    let n = p.num_actions();
    if let Some(s) = samples {
        if s.len() != p.num_contexts() {
            return Err(Error::Shape(format!(
                "{} action subsets for {} contexts",
                s.len(),
                p.num_contexts()
            )));
        }
    }
    let mut contexts = Vec::with_capacity(p.num_contexts());
    let mut hist = BTreeMap::new();
    for x in 0..p.num_contexts() {
        let nodes: Vec<usize> = match samples {
            Some(s) => {
                let sub = &s[x];
                for (k, &a) in sub.iter().enumerate() {
                    if a >= n || sub[..k].contains(&a) {
                        return Err(Error::invalid(
                            "action subset",
                            format!("context {x}: index {a} out of range or repeated"),
                        ));
                    }
                }
                sub.clone()
            }
            None => (0..n).collect(),
        };
        let m = nodes.len();
        for a in 0..m {
            for b in a + 1..m {
                if p.get(x, nodes[a], nodes[b]) == 0.5 && opts.tie_break == TieBreak::Reject {
                    return Err(Error::Tie {
                        context: x,
                        first: nodes[a].min(nodes[b]),
                        second: nodes[a].max(nodes[b]),
                    });
                }
            }
        }
        let beats = |i: usize, j: usize| {
            let (gi, gj) = (nodes[i], nodes[j]);
            let v = p.get(x, gi, gj);
            v > 0.5 || (v == 0.5 && gi < gj)
        };
        let t = Tournament::from_beats(m, beats);
        let winner = (0..m)
            .find(|&i| (0..m).all(|j| j == i || beats(i, j)))
            .map(|i| nodes[i]);
        let (h, truncated) = t.count_cycles(opts.cap);
        let count = h.values().sum();
        for (len, c) in h {
            *hist.entry(len).or_insert(0) += c;
        }
        contexts.push(ContextCycles {
            condorcet_winner: winner,
            cycle_count: count,
            truncated,
        });
    }
    let cyclic = contexts.iter().filter(|c| c.cycle_count > 0).count();
    Ok(CycleReport {
        cycle_count: contexts.iter().map(|c| c.cycle_count).sum(),
        truncated: contexts.iter().any(|c| c.truncated),
        cyclic_fraction: cyclic as f64 / contexts.len() as f64,
        cycle_length_histogram: hist,
        contexts,
    })
}
