//! Finite state machines used as the world model for recovery planning.
//!
//! An [`Fsm`] is a directed graph over states `0..n_nodes`, stored as an
//! ordered successor list per state. Generation follows the "force one edge
//! per unconnected node, then fill randomly" procedure, and the module also
//! carries the path executor and the BFS oracle that the planning loop and
//! the benchmark metrics rely on.

mod dict;
mod generate;
mod suite;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dict::{parse_dict_text, DictParseError};
pub use generate::{generate_fsm, GENERATION_ATTEMPTS_PER_EDGE};
pub use suite::{
    default_cells, derive_seed, BenchInstance, FsmFile, Suite, SuiteError, SuiteManifest,
    SplitMix64, DEFAULT_INSTANCES_PER_CELL,
};

/// Identifier of a state; always `< n_nodes` for a well-formed machine.
pub type StateId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FsmError {
    #[error("infeasible graph: {0}")]
    InfeasibleGraph(String),
    #[error("generation stalled after {attempts} sampling attempts ({edges} of {target} edges placed)")]
    GenerationStalled {
        attempts: u64,
        edges: usize,
        target: usize,
    },
    #[error("unknown state {state} (machine has {n_nodes} states)")]
    UnknownState { state: StateId, n_nodes: usize },
    #[error("no reachable ordered pair of distinct states")]
    NoReachablePair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fsm {
    n_nodes: usize,
    adjacency: Vec<Vec<StateId>>,
}

impl Fsm {
    /// Builds a machine with `n_nodes` states and no transitions.
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            adjacency: vec![Vec::new(); n_nodes],
        }
    }

    /// Builds a machine from successor lists, one per state.
    ///
    /// No invariant is enforced here so that malformed inputs can still be
    /// inspected with [`Fsm::validate_structure`].
    pub fn from_lists(adjacency: Vec<Vec<StateId>>) -> Self {
        Self {
            n_nodes: adjacency.len(),
            adjacency,
        }
    }

    /// Builds a machine from a sparse map; missing keys get empty lists.
    pub fn from_map(n_nodes: usize, map: &BTreeMap<StateId, Vec<StateId>>) -> Self {
        let mut fsm = Self::empty(n_nodes);
        for (&from, succ) in map {
            if from >= fsm.n_nodes {
                fsm.n_nodes = from + 1;
                fsm.adjacency.resize(from + 1, Vec::new());
            }
            fsm.adjacency[from] = succ.clone();
        }
        fsm
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn successors(&self, state: StateId) -> &[StateId] {
        self.adjacency.get(state).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn lists(&self) -> &[Vec<StateId>] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: StateId, to: StateId) -> bool {
        self.successors(from).contains(&to)
    }

    pub(crate) fn push_edge(&mut self, from: StateId, to: StateId) {
        self.adjacency[from].push(to);
    }

    fn check_state(&self, state: StateId) -> Result<(), FsmError> {
        if state < self.n_nodes {
            Ok(())
        } else {
            Err(FsmError::UnknownState {
                state,
                n_nodes: self.n_nodes,
            })
        }
    }

    /// Lists every structural invariant violation; empty means well formed.
    pub fn validate_structure(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut incident = vec![false; self.n_nodes];
        for (from, succ) in self.adjacency.iter().enumerate() {
            for (k, &to) in succ.iter().enumerate() {
                if to == from {
                    out.push(Violation::SelfLoop { node: from });
                } else if to >= self.n_nodes {
                    out.push(Violation::TargetOutOfRange { from, to });
                    continue;
                }
                if succ[..k].contains(&to) {
                    out.push(Violation::DuplicateEdge { from, to });
                }
                if to != from {
                    incident[from] = true;
                    incident[to] = true;
                }
            }
        }
        for (node, seen) in incident.iter().enumerate() {
            if !seen {
                out.push(Violation::Disconnected { node });
            }
        }
        out
    }

    /// Walks the path pair by pair and stops at the first missing edge.
    pub fn traverse(&self, path: &PathPlan) -> Result<TraversalReport, FsmError> {
        for &s in path.states() {
            self.check_state(s)?;
        }
        let states = path.states();
        let mut executed = vec![states[0]];
        for (i, pair) in states.windows(2).enumerate() {
            if !self.has_edge(pair[0], pair[1]) {
                return Ok(TraversalReport {
                    valid: false,
                    executed_prefix: executed,
                    first_invalid_index: Some(i),
                });
            }
            executed.push(pair[1]);
        }
        Ok(TraversalReport {
            valid: true,
            executed_prefix: executed,
            first_invalid_index: None,
        })
    }

    /// Breadth-first shortest path by edge count. Successors are expanded in
    /// ascending id order, so among equally short paths the result is the one
    /// that is lexicographically smallest by discovery.
    pub fn shortest_path(
        &self,
        start: StateId,
        goal: StateId,
    ) -> Result<Option<PathPlan>, FsmError> {
        self.check_state(start)?;
        self.check_state(goal)?;
        if start == goal {
            return Ok(Some(PathPlan::single(start)));
        }
        let mut parent: Vec<Option<StateId>> = vec![None; self.n_nodes];
        let mut seen = vec![false; self.n_nodes];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            let mut succ: Vec<StateId> = self
                .successors(cur)
                .iter()
                .copied()
                .filter(|&s| s < self.n_nodes)
                .collect();
            succ.sort_unstable();
            for next in succ {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                parent[next] = Some(cur);
                if next == goal {
                    let mut rev = vec![goal];
                    let mut at = goal;
                    while let Some(p) = parent[at] {
                        rev.push(p);
                        at = p;
                    }
                    rev.reverse();
                    return Ok(Some(PathPlan::new(rev).expect("non-empty")));
                }
                queue.push_back(next);
            }
        }
        Ok(None)
    }

    /// States reachable from `start` by at least zero transitions.
    pub fn reachable_from(&self, start: StateId) -> Vec<bool> {
        let mut seen = vec![false; self.n_nodes];
        if start >= self.n_nodes {
            return seen;
        }
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(cur) = stack.pop() {
            for &next in self.successors(cur) {
                if next < self.n_nodes && !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen
    }

    /// Canonical dictionary text, e.g. `{0: [1, 2], 1: [2], 2: [0]}`.
    pub fn encode_as_dict_text(&self) -> String {
        dict::encode(self)
    }

    /// Draws a distinct `(start, goal)` pair with `goal` reachable from `start`.
    ///
    /// Rejection sampling is tried first (at most `50·N²` draws); if that
    /// fails the reachable pairs are enumerated and one is picked uniformly.
    pub fn sample_benchmark_task(&self, seed: u64) -> Result<(StateId, StateId), FsmError> {
        let n = self.n_nodes;
        if n < 2 {
            return Err(FsmError::NoReachablePair);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tries = 50 * n * n;
        for _ in 0..tries {
            let start = rng.gen_range(0..n);
            let goal = rng.gen_range(0..n);
            if start != goal && self.reachable_from(start)[goal] {
                return Ok((start, goal));
            }
        }
        let pairs: Vec<(StateId, StateId)> = (0..n)
            .flat_map(|s| {
                let reach = self.reachable_from(s);
                (0..n)
                    .filter(move |&g| g != s && reach[g])
                    .map(move |g| (s, g))
            })
            .collect();
        if pairs.is_empty() {
            return Err(FsmError::NoReachablePair);
        }
        Ok(pairs[rng.gen_range(0..pairs.len())])
    }
}

/// One structural problem found by [`Fsm::validate_structure`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    SelfLoop { node: StateId },
    DuplicateEdge { from: StateId, to: StateId },
    Disconnected { node: StateId },
    TargetOutOfRange { from: StateId, to: StateId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { node } => write!(f, "self-loop at {node}"),
            Violation::DuplicateEdge { from, to } => write!(f, "duplicate edge {from} -> {to}"),
            Violation::Disconnected { node } => write!(f, "node {node} disconnected"),
            Violation::TargetOutOfRange { from, to } => {
                write!(f, "edge {from} -> {to} targets an unknown state")
            }
        }
    }
}

/// A sequence of states; never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<StateId>", into = "Vec<StateId>")]
pub struct PathPlan(Vec<StateId>);

impl PathPlan {
    pub fn new(states: Vec<StateId>) -> Option<Self> {
        if states.is_empty() {
            None
        } else {
            Some(Self(states))
        }
    }

    pub fn single(state: StateId) -> Self {
        Self(vec![state])
    }

    pub fn states(&self) -> &[StateId] {
        &self.0
    }

    pub fn start(&self) -> StateId {
        self.0[0]
    }

    pub fn end(&self) -> StateId {
        *self.0.last().expect("non-empty")
    }

    /// Number of transitions.
    pub fn len_transitions(&self) -> usize {
        self.0.len() - 1
    }
}

impl TryFrom<Vec<StateId>> for PathPlan {
    type Error = &'static str;

    fn try_from(value: Vec<StateId>) -> Result<Self, Self::Error> {
        PathPlan::new(value).ok_or("path must contain at least one state")
    }
}

impl From<PathPlan> for Vec<StateId> {
    fn from(p: PathPlan) -> Self {
        p.0
    }
}

impl fmt::Display for PathPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalReport {
    pub valid: bool,
    pub executed_prefix: Vec<StateId>,
    /// Index `i` such that `states[i] -> states[i + 1]` is not an edge.
    pub first_invalid_index: Option<usize>,
}
