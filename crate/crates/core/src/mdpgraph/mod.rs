//! The directed weighted graph induced by an MDP, and the structural
//! analyses run on it: reward density, minimum start-to-goal cut-sets
//! (state space bottlenecks), zero-incentive classification and winning-walk
//! existence.
//!
//! Vertices are canonical state keys. Edges are `(s, a, s')` triples in BFS
//! discovery order, weighted by the transition reward.

mod flow;
mod incentive;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{MapSpec, WorldState};

pub use flow::FlowNetwork;
pub use incentive::{classify_incentive, Incentive, IncentiveReport, TraceStep};

/// Threshold used by [`is_sparse`] when the caller has no better one. It is a
/// tool convention: sparsity is only defined as "much smaller than one".
pub const DEFAULT_SPARSITY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error(
        "state cap of {cap} exceeded ({discovered} states discovered, {frontier} still queued)"
    )]
    StateCapExceeded {
        cap: usize,
        discovered: usize,
        frontier: usize,
    },
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("graph has no initial states")]
    NoInitialStates,
    #[error("no goal state is reachable from the initial states")]
    NoWinningWalk,
    #[error("vertex {0} is both initial and goal")]
    InitialIsGoal(usize),
    #[error("no trace traverses the cut")]
    InsufficientTraces,
    #[error("invalid graph: {0}")]
    Invalid(String),
}

/// One labelled transition produced by a [`TransitionModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub action: String,
    pub next: S,
    pub reward: f64,
}

/// A deterministic MDP that can be enumerated into an [`InducedGraph`].
pub trait TransitionModel {
    type State: Clone + Eq + Hash;

    fn initial_states(&self) -> Vec<Self::State>;
    fn is_goal(&self, s: &Self::State) -> bool;
    /// Appends the transitions out of `s`, in action order. Terminal states
    /// produce none.
    fn successors(&self, s: &Self::State, out: &mut Vec<Transition<Self::State>>);
    fn key(&self, s: &Self::State) -> String;
}

/// The grid world as a transition model. States are stored with a zero step
/// counter so that identical configurations share a vertex.
pub struct GridModel<'a> {
    pub spec: &'a MapSpec,
}

impl TransitionModel for GridModel<'_> {
    type State = WorldState;

    fn initial_states(&self) -> Vec<WorldState> {
        self.spec.initial_states()
    }

    fn is_goal(&self, s: &WorldState) -> bool {
        s.all_exited()
    }

    fn successors(&self, s: &WorldState, out: &mut Vec<Transition<WorldState>>) {
        for a in self.spec.available_actions(s) {
            let mut step = self.spec.step_unchecked(s, &a, None);
            step.next_state.step_count = 0;
            out.push(Transition {
                action: a.to_string(),
                next: step.next_state,
                reward: step.reward,
            });
        }
    }

    fn key(&self, s: &WorldState) -> String {
        s.canonical_key()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub action: String,
    pub dst: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedGraph {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeRecord>,
    pub initial: Vec<usize>,
    pub goals: Vec<usize>,
    pub base_reward: f64,
}

/// A graph together with the typed states behind its vertices.
#[derive(Debug, Clone)]
pub struct Enumeration<S> {
    pub graph: InducedGraph,
    pub states: Vec<S>,
}

/// Breadth-first closure of `model` from its initial states.
pub fn enumerate_model<M: TransitionModel>(
    model: &M,
    state_cap: usize,
    base_reward: f64,
) -> Result<Enumeration<M::State>, GraphError> {
    let mut ids: HashMap<M::State, usize> = HashMap::new();
    let mut states: Vec<M::State> = Vec::new();
    let mut initial = Vec::new();
    let mut intern = |s: M::State, states: &mut Vec<M::State>| -> Result<usize, GraphError> {
        if let Some(&id) = ids.get(&s) {
            return Ok(id);
        }
        if states.len() >= state_cap {
            return Err(GraphError::StateCapExceeded {
                cap: state_cap,
                discovered: states.len(),
                frontier: 0,
            });
        }
        let id = states.len();
        ids.insert(s.clone(), id);
        states.push(s);
        Ok(id)
    };
    for s in model.initial_states() {
        let id = intern(s, &mut states)?;
        if !initial.contains(&id) {
            initial.push(id);
        }
    }
    let mut edges = Vec::new();
    let mut goals = Vec::new();
    let mut queue: VecDeque<usize> = (0..states.len()).collect();
    let mut buf = Vec::new();
    while let Some(v) = queue.pop_front() {
        if model.is_goal(&states[v]) {
            goals.push(v);
            continue;
        }
        buf.clear();
        model.successors(&states[v], &mut buf);
        for t in buf.drain(..) {
            let before = states.len();
            let dst = intern(t.next, &mut states).map_err(|e| match e {
                GraphError::StateCapExceeded {
                    cap, discovered, ..
                } => GraphError::StateCapExceeded {
                    cap,
                    discovered,
                    frontier: queue.len() + 1,
                },
                other => other,
            })?;
            if states.len() > before {
                queue.push_back(dst);
            }
            edges.push(EdgeRecord {
                src: v,
                action: t.action,
                dst,
                w: t.reward,
            });
        }
    }
    goals.sort_unstable();
    let vertices = states.iter().map(|s| model.key(s)).collect();
    Ok(Enumeration {
        graph: InducedGraph {
            vertices,
            edges,
            initial,
            goals,
            base_reward,
        },
        states,
    })
}

/// Enumerates the graph induced by a map with base reward 0.
pub fn enumerate_graph(spec: &MapSpec, state_cap: usize) -> Result<InducedGraph, GraphError> {
    enumerate_model(&GridModel { spec }, state_cap, 0.0).map(|e| e.graph)
}

impl InducedGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    /// Parses and validates a graph dump.
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let g: InducedGraph =
            serde_json::from_str(text).map_err(|e| GraphError::Invalid(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.vertices.len();
        let bad = |msg: String| Err(GraphError::Invalid(msg));
        if !self.base_reward.is_finite() {
            return bad("base reward is not finite".into());
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return bad(format!("edge {i} references a missing vertex"));
            }
            if !e.w.is_finite() {
                return bad(format!("edge {i} has a non-finite weight"));
            }
        }
        if let Some(&v) = self.initial.iter().chain(&self.goals).find(|&&v| v >= n) {
            return bad(format!("vertex {v} does not exist"));
        }
        let goal = self.goal_mask();
        if let Some(e) = self.edges.iter().find(|e| goal[e.src]) {
            return bad(format!("goal vertex {} has an outgoing edge", e.src));
        }
        Ok(())
    }

    pub fn goal_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for &g in &self.goals {
            mask[g] = true;
        }
        mask
    }

    /// Outgoing edge indices per vertex.
    pub fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.src].push(i);
        }
        out
    }

    /// Copy of the graph without the listed edges.
    pub fn without_edges(&self, removed: &[usize]) -> InducedGraph {
        let mut drop = vec![false; self.edges.len()];
        for &i in removed {
            drop[i] = true;
        }
        let edges = self
            .edges
            .iter()
            .zip(&drop)
            .filter(|(_, &d)| !d)
            .map(|(e, _)| e.clone())
            .collect();
        InducedGraph {
            edges,
            ..self.clone()
        }
    }

    fn reachable_from_initial(&self) -> Vec<bool> {
        let out = self.out_edges();
        let mut seen = vec![false; self.vertices.len()];
        let mut stack: Vec<usize> = self.initial.clone();
        for &v in &stack {
            seen[v] = true;
        }
        while let Some(v) = stack.pop() {
            for &e in &out[v] {
                let d = self.edges[e].dst;
                if !seen[d] {
                    seen[d] = true;
                    stack.push(d);
                }
            }
        }
        seen
    }
}

/// `|E+| / |E|` kept as exact counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Density {
    pub rewarded: usize,
    pub total: usize,
}

impl Density {
    pub fn value(&self) -> f64 {
        self.rewarded as f64 / self.total as f64
    }

    /// The fraction in lowest terms.
    pub fn reduced(&self) -> (usize, usize) {
        let (mut a, mut b) = (self.rewarded, self.total);
        while b != 0 {
            (a, b) = (b, a % b);
        }
        (self.rewarded / a.max(1), self.total / a.max(1))
    }

    /// Exact comparison by cross-multiplication.
    pub fn less_than(&self, other: &Density) -> bool {
        (self.rewarded as u128) * (other.total as u128)
            < (other.rewarded as u128) * (self.total as u128)
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.rewarded, self.total)
    }
}

pub fn reward_density(g: &InducedGraph) -> Result<Density, GraphError> {
    if g.edges.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let rewarded = g.edges.iter().filter(|e| e.w > g.base_reward).count();
    Ok(Density {
        rewarded,
        total: g.edges.len(),
    })
}

/// True iff `0 < density < threshold`.
pub fn is_sparse(g: &InducedGraph, threshold: f64) -> bool {
    match reward_density(g) {
        Ok(d) => d.rewarded > 0 && d.value() < threshold,
        Err(_) => false,
    }
}

pub fn has_winning_walk(g: &InducedGraph) -> bool {
    let seen = g.reachable_from_initial();
    g.goals.iter().any(|&v| seen[v])
}

/// A minimum directed start-to-goal cut-set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutReport {
    pub cut_edges: Vec<EdgeRecord>,
    /// Indices of `cut_edges` in the graph's edge list.
    pub cut_edge_ids: Vec<usize>,
    pub cut_size: usize,
    /// Sorted vertex ids on the start side of the cut.
    pub source_side: Vec<usize>,
    pub is_zid: bool,
    pub max_cut_weight: f64,
}

impl CutReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cut serializes")
    }

    /// Builds the report for the partition whose start side is `source`.
    pub fn from_partition(g: &InducedGraph, source: &[bool]) -> CutReport {
        let cut_edge_ids: Vec<usize> = (0..g.edges.len())
            .filter(|&i| source[g.edges[i].src] && !source[g.edges[i].dst])
            .collect();
        let cut_edges: Vec<EdgeRecord> = cut_edge_ids.iter().map(|&i| g.edges[i].clone()).collect();
        let max_cut_weight = cut_edges
            .iter()
            .map(|e| e.w)
            .fold(f64::NEG_INFINITY, f64::max);
        CutReport {
            cut_size: cut_edges.len(),
            is_zid: max_cut_weight <= g.base_reward,
            max_cut_weight,
            cut_edges,
            cut_edge_ids,
            source_side: (0..source.len()).filter(|&v| source[v]).collect(),
        }
    }
}

fn check_analyzable(g: &InducedGraph) -> Result<(), GraphError> {
    if g.initial.is_empty() {
        return Err(GraphError::NoInitialStates);
    }
    let goal = g.goal_mask();
    if let Some(&v) = g.initial.iter().find(|&&v| goal[v]) {
        return Err(GraphError::InitialIsGoal(v));
    }
    if !has_winning_walk(g) {
        return Err(GraphError::NoWinningWalk);
    }
    Ok(())
}

/// Minimum-cardinality directed cut separating every initial vertex from every
/// goal vertex. Each edge has unit capacity; the returned cut is the one whose
/// start side is the residual-reachable set after a maximum flow.
pub fn min_cut_ssb(g: &InducedGraph) -> Result<CutReport, GraphError> {
    check_analyzable(g)?;
    let n = g.vertices.len();
    let (source, sink) = (n, n + 1);
    let unbounded = g.edges.len() as i64 + 1;
    let mut net = FlowNetwork::new(n + 2);
    for &v in &g.initial {
        net.add_arc(source, v, unbounded);
    }
    for &v in &g.goals {
        net.add_arc(v, sink, unbounded);
    }
    for e in &g.edges {
        if e.src != e.dst {
            net.add_arc(e.src, e.dst, 1);
        }
    }
    let flow = net.max_flow(source, sink);
    let reach = net.residual_reachable(source);
    let report = CutReport::from_partition(g, &reach[..n]);
    debug_assert_eq!(report.cut_size as i64, flow);
    Ok(report)
}

/// Every minimum cut, by exhaustive search over partitions. Only for graphs
/// with at most `vertex_budget` vertices outside the initial and goal sets.
pub fn all_min_cuts(g: &InducedGraph, vertex_budget: usize) -> Result<Vec<CutReport>, GraphError> {
    check_analyzable(g)?;
    let goal = g.goal_mask();
    let mut fixed = vec![false; g.vertices.len()];
    for &v in &g.initial {
        fixed[v] = true;
    }
    let free: Vec<usize> = (0..g.vertices.len())
        .filter(|&v| !fixed[v] && !goal[v])
        .collect();
    if free.len() > vertex_budget || free.len() >= 63 {
        return Err(GraphError::Invalid(format!(
            "{} free vertices exceed the exhaustive budget of {vertex_budget}",
            free.len()
        )));
    }
    let mut best = usize::MAX;
    let mut sides: Vec<Vec<bool>> = Vec::new();
    for mask in 0u64..(1u64 << free.len()) {
        let mut side = fixed.clone();
        for (bit, &v) in free.iter().enumerate() {
            side[v] = mask >> bit & 1 == 1;
        }
        let size = g
            .edges
            .iter()
            .filter(|e| side[e.src] && !side[e.dst])
            .count();
        if size < best {
            best = size;
            sides.clear();
        }
        if size == best {
            sides.push(side);
        }
    }
    let mut reports: Vec<CutReport> = Vec::new();
    for side in sides {
        let r = CutReport::from_partition(g, &side);
        if !reports.iter().any(|o| o.cut_edge_ids == r.cut_edge_ids) {
            reports.push(r);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::parse_map;

    fn graph(
        edges: &[(usize, usize, f64)],
        n: usize,
        initial: &[usize],
        goals: &[usize],
    ) -> InducedGraph {
        InducedGraph {
            vertices: (0..n).map(|i| format!("v{i}")).collect(),
            edges: edges
                .iter()
                .map(|&(s, d, w)| EdgeRecord {
                    src: s,
                    action: "a".into(),
                    dst: d,
                    w,
                })
                .collect(),
            initial: initial.to_vec(),
            goals: goals.to_vec(),
            base_reward: 0.0,
        }
    }

    #[test]
    fn corridor_hand_enumeration() {
        // (0) -E-> (1), (0) -Stay-> (0), (1) -W-> (0), (1) -Stay-> (1), (1) -E-> exit
        let spec = parse_map("S0 . X").unwrap();
        let g = enumerate_graph(&spec, 100).unwrap();
        assert_eq!(g.vertices.len(), 3);
        assert_eq!(g.edges.len(), 5);
        assert_eq!(g.goals.len(), 1);
        let d = reward_density(&g).unwrap();
        assert_eq!((d.rewarded, d.total), (1, 5));
        let labels: Vec<(usize, &str, usize)> = g
            .edges
            .iter()
            .map(|e| (e.src, e.action.as_str(), e.dst))
            .collect();
        assert_eq!(
            labels,
            vec![
                (0, "E", 1),
                (0, "Stay", 0),
                (1, "E", 2),
                (1, "W", 0),
                (1, "Stay", 1)
            ]
        );
    }

    #[test]
    fn state_cap_guard() {
        let spec = parse_map("S0 S1 S2 S3 .\n. . . . .\n. . . . .\nX X X X .").unwrap();
        assert!(matches!(
            enumerate_graph(&spec, 10),
            Err(GraphError::StateCapExceeded { cap: 10, .. })
        ));
    }

    #[test]
    fn density_edge_cases() {
        let g = graph(&[(0, 1, 0.0)], 2, &[0], &[1]);
        assert_eq!(reward_density(&g).unwrap().value(), 0.0);
        assert!(!is_sparse(&g, 0.05));
        let g = graph(&[(0, 1, 1.0)], 2, &[0], &[1]);
        assert!(!is_sparse(&g, 0.05));
        assert_eq!(
            reward_density(&graph(&[], 1, &[0], &[])),
            Err(GraphError::EmptyGraph)
        );
        let d = Density {
            rewarded: 6,
            total: 202,
        };
        assert_eq!(d.reduced(), (3, 101));
        assert!(Density {
            rewarded: 3,
            total: 101
        }
        .less_than(&Density {
            rewarded: 3,
            total: 100
        }));
    }

    #[test]
    fn single_edge_cut() {
        let g = graph(&[(0, 1, 0.0)], 2, &[0], &[1]);
        let cut = min_cut_ssb(&g).unwrap();
        assert_eq!(cut.cut_size, 1);
        assert_eq!(cut.cut_edge_ids, vec![0]);
        assert!(cut.is_zid);
        assert!(!has_winning_walk(&g.without_edges(&cut.cut_edge_ids)));
    }

    #[test]
    fn cut_errors() {
        let g = graph(&[(0, 0, 0.0)], 2, &[0], &[1]);
        assert_eq!(min_cut_ssb(&g), Err(GraphError::NoWinningWalk));
        let g = graph(&[], 2, &[], &[1]);
        assert_eq!(min_cut_ssb(&g), Err(GraphError::NoInitialStates));
        let g = graph(&[], 1, &[0], &[0]);
        assert_eq!(min_cut_ssb(&g), Err(GraphError::InitialIsGoal(0)));
        assert!(!has_winning_walk(&graph(&[(0, 1, 0.0)], 2, &[0], &[])));
    }

    #[test]
    fn rewarded_cut_is_not_zid() {
        let g = graph(
            &[(0, 1, 0.0), (1, 2, 1.0), (0, 2, 0.0), (2, 3, 1.0)],
            4,
            &[0],
            &[3],
        );
        let cut = min_cut_ssb(&g).unwrap();
        assert_eq!(cut.cut_size, 1);
        assert_eq!(cut.cut_edge_ids, vec![3]);
        assert!(!cut.is_zid);
        assert_eq!(cut.max_cut_weight, 1.0);
    }

    #[test]
    fn exhaustive_mode_finds_every_minimum() {
        // two sequential single-edge bottlenecks
        let g = graph(&[(0, 1, 0.0), (1, 2, 0.0), (2, 3, 1.0)], 4, &[0], &[3]);
        let cuts = all_min_cuts(&g, 10).unwrap();
        assert_eq!(cuts.len(), 3);
        assert!(cuts.iter().all(|c| c.cut_size == 1));
        assert_eq!(min_cut_ssb(&g).unwrap().cut_edge_ids, vec![0]);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let spec = parse_map("S0 . X").unwrap();
        let g = enumerate_graph(&spec, 100).unwrap();
        assert_eq!(InducedGraph::from_json(&g.to_json()).unwrap(), g);
        let mut broken = g.clone();
        broken.edges[0].dst = 99;
        assert!(matches!(
            InducedGraph::from_json(&broken.to_json()),
            Err(GraphError::Invalid(_))
        ));
        let mut goal_out = g.clone();
        goal_out.edges.push(EdgeRecord {
            src: 2,
            action: "W".into(),
            dst: 1,
            w: 0.0,
        });
        assert!(InducedGraph::from_json(&goal_out.to_json()).is_err());
        assert!(InducedGraph::from_json("{").is_err());
    }
}
