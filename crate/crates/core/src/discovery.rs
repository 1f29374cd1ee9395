//! Bottleneck discovery by repeated spectral bisection of the explored graph.
//!
//! Random episodes are merged into an undirected graph of visited states.
//! Every few episodes the largest connected component is split along the
//! sign of its Fiedler vector, each edge crossing the split gains one point,
//! and edge points are projected onto grid cells through the agents'
//! positions.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{MapSpec, Pos, Positions, WorldState};
use crate::seeding::stream_rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscoveryError {
    #[error("component has {0} vertices; at least 4 are needed")]
    TooSmall(usize),
    #[error("eigensolver stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EdgeWeighting {
    #[default]
    Unit,
    /// Weight an edge by how many times it was observed.
    VisitCount,
}

/// Undirected graph of visited joint states.
#[derive(Debug, Clone, Default)]
pub struct LocalGraph {
    index: HashMap<Vec<u8>, u32>,
    positions: Vec<Positions>,
    adjacency: Vec<Vec<(u32, u32)>>,
    edges: Vec<(u32, u32)>,
    edge_ids: HashMap<(u32, u32), u32>,
    edge_visits: Vec<u32>,
}

impl LocalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph over `n` anonymous vertices, for testing the clustering.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = LocalGraph::new();
        for i in 0..n {
            g.intern(&(i as u64).to_le_bytes(), Positions::new());
        }
        for &(u, v) in edges {
            g.connect(u as u32, v as u32);
        }
        g
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, in insertion order.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn positions(&self, v: u32) -> &[Pos] {
        &self.positions[v as usize]
    }

    pub fn neighbours(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency[v as usize].iter().map(|&(u, _)| u)
    }

    fn intern(&mut self, key: &[u8], positions: Positions) -> u32 {
        if let Some(&id) = self.index.get(key) {
            return id;
        }
        let id = self.positions.len() as u32;
        self.index.insert(key.to_vec(), id);
        self.positions.push(positions);
        self.adjacency.push(Vec::new());
        id
    }

    pub fn add_state(&mut self, s: &WorldState) -> u32 {
        let mut key = Vec::with_capacity(16);
        s.write_key(&mut key);
        self.intern(&key, s.positions.clone())
    }

    fn connect(&mut self, a: u32, b: u32) {
        if a == b {
            return;
        }
        let pair = (a.min(b), a.max(b));
        if let Some(&e) = self.edge_ids.get(&pair) {
            self.edge_visits[e as usize] += 1;
            return;
        }
        let e = self.edges.len() as u32;
        self.edges.push(pair);
        self.edge_ids.insert(pair, e);
        self.edge_visits.push(1);
        self.adjacency[a as usize].push((b, e));
        self.adjacency[b as usize].push((a, e));
    }

    /// Vertices of the largest connected component in ascending order; ties
    /// go to the component holding the lowest vertex id.
    pub fn largest_component(&self) -> Vec<u32> {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        let mut best: Vec<u32> = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start as u32);
            let mut comp = Vec::new();
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for u in self.neighbours(v) {
                    if !seen[u as usize] {
                        seen[u as usize] = true;
                        queue.push_back(u);
                    }
                }
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
        best.sort_unstable();
        best
    }
}

/// Merges one episode, given as consecutive `(from, to)` state pairs.
pub fn accumulate(graph: &mut LocalGraph, episode: &[(WorldState, WorldState)]) {
    for (from, to) in episode {
        let a = graph.add_state(from);
        let b = graph.add_state(to);
        graph.connect(a, b);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub weighting: EdgeWeighting,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: 10_000,
            weighting: EdgeWeighting::Unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    /// Component vertices, ascending.
    pub vertices: Vec<u32>,
    /// `side[i]` is the half that `vertices[i]` falls in.
    pub side: Vec<bool>,
    pub lambda2: f64,
    pub fiedler: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl Bisection {
    /// Edges of `graph` with endpoints on different sides.
    pub fn crossing_edges(&self, graph: &LocalGraph) -> Vec<u32> {
        let mut local = vec![None; graph.vertex_count()];
        for (i, &v) in self.vertices.iter().enumerate() {
            local[v as usize] = Some(self.side[i]);
        }
        (0..graph.edges.len() as u32)
            .filter(|&e| {
                let (u, v) = graph.edges[e as usize];
                matches!((local[u as usize], local[v as usize]), (Some(a), Some(b)) if a != b)
            })
            .collect()
    }
}

/// Symmetric normalized adjacency `D^-1/2 A D^-1/2` of one component.
struct NormalizedAdjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    sqrt_degree: Vec<f64>,
}

impl NormalizedAdjacency {
    fn new(graph: &LocalGraph, vertices: &[u32], weighting: EdgeWeighting) -> Self {
        let mut local = HashMap::with_capacity(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            local.insert(v, i);
        }
        let weight = |e: u32| match weighting {
            EdgeWeighting::Unit => 1.0,
            EdgeWeighting::VisitCount => f64::from(graph.edge_visits[e as usize]),
        };
        let mut offsets = Vec::with_capacity(vertices.len() + 1);
        let mut targets = Vec::new();
        let mut raw = Vec::new();
        let mut degree = Vec::with_capacity(vertices.len());
        offsets.push(0);
        for &v in vertices {
            let mut d = 0.0;
            for &(u, e) in &graph.adjacency[v as usize] {
                if let Some(&j) = local.get(&u) {
                    targets.push(j);
                    raw.push(weight(e));
                    d += weight(e);
                }
            }
            degree.push(d);
            offsets.push(targets.len());
        }
        let sqrt_degree: Vec<f64> = degree.iter().map(|d| d.sqrt()).collect();
        let mut weights = raw;
        for i in 0..vertices.len() {
            for k in offsets[i]..offsets[i + 1] {
                weights[k] /= sqrt_degree[i] * sqrt_degree[targets[k]];
            }
        }
        NormalizedAdjacency {
            offsets,
            targets,
            weights,
            sqrt_degree,
        }
    }

    /// `out = L_sym x = x - N x`.
    fn laplacian(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let mut acc = 0.0;
            for k in self.offsets[i]..self.offsets[i + 1] {
                acc += self.weights[k] * x[self.targets[k]];
            }
            out[i] = x[i] - acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn project_out(x: &mut [f64], unit: &[f64]) {
    let c = dot(x, unit);
    x.iter_mut().zip(unit).for_each(|(xi, ui)| *xi -= c * ui);
}

/// Conjugate gradients for `L y = b` on the complement of the trivial
/// eigenvector, where `L` is positive definite for a connected graph.
fn solve_deflated(
    op: &NormalizedAdjacency,
    trivial: &[f64],
    b: &[f64],
    y: &mut [f64],
    rel_tol: f64,
) {
    let n = b.len();
    let mut r = b.to_vec();
    let mut ly = vec![0.0; n];
    op.laplacian(y, &mut ly);
    r.iter_mut().zip(&ly).for_each(|(ri, li)| *ri -= li);
    project_out(&mut r, trivial);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = (rel_tol * norm(b)).powi(2);
    let mut lp = vec![0.0; n];
    for k in 0..(20 * n + 200) {
        if rr <= target {
            break;
        }
        op.laplacian(&p, &mut lp);
        let alpha = rr / dot(&p, &lp);
        y.iter_mut().zip(&p).for_each(|(yi, pi)| *yi += alpha * pi);
        r.iter_mut().zip(&lp).for_each(|(ri, li)| *ri -= alpha * li);
        if k % 50 == 49 {
            project_out(&mut r, trivial);
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        p.iter_mut()
            .zip(&r)
            .for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    project_out(y, trivial);
}

/// Splits the largest component of `graph` by the signs of the Fiedler
/// vector of its symmetric normalized Laplacian. `warm` holds a previous
/// Fiedler estimate indexed by global vertex id; new vertices start at 0.
pub fn spectral_bisect(
    graph: &LocalGraph,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<Bisection, DiscoveryError> {
    let vertices = graph.largest_component();
    let n = vertices.len();
    if n < 4 {
        return Err(DiscoveryError::TooSmall(n));
    }
    let op = NormalizedAdjacency::new(graph, &vertices, cfg.weighting);
    let scale = norm(&op.sqrt_degree);
    let trivial: Vec<f64> = op.sqrt_degree.iter().map(|d| d / scale).collect();

    let mut x: Vec<f64> = match warm {
        Some(w) => vertices
            .iter()
            .map(|&v| w.get(v as usize).copied().unwrap_or(0.0))
            .collect(),
        None => Vec::new(),
    };
    project_out_or_seed(&mut x, &trivial, n);

    let mut lx = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut lambda = 0.0;
    for it in 0..=cfg.max_iterations {
        op.laplacian(&x, &mut lx);
        lambda = dot(&x, &lx);
        residual = lx
            .iter()
            .zip(&x)
            .map(|(l, xi)| (l - lambda * xi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual < cfg.tolerance {
            let side = split(&x);
            return Ok(Bisection {
                vertices,
                side,
                lambda2: lambda,
                fiedler: x,
                residual,
                iterations: it,
            });
        }
        if it == cfg.max_iterations {
            break;
        }
        y.copy_from_slice(&x);
        y.iter_mut().for_each(|v| *v /= lambda.max(1e-300));
        solve_deflated(
            &op,
            &trivial,
            &x,
            &mut y,
            (0.1 * residual).clamp(1e-12, 1e-2),
        );
        let ny = norm(&y);
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / ny);
    }
    let _ = lambda;
    Err(DiscoveryError::NoConvergence {
        iterations: cfg.max_iterations,
        residual,
    })
}

fn project_out_or_seed(x: &mut Vec<f64>, trivial: &[f64], n: usize) {
    if x.len() == n {
        project_out(x, trivial);
        let nx = norm(x);
        if nx > 1e-8 {
            x.iter_mut().for_each(|v| *v /= nx);
            return;
        }
    }
    // deterministic, irregular start with a component along every eigenvector
    // in practice
    *x = (0..n)
        .map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5)
        .collect();
    project_out(x, trivial);
    let nx = norm(x);
    x.iter_mut().for_each(|v| *v /= nx);
}

/// Sign split; if every entry has the same sign, the upper half by value
/// (ties by position) forms one side.
fn split(x: &[f64]) -> Vec<bool> {
    let side: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    if side.iter().any(|&s| s) && side.iter().any(|&s| !s) {
        return side;
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut side = vec![false; x.len()];
    for &i in &order[x.len() / 2..] {
        side[i] = true;
    }
    side
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckScores {
    pub width: usize,
    pub height: usize,
    /// Times each edge `(u, v)`, `u < v`, crossed a bisection.
    pub edge_scores: BTreeMap<(u32, u32), u64>,
    /// Row-major grid of projected state scores.
    pub vertex_scores: Vec<f64>,
}

impl BottleneckScores {
    pub fn new(width: usize, height: usize) -> Self {
        BottleneckScores {
            width,
            height,
            edge_scores: BTreeMap::new(),
            vertex_scores: vec![0.0; width * height],
        }
    }

    pub fn at(&self, p: Pos) -> f64 {
        self.vertex_scores[p.y * self.width + p.x]
    }

    /// Competition rank: one plus the number of cells scoring strictly more.
    pub fn rank(&self, p: Pos) -> usize {
        let s = self.at(p);
        1 + self.vertex_scores.iter().filter(|&&v| v > s).count()
    }

    /// Highest-scoring cell; ties go to the first in row-major order.
    pub fn top(&self) -> Pos {
        let mut best = 0;
        for (i, &v) in self.vertex_scores.iter().enumerate() {
            if v > self.vertex_scores[best] {
                best = i;
            }
        }
        Pos::new(best % self.width, best / self.width)
    }

    /// Score of every state: the sum of the scores of its incident edges.
    pub fn state_scores(&self, n_vertices: usize) -> Vec<u64> {
        let mut out = vec![0; n_vertices];
        for (&(u, v), &s) in &self.edge_scores {
            out[u as usize] += s;
            out[v as usize] += s;
        }
        out
    }

    /// Rebuilds `vertex_scores` from `edge_scores`.
    pub fn project(&mut self, graph: &LocalGraph) {
        self.vertex_scores.iter_mut().for_each(|v| *v = 0.0);
        for (s, score) in self
            .state_scores(graph.vertex_count())
            .into_iter()
            .enumerate()
        {
            for p in graph.positions(s as u32) {
                self.vertex_scores[p.y * self.width + p.x] += score as f64;
            }
        }
    }
}

/// Credits every edge that crosses `partition` and updates the grid scores.
/// Each credited edge adds one to the score of both endpoint states, and so
/// one per agent position of each endpoint.
pub fn score_and_project(partition: &Bisection, graph: &LocalGraph, scores: &mut BottleneckScores) {
    for e in partition.crossing_edges(graph) {
        let (u, v) = graph.edges[e as usize];
        *scores.edge_scores.entry((u, v)).or_insert(0) += 1;
        for s in [u, v] {
            for p in graph.positions(s) {
                scores.vertex_scores[p.y * scores.width + p.x] += 1.0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub total_steps: u64,
    pub cluster_interval: usize,
    pub horizon: u32,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl DiscoveryConfig {
    pub fn new(total_steps: u64, horizon: u32, seed: u64) -> Self {
        DiscoveryConfig {
            total_steps,
            cluster_interval: 5,
            horizon,
            seed,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub scores: BottleneckScores,
    pub n_agents: usize,
    pub episodes: u64,
    pub total_steps: u64,
    pub graph_vertices: usize,
    pub graph_edges: usize,
    pub clusterings: usize,
    /// Clustering rounds skipped because the component was still too small.
    pub skipped: usize,
    /// Outer eigensolver iterations summed over all rounds.
    pub solver_iterations: usize,
    pub cluster_seconds: Vec<f64>,
}

impl DiscoveryReport {
    pub fn total_cluster_seconds(&self) -> f64 {
        self.cluster_seconds.iter().sum()
    }
}

/// Random exploration interleaved with clustering every `cluster_interval`
/// episodes. Results are deterministic for a seed; only the timings vary.
pub fn run_discovery(
    spec: &MapSpec,
    cfg: &DiscoveryConfig,
) -> Result<DiscoveryReport, DiscoveryError> {
    let mut graph = LocalGraph::new();
    let mut scores = BottleneckScores::new(spec.width, spec.height);
    let mut report = DiscoveryReport {
        scores: BottleneckScores::new(spec.width, spec.height),
        n_agents: spec.n_agents,
        episodes: 0,
        total_steps: 0,
        graph_vertices: 0,
        graph_edges: 0,
        clusterings: 0,
        skipped: 0,
        solver_iterations: 0,
        cluster_seconds: Vec::new(),
    };
    let mut warm: Vec<f64> = Vec::new();
    let mut episode = Vec::new();
    while report.total_steps < cfg.total_steps {
        let mut rng = stream_rng(cfg.seed, report.episodes);
        let mut state = spec.sample_initial_state(&mut rng);
        episode.clear();
        loop {
            let actions = spec.available_actions(&state);
            let a = &actions[rng.gen_range(0..actions.len())];
            let out = spec.step_unchecked(&state, a, Some(cfg.horizon));
            report.total_steps += 1;
            let done = out.terminal || out.truncated;
            let from = std::mem::replace(&mut state, out.next_state);
            episode.push((from, state.clone()));
            if done {
                break;
            }
        }
        accumulate(&mut graph, &episode);
        report.episodes += 1;
        if !report.episodes.is_multiple_of(cfg.cluster_interval as u64) {
            continue;
        }
        let started = Instant::now();
        let result = spectral_bisect(&graph, &cfg.solver, Some(&warm));
        match result {
            Ok(part) => {
                score_and_project(&part, &graph, &mut scores);
                warm.resize(graph.vertex_count(), 0.0);
                for (i, &v) in part.vertices.iter().enumerate() {
                    warm[v as usize] = part.fiedler[i];
                }
                report.cluster_seconds.push(started.elapsed().as_secs_f64());
                report.clusterings += 1;
                report.solver_iterations += part.iterations;
            }
            Err(DiscoveryError::TooSmall(_)) => report.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    report.graph_vertices = graph.vertex_count();
    report.graph_edges = graph.edge_count();
    report.scores = scores;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> LocalGraph {
        LocalGraph::from_edges(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>())
    }

    #[test]
    fn accumulate_one_transition() {
        let mut g = LocalGraph::new();
        let a = WorldState::new(&[Pos::new(0, 0)]);
        let b = WorldState::new(&[Pos::new(1, 0)]);
        accumulate(&mut g, &[(a.clone(), b.clone())]);
        assert_eq!((g.vertex_count(), g.edge_count()), (2, 1));
        accumulate(&mut g, &[(b.clone(), a.clone()), (a.clone(), a)]);
        assert_eq!((g.vertex_count(), g.edge_count()), (2, 1));
    }

    #[test]
    fn largest_component_wins() {
        let g = LocalGraph::from_edges(7, &[(0, 1), (2, 3), (3, 4), (4, 5)]);
        assert_eq!(g.largest_component(), vec![2, 3, 4, 5]);
        let g = LocalGraph::from_edges(4, &[(2, 3), (0, 1)]);
        assert_eq!(g.largest_component(), vec![0, 1]);
    }

    #[test]
    fn path_of_four_splits_in_the_middle() {
        let b = spectral_bisect(&path(4), &SolverConfig::default(), None).unwrap();
        assert_eq!(b.side[0], b.side[1]);
        assert_eq!(b.side[2], b.side[3]);
        assert_ne!(b.side[0], b.side[2]);
        // eigenvalues of the normalized Laplacian of P4 are 1 - cos(k pi / 3)
        assert!((b.lambda2 - 0.5).abs() < 1e-8);
        assert!(b.residual < 1e-8);
    }

    #[test]
    fn barbell_is_cut_at_the_bridge() {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in i + 1..4 {
                    edges.push((base + i, base + j));
                }
            }
        }
        edges.push((3, 4));
        let g = LocalGraph::from_edges(8, &edges);
        let b = spectral_bisect(&g, &SolverConfig::default(), None).unwrap();
        let bridge = g.edges().iter().position(|&e| e == (3, 4)).unwrap() as u32;
        assert_eq!(b.crossing_edges(&g), vec![bridge]);
    }

    #[test]
    fn too_small_and_warm_start() {
        assert_eq!(
            spectral_bisect(&path(3), &SolverConfig::default(), None),
            Err(DiscoveryError::TooSmall(3))
        );
        let g = path(30);
        let cold = spectral_bisect(&g, &SolverConfig::default(), None).unwrap();
        let warm = spectral_bisect(&g, &SolverConfig::default(), Some(&cold.fiedler)).unwrap();
        assert_eq!(warm.iterations, 0);
        assert!((warm.lambda2 - cold.lambda2).abs() < 1e-10);
    }

    #[test]
    fn constant_sign_falls_back_to_median() {
        assert_eq!(split(&[0.3, 0.1, 0.2, 0.4]), vec![true, false, false, true]);
        assert_eq!(split(&[-1.0, 2.0]), vec![false, true]);
    }

    #[test]
    fn projection_counts_every_agent() {
        let mut g = LocalGraph::new();
        let s = |a: (usize, usize), b: (usize, usize)| {
            WorldState::new(&[Pos::new(a.0, a.1), Pos::new(b.0, b.1)])
        };
        accumulate(&mut g, &[(s((1, 1), (4, 2)), s((0, 0), (4, 2)))]);
        let part = Bisection {
            vertices: vec![0, 1],
            side: vec![false, true],
            lambda2: 0.0,
            fiedler: vec![0.0, 0.0],
            residual: 0.0,
            iterations: 0,
        };
        let mut scores = BottleneckScores::new(5, 3);
        score_and_project(&part, &g, &mut scores);
        assert_eq!(scores.at(Pos::new(1, 1)), 1.0);
        assert_eq!(scores.at(Pos::new(0, 0)), 1.0);
        assert_eq!(scores.at(Pos::new(4, 2)), 2.0);
        let incremental = scores.vertex_scores.clone();
        scores.project(&g);
        assert_eq!(scores.vertex_scores, incremental);
        assert_eq!(scores.rank(Pos::new(4, 2)), 1);
        assert_eq!(scores.rank(Pos::new(0, 0)), 2);
        assert_eq!(scores.top(), Pos::new(4, 2));
    }
}
