//! Exact value iteration on induced graphs and joint-action tabular
//! Q-learning on the grid world.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{JointAction, MapSpec, WorldState};
use crate::mdpgraph::InducedGraph;
use crate::seeding::stream_rng;
use crate::shaping::{CrossingCounters, ShapedEnv, ShapingConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TabularError {
    #[error("value iteration produced a non-finite value")]
    NonFinite,
    #[error("gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    /// Action value of every edge, in edge order.
    pub q: Vec<f64>,
    /// Per vertex, the edges whose value ties the maximum.
    pub greedy: Vec<Vec<usize>>,
    pub sweeps: usize,
}

/// Bellman optimality sweeps until the sup-norm change drops below
/// `tolerance`. Vertices without out-edges are terminal with value 0.
pub fn value_iteration(
    g: &InducedGraph,
    gamma: f64,
    tolerance: f64,
) -> Result<ValueIteration, TabularError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(TabularError::InvalidGamma(gamma));
    }
    if g.edges.iter().any(|e| !e.w.is_finite()) {
        return Err(TabularError::NonFinite);
    }
    let out = g.out_edges();
    let mut values = vec![0.0; g.vertices.len()];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        for v in 0..values.len() {
            if out[v].is_empty() {
                continue;
            }
            let best = out[v]
                .iter()
                .map(|&e| g.edges[e].w + gamma * values[g.edges[e].dst])
                .fold(f64::NEG_INFINITY, f64::max);
            if !best.is_finite() {
                return Err(TabularError::NonFinite);
            }
            delta = delta.max((best - values[v]).abs());
            values[v] = best;
        }
        if delta < tolerance {
            break;
        }
    }
    let q: Vec<f64> = g
        .edges
        .iter()
        .map(|e| e.w + gamma * values[e.dst])
        .collect();
    // Values are only accurate to about tolerance / (1 - gamma).
    let tie = (100.0 * tolerance / (1.0 - gamma)).max(1e-9);
    let greedy = out
        .iter()
        .map(|edges| {
            let best = edges
                .iter()
                .map(|&e| q[e])
                .fold(f64::NEG_INFINITY, f64::max);
            edges
                .iter()
                .copied()
                .filter(|&e| q[e] >= best - tie)
                .collect()
        })
        .collect();
    Ok(ValueIteration {
        values,
        q,
        greedy,
        sweeps,
    })
}

/// Action values keyed by compact state bytes, one row of `5^n` joint actions
/// per state. Missing rows read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    index: HashMap<Vec<u8>, usize>,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn new(n_agents: usize) -> Self {
        QTable {
            n_actions: JointAction::count(n_agents),
            index: HashMap::new(),
            values: Vec::new(),
            visits: Vec::new(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn row(&self, key: &[u8]) -> Option<&[f64]> {
        self.index
            .get(key)
            .map(|&i| &self.values[i * self.n_actions..(i + 1) * self.n_actions])
    }

    pub fn get(&self, key: &[u8], action: usize) -> f64 {
        self.row(key).map_or(0.0, |r| r[action])
    }

    fn slot(&mut self, key: &[u8]) -> usize {
        if let Some(&i) = self.index.get(key) {
            return i;
        }
        let i = self.index.len();
        self.index.insert(key.to_vec(), i);
        self.values.resize(self.values.len() + self.n_actions, 0.0);
        self.visits.resize(self.visits.len() + self.n_actions, 0);
        i
    }

    /// Moves `Q(key, action)` a step of size `lr` towards `target`.
    pub fn update(&mut self, key: &[u8], action: usize, target: f64, lr: f64) {
        let i = self.slot(key) * self.n_actions + action;
        self.values[i] += lr * (target - self.values[i]);
        self.visits[i] += 1;
    }

    pub fn visits(&self, key: &[u8], action: usize) -> u64 {
        self.index
            .get(key)
            .map_or(0, |&i| self.visits[i * self.n_actions + action])
    }

    /// Best available action, ties broken by the lowest joint index.
    pub fn greedy(&self, key: &[u8], available: &[JointAction]) -> (usize, f64) {
        let row = self.row(key);
        let mut best = (0, f64::NEG_INFINITY);
        for (k, a) in available.iter().enumerate() {
            let v = row.map_or(0.0, |r| r[a.index()]);
            if v > best.1 {
                best = (k, v);
            }
        }
        best
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnSchedule {
    pub total_steps: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_steps: u64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub eval_interval: u64,
    pub eval_episodes: u32,
    pub horizon: u32,
    /// Append the capped crossing counters to the learner's state key when
    /// shaping is on. Without them the delayed reward is not Markov in the key.
    #[serde(default = "default_true")]
    pub observe_counters: bool,
}

fn default_true() -> bool {
    true
}

impl Default for LearnSchedule {
    fn default() -> Self {
        LearnSchedule {
            total_steps: 300_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_anneal_steps: 100_000,
            gamma: 0.95,
            learning_rate: 0.1,
            eval_interval: 10_000,
            eval_episodes: 100,
            horizon: 28,
            observe_counters: true,
        }
    }
}

impl LearnSchedule {
    pub fn epsilon(&self, step: u64) -> f64 {
        if step >= self.eps_anneal_steps {
            return self.eps_end;
        }
        let frac = step as f64 / self.eps_anneal_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub train_step: u64,
    pub exit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Mean exit rate over the evaluation points.
    pub fn auc(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.exit_rate).sum::<f64>() / self.points.len() as f64
    }

    pub fn final_rate(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.exit_rate)
    }

    /// First evaluation step at which the exit rate reached `level`.
    pub fn steps_to(&self, level: f64) -> Option<u64> {
        self.points
            .iter()
            .find(|p| p.exit_rate >= level)
            .map(|p| p.train_step)
    }
}

/// The learner's view of a state: the world key, plus the capped crossing
/// counters when shaping is on.
pub fn learner_key(
    state: &WorldState,
    counters: &CrossingCounters,
    shaping: Option<&ShapingConfig>,
    out: &mut Vec<u8>,
) {
    out.clear();
    state.write_key(out);
    if let Some(cfg) = shaping {
        let cap = i64::from(cfg.d) + 1;
        out.extend(counters.entries().iter().map(|&c| c.min(cap) as i8 as u8));
    }
}

/// Runs `episodes` greedy episodes from sampled initial states and returns
/// the fraction in which every agent exited.
pub fn greedy_eval(
    q: &QTable,
    spec: &MapSpec,
    shaping: Option<&ShapingConfig>,
    observe_counters: bool,
    episodes: u32,
    horizon: u32,
    seed: u64,
) -> f64 {
    if episodes == 0 {
        return 0.0;
    }
    let cfg = shaping.copied().unwrap_or_default();
    let observed = shaping.filter(|_| observe_counters);
    let mut env = ShapedEnv::new(spec, cfg, horizon);
    let mut rng = stream_rng(seed, 0);
    let mut key = Vec::new();
    let mut exits = 0;
    for _ in 0..episodes {
        env.reset(&mut rng);
        loop {
            let actions = spec.available_actions(env.state());
            learner_key(env.state(), env.counters(), observed, &mut key);
            let (k, _) = q.greedy(&key, &actions);
            let out = env
                .step(&actions[k])
                .expect("greedy picks an available action");
            if out.base.terminal || out.base.truncated {
                if out.base.next_state.all_exited() {
                    exits += 1;
                }
                break;
            }
        }
    }
    f64::from(exits) / f64::from(episodes)
}

/// Epsilon-greedy one-step Q-learning over joint actions. Truncated steps
/// bootstrap from the next state; terminal steps do not. Every
/// `eval_interval` steps the greedy policy is evaluated.
pub fn q_learning(
    spec: &MapSpec,
    shaping: Option<&ShapingConfig>,
    schedule: &LearnSchedule,
    seed: u64,
) -> (QTable, LearningCurve) {
    let cfg = shaping.copied().unwrap_or_default();
    let observed = shaping.filter(|_| schedule.observe_counters);
    let mut env = ShapedEnv::new(spec, cfg, schedule.horizon);
    let mut q = QTable::new(spec.n_agents);
    let mut curve = LearningCurve::default();
    let mut rng = stream_rng(seed, 0);
    let (mut key, mut next_key) = (Vec::new(), Vec::new());
    let mut evals = 0u64;

    env.reset(&mut rng);
    let mut actions = spec.available_actions(env.state());
    for step in 0..schedule.total_steps {
        learner_key(env.state(), env.counters(), observed, &mut key);
        let k = if rng.gen::<f64>() < schedule.epsilon(step) {
            rng.gen_range(0..actions.len())
        } else {
            q.greedy(&key, &actions).0
        };
        let a = actions[k].index();
        let out = env
            .step(&actions[k])
            .expect("learner picks an available action");
        let reward = if shaping.is_some() {
            out.shaped_reward
        } else {
            out.base.reward
        };
        let target = if out.base.terminal {
            reward
        } else {
            let next_actions = spec.available_actions(&out.base.next_state);
            learner_key(env.state(), env.counters(), observed, &mut next_key);
            let best = q.greedy(&next_key, &next_actions).1;
            actions = next_actions;
            reward + schedule.gamma * best
        };
        q.update(&key, a, target, schedule.learning_rate);
        if out.base.terminal || out.base.truncated {
            env.reset(&mut rng);
            actions = spec.available_actions(env.state());
        }
        if schedule.eval_interval > 0 && (step + 1) % schedule.eval_interval == 0 {
            evals += 1;
            let eval_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(evals);
            let rate = greedy_eval(
                &q,
                spec,
                shaping,
                schedule.observe_counters,
                schedule.eval_episodes,
                schedule.horizon,
                eval_seed,
            );
            curve.points.push(CurvePoint {
                train_step: step + 1,
                exit_rate: rate,
            });
        }
    }
    (q, curve)
}
