//! Potential-based reward shaping with a delayed crossing potential.
//!
//! Each (agent, laser) pair carries a counter that starts at −1 and, once the
//! agent first enters the laser's beam, counts the steps since then. The
//! potential is minus the number of pairs whose counter is still at most `d`,
//! so a crossing pays +1 (undiscounted) exactly `d + 1` transitions later.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::gridworld::{Crossing, JointAction, MapSpec, StepError, StepOutcome, WorldState};
use crate::mdpgraph::{InducedGraph, Transition, TransitionModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapingError {
    #[error("gamma must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("bad shaping config: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingConfig {
    pub d: u32,
    pub gamma: f64,
    /// Use `r + γφ(s) − φ(s')` instead of the invariance-preserving form.
    #[serde(default)]
    pub strict_paper_sign: bool,
    #[serde(default = "yes")]
    pub flush_on_truncation: bool,
}

fn yes() -> bool {
    true
}

impl Default for ShapingConfig {
    fn default() -> Self {
        ShapingConfig {
            d: 0,
            gamma: 0.95,
            strict_paper_sign: false,
            flush_on_truncation: true,
        }
    }
}

impl ShapingConfig {
    pub fn new(d: u32, gamma: f64) -> Result<Self, ShapingError> {
        let cfg = ShapingConfig {
            d,
            gamma,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ShapingError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ShapingError::InvalidGamma(self.gamma));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ShapingError> {
        let cfg: ShapingConfig =
            serde_json::from_str(text).map_err(|e| ShapingError::Json(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Combines a base reward with the two potentials.
    pub fn shape(&self, reward: f64, before: f64, after: f64) -> f64 {
        if self.strict_paper_sign {
            reward + self.gamma * before - after
        } else {
            reward + self.gamma * after - before
        }
    }
}

/// Row-major `n_agents × n_lasers` matrix of crossing counters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrossingCounters {
    n_lasers: usize,
    entries: SmallVec<[i64; 8]>,
}

impl CrossingCounters {
    pub fn new(n_agents: usize, n_lasers: usize) -> Self {
        CrossingCounters {
            n_lasers,
            entries: SmallVec::from_elem(-1, n_agents * n_lasers),
        }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let n_lasers = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == n_lasers),
            "ragged counter rows"
        );
        CrossingCounters {
            n_lasers,
            entries: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.entries.len().checked_div(self.n_lasers).unwrap_or(0)
    }

    pub fn n_lasers(&self) -> usize {
        self.n_lasers
    }

    pub fn get(&self, agent: usize, laser: usize) -> i64 {
        self.entries[agent * self.n_lasers + laser]
    }

    pub fn row(&self, agent: usize) -> &[i64] {
        &self.entries[agent * self.n_lasers..(agent + 1) * self.n_lasers]
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn reset(&mut self) {
        self.entries.iter_mut().for_each(|c| *c = -1);
    }

    /// Ages every started counter by one step, then starts the counters of
    /// first-time crossings at 0.
    pub fn advance(&mut self, crossings: &[Crossing]) {
        for c in self.entries.iter_mut().filter(|c| **c >= 0) {
            *c += 1;
        }
        for x in crossings {
            let c = &mut self.entries[x.agent * self.n_lasers + x.laser];
            if *c < 0 {
                *c = 0;
            }
        }
    }

    /// Entries clamped to `d + 1`; beyond that value the potential no longer
    /// changes, so the clamped matrix is a sufficient statistic.
    pub fn capped(&self, d: u32) -> CrossingCounters {
        let cap = i64::from(d) + 1;
        CrossingCounters {
            n_lasers: self.n_lasers,
            entries: self.entries.iter().map(|&c| c.min(cap)).collect(),
        }
    }
}

pub fn delayed_potential(c: &CrossingCounters, d: u32) -> f64 {
    -(c.entries.iter().filter(|&&x| x <= i64::from(d)).count() as f64)
}

pub fn update_counters(c: &CrossingCounters, crossings: &[Crossing]) -> CrossingCounters {
    let mut next = c.clone();
    next.advance(crossings);
    next
}

/// Potential used when an episode is cut off at the horizon: only pairs that
/// were never crossed still count, so pending bonuses are paid out.
pub fn truncation_flush(c: &CrossingCounters) -> f64 {
    -(c.entries.iter().filter(|&&x| x < 0).count() as f64)
}

/// Appends `agent`'s counter row, capped at `d + 1`, to a state key.
pub fn augment_observation(key: &str, c: &CrossingCounters, agent: usize, d: u32) -> String {
    let mut out = format!("{key}|c=");
    push_row(
        &mut out,
        &c.capped(d).entries[agent * c.n_lasers..(agent + 1) * c.n_lasers],
    );
    out
}

/// Appends every agent's capped row, for learners acting on the joint state.
pub fn augment_joint(key: &str, c: &CrossingCounters, d: u32) -> String {
    let capped = c.capped(d);
    let mut out = format!("{key}|c=");
    for agent in 0..c.n_agents() {
        if agent > 0 {
            out.push('/');
        }
        push_row(&mut out, capped.row(agent));
    }
    out
}

fn push_row(out: &mut String, row: &[i64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v}").unwrap();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedStep {
    pub base: StepOutcome,
    pub shaped_reward: f64,
    pub potential_before: f64,
    pub potential_after: f64,
}

impl ShapedStep {
    /// Change in potential over this transition. A positive value is a
    /// released bonus pulse.
    pub fn potential_delta(&self) -> f64 {
        self.potential_after - self.potential_before
    }
}

/// Potential of the state an outcome leads to. When the episode ends here,
/// by termination or at the horizon, the flush potential releases pending
/// bonuses (if configured).
fn potential_after(outcome: &StepOutcome, counters: &CrossingCounters, cfg: &ShapingConfig) -> f64 {
    if (outcome.terminal || outcome.truncated) && cfg.flush_on_truncation {
        truncation_flush(counters)
    } else {
        delayed_potential(counters, cfg.d)
    }
}

pub fn shaped_step(
    spec: &MapSpec,
    state: &WorldState,
    action: &JointAction,
    horizon: Option<u32>,
    counters: &CrossingCounters,
    cfg: &ShapingConfig,
) -> Result<(ShapedStep, CrossingCounters), StepError> {
    let before = delayed_potential(counters, cfg.d);
    let base = spec.step(state, action, horizon)?;
    let next = update_counters(counters, &base.crossings);
    let after = potential_after(&base, &next, cfg);
    let shaped_reward = cfg.shape(base.reward, before, after);
    Ok((
        ShapedStep {
            base,
            shaped_reward,
            potential_before: before,
            potential_after: after,
        },
        next,
    ))
}

/// An episode driver that owns the world state and the crossing counters.
#[derive(Debug, Clone)]
pub struct ShapedEnv<'a> {
    pub spec: &'a MapSpec,
    pub cfg: ShapingConfig,
    pub horizon: u32,
    state: WorldState,
    counters: CrossingCounters,
}

impl<'a> ShapedEnv<'a> {
    pub fn new(spec: &'a MapSpec, cfg: ShapingConfig, horizon: u32) -> Self {
        let state = spec
            .initial_states()
            .into_iter()
            .next()
            .expect("map has an initial state");
        let counters = CrossingCounters::new(spec.n_agents, spec.lasers.len());
        ShapedEnv {
            spec,
            cfg,
            horizon,
            state,
            counters,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &WorldState {
        let s = self.spec.sample_initial_state(rng);
        self.reset_to(s)
    }

    pub fn reset_to(&mut self, state: WorldState) -> &WorldState {
        self.state = state;
        self.counters.reset();
        &self.state
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn counters(&self) -> &CrossingCounters {
        &self.counters
    }

    pub fn step(&mut self, action: &JointAction) -> Result<ShapedStep, StepError> {
        let (out, counters) = shaped_step(
            self.spec,
            &self.state,
            action,
            Some(self.horizon),
            &self.counters,
            &self.cfg,
        )?;
        self.state = out.base.next_state.clone();
        self.counters = counters;
        Ok(out)
    }
}

/// The grid world extended with capped crossing counters. With `shaping`
/// set, edge weights carry the shaped reward; without it they carry the base
/// reward. Both produce the same vertices and edges in the same order.
///
/// Edges into terminal states use zero potential. This equals treating a
/// terminal state as absorbing and shaping its self-loop forever, which is
/// the setting where shaping leaves optimal actions unchanged.
pub struct AugmentedModel<'a> {
    pub spec: &'a MapSpec,
    pub d: u32,
    pub shaping: Option<ShapingConfig>,
}

impl TransitionModel for AugmentedModel<'_> {
    type State = (WorldState, CrossingCounters);

    fn initial_states(&self) -> Vec<Self::State> {
        let c = CrossingCounters::new(self.spec.n_agents, self.spec.lasers.len());
        self.spec
            .initial_states()
            .into_iter()
            .map(|s| (s, c.clone()))
            .collect()
    }

    fn is_goal(&self, s: &Self::State) -> bool {
        s.0.all_exited()
    }

    fn successors(&self, s: &Self::State, out: &mut Vec<Transition<Self::State>>) {
        let (world, counters) = s;
        let before = delayed_potential(counters, self.d);
        for a in self.spec.available_actions(world) {
            let mut step = self.spec.step_unchecked(world, &a, None);
            step.next_state.step_count = 0;
            let next = update_counters(counters, &step.crossings).capped(self.d);
            let reward = match &self.shaping {
                Some(cfg) => {
                    let after = if step.terminal {
                        0.0
                    } else {
                        delayed_potential(&next, self.d)
                    };
                    cfg.shape(step.reward, before, after)
                }
                None => step.reward,
            };
            out.push(Transition {
                action: a.to_string(),
                next: (step.next_state, next),
                reward,
            });
        }
    }

    fn key(&self, s: &Self::State) -> String {
        augment_joint(&s.0.canonical_key(), &s.1, self.d)
    }
}

/// The grid world where each agent's first entry into each laser's beam pays
/// `bonus` on top of the base reward. States remember which pairs have
/// already been paid.
pub struct CrossingRewardModel<'a> {
    pub spec: &'a MapSpec,
    pub bonus: f64,
}

impl TransitionModel for CrossingRewardModel<'_> {
    type State = (WorldState, u64);

    fn initial_states(&self) -> Vec<Self::State> {
        self.spec
            .initial_states()
            .into_iter()
            .map(|s| (s, 0))
            .collect()
    }

    fn is_goal(&self, s: &Self::State) -> bool {
        s.0.all_exited()
    }

    fn successors(&self, s: &Self::State, out: &mut Vec<Transition<Self::State>>) {
        let n_lasers = self.spec.lasers.len();
        for a in self.spec.available_actions(&s.0) {
            let mut step = self.spec.step_unchecked(&s.0, &a, None);
            step.next_state.step_count = 0;
            let mut paid = s.1;
            let mut reward = step.reward;
            for x in &step.crossings {
                let bit = 1u64 << (x.agent * n_lasers + x.laser);
                if paid & bit == 0 {
                    paid |= bit;
                    reward += self.bonus;
                }
            }
            out.push(Transition {
                action: a.to_string(),
                next: (step.next_state, paid),
                reward,
            });
        }
    }

    fn key(&self, s: &Self::State) -> String {
        format!("{}|paid={:b}", s.0.canonical_key(), s.1)
    }
}

/// Reweights a graph with `w + γφ(dst) − φ(src)`, treating vertices without
/// out-edges as zero-potential terminals.
pub fn shape_graph(g: &InducedGraph, potential: &[f64], gamma: f64) -> InducedGraph {
    assert_eq!(potential.len(), g.vertices.len());
    let out = g.out_edges();
    let phi = |v: usize| if out[v].is_empty() { 0.0 } else { potential[v] };
    let mut shaped = g.clone();
    for e in &mut shaped.edges {
        e.w += gamma * phi(e.dst) - phi(e.src);
    }
    shaped
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{parse_map, Move};

    fn cross(agent: usize, laser: usize) -> Crossing {
        Crossing { agent, laser }
    }

    #[test]
    fn potential_examples() {
        assert_eq!(delayed_potential(&CrossingCounters::new(2, 2), 3), -4.0);
        let c = CrossingCounters::from_rows(&[vec![3, -1], vec![-1, -1]]);
        assert_eq!(delayed_potential(&c, 2), -3.0);
        let c = CrossingCounters::from_rows(&[vec![5, 6]]);
        assert_eq!(delayed_potential(&c, 4), 0.0);
    }

    #[test]
    fn counters_start_once_and_keep_ageing() {
        let c = CrossingCounters::from_rows(&[vec![-1, -1]]);
        let c = update_counters(&c, &[cross(0, 1)]);
        assert_eq!(c.row(0), &[-1, 0]);
        let c = update_counters(&update_counters(&c, &[]), &[cross(0, 1)]);
        assert_eq!(c.row(0), &[-1, 2]);
        assert_eq!(
            update_counters(&CrossingCounters::from_rows(&[vec![0]]), &[]).row(0),
            &[1]
        );
    }

    #[test]
    fn flush_counts_only_uncrossed_pairs() {
        assert_eq!(
            truncation_flush(&CrossingCounters::from_rows(&[vec![1]])),
            0.0
        );
        assert_eq!(
            truncation_flush(&CrossingCounters::from_rows(&[vec![-1]])),
            -1.0
        );
        assert_eq!(
            truncation_flush(&CrossingCounters::from_rows(&[vec![9, -1]])),
            -1.0
        );
    }

    #[test]
    fn observation_rows_are_capped() {
        let c = CrossingCounters::from_rows(&[vec![-1, 7], vec![0, 0]]);
        assert_eq!(augment_observation("k", &c, 0, 2), "k|c=-1,3");
        assert_eq!(augment_joint("k", &c, 2), "k|c=-1,3/0,0");
        let fresh = CrossingCounters::new(2, 2);
        assert_eq!(
            augment_observation("k", &fresh, 1, 0),
            augment_observation("k", &fresh, 1, 4)
        );
    }

    #[test]
    fn config_json() {
        let cfg = ShapingConfig::from_json(r#"{"d":3,"gamma":0.9}"#).unwrap();
        assert_eq!(
            cfg,
            ShapingConfig {
                d: 3,
                gamma: 0.9,
                strict_paper_sign: false,
                flush_on_truncation: true
            }
        );
        assert_eq!(ShapingConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert!(matches!(
            ShapingConfig::from_json(r#"{"d":1,"gamma":0}"#),
            Err(ShapingError::InvalidGamma(_))
        ));
        assert!(matches!(
            ShapingConfig::from_json(r#"{"d":1,"gamma":0.5,"x":1}"#),
            Err(ShapingError::Json(_))
        ));
    }

    fn corridor() -> MapSpec {
        // the beam of laser 0 runs down column 1; the agent crosses it on its
        // first step east
        parse_map("@ L0S @ @ @ @ @\nS0 . . . . . X").unwrap()
    }

    #[test]
    fn pulse_lands_d_plus_one_after_crossing() {
        let spec = corridor();
        for d in 0..4 {
            let cfg = ShapingConfig::new(d, 0.95).unwrap();
            let mut env = ShapedEnv::new(&spec, cfg, 50);
            let e = JointAction::new(&[Move::East]);
            let stay = JointAction::new(&[Move::Stay]);
            let first = env.step(&e).unwrap();
            assert_eq!(first.base.crossings.len(), 1);
            assert_eq!(first.potential_delta(), 0.0);
            let e2 = env.step(&e).unwrap();
            for k in 2..=d + 1 {
                let s = env.step(&stay).unwrap();
                assert_eq!(
                    s.potential_delta(),
                    if k == d + 1 { 1.0 } else { 0.0 },
                    "d={d} k={k}"
                );
            }
            if d == 0 {
                assert_eq!(e2.potential_delta(), 1.0);
                assert!((e2.shaped_reward - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_releases_pending_pulse() {
        let spec = corridor();
        let cfg = ShapingConfig::new(4, 0.95).unwrap();
        let mut env = ShapedEnv::new(&spec, cfg, 2);
        env.step(&JointAction::new(&[Move::East])).unwrap();
        let last = env.step(&JointAction::new(&[Move::Stay])).unwrap();
        assert!(last.base.truncated);
        assert_eq!(last.potential_delta(), 1.0);

        let cfg = ShapingConfig {
            flush_on_truncation: false,
            ..cfg
        };
        let mut env = ShapedEnv::new(&spec, cfg, 2);
        env.step(&JointAction::new(&[Move::East])).unwrap();
        let last = env.step(&JointAction::new(&[Move::Stay])).unwrap();
        assert_eq!(last.potential_delta(), 0.0);
    }

    #[test]
    fn no_lasers_means_no_shaping() {
        let spec = parse_map("S0 . X").unwrap();
        let mut env = ShapedEnv::new(&spec, ShapingConfig::new(2, 0.9).unwrap(), 10);
        for _ in 0..2 {
            let s = env.step(&JointAction::new(&[Move::East])).unwrap();
            assert_eq!(s.shaped_reward, s.base.reward);
        }
    }

    #[test]
    fn strict_sign_flips_the_potentials() {
        let cfg = ShapingConfig {
            strict_paper_sign: true,
            ..ShapingConfig::new(0, 0.5).unwrap()
        };
        assert_eq!(cfg.shape(0.0, -1.0, 0.0), -0.5);
        let cfg = ShapingConfig::new(0, 0.5).unwrap();
        assert_eq!(cfg.shape(0.0, -1.0, 0.0), 1.0);
    }

    #[test]
    fn augmented_variants_share_structure() {
        let spec = corridor();
        let plain = crate::mdpgraph::enumerate_model(
            &AugmentedModel {
                spec: &spec,
                d: 2,
                shaping: None,
            },
            10_000,
            0.0,
        )
        .unwrap()
        .graph;
        let cfg = ShapingConfig::new(2, 0.95).unwrap();
        let shaped = crate::mdpgraph::enumerate_model(
            &AugmentedModel {
                spec: &spec,
                d: 2,
                shaping: Some(cfg),
            },
            10_000,
            0.0,
        )
        .unwrap()
        .graph;
        assert_eq!(plain.vertices, shaped.vertices);
        assert_eq!(plain.edges.len(), shaped.edges.len());
        assert!(plain
            .edges
            .iter()
            .zip(&shaped.edges)
            .all(|(a, b)| (a.src, a.dst) == (b.src, b.dst)));
        assert!(plain.vertices.len() > 7);
    }
}
