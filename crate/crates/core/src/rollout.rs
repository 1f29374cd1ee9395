//! Uniform random exploration and the exact exit-probability oracle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gridworld::MapSpec;
use crate::mdpgraph::InducedGraph;
use crate::seeding::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationStats {
    pub map: String,
    pub horizon: u32,
    pub seed: u64,
    pub total_steps: u64,
    pub episodes: u64,
    pub exits: u64,
    pub deaths: u64,
    pub truncations: u64,
    pub exit_rate: f64,
}

/// Runs whole episodes under the uniform policy over available joint actions
/// until at least `step_budget` steps have been taken. The last episode is
/// always finished, so `total_steps < step_budget + horizon`.
pub fn random_explore(
    spec: &MapSpec,
    horizon: u32,
    step_budget: u64,
    seed: u64,
) -> ExplorationStats {
    assert!(horizon > 0, "horizon must be positive");
    let mut stats = ExplorationStats {
        map: String::new(),
        horizon,
        seed,
        total_steps: 0,
        episodes: 0,
        exits: 0,
        deaths: 0,
        truncations: 0,
        exit_rate: 0.0,
    };
    while stats.total_steps < step_budget {
        let mut rng = stream_rng(seed, stats.episodes);
        let mut state = spec.sample_initial_state(&mut rng);
        loop {
            let actions = spec.available_actions(&state);
            let a = &actions[rng.gen_range(0..actions.len())];
            let out = spec.step_unchecked(&state, a, Some(horizon));
            stats.total_steps += 1;
            if out.terminal {
                if out.next_state.all_exited() {
                    stats.exits += 1;
                } else {
                    stats.deaths += 1;
                }
                break;
            }
            if out.truncated {
                stats.truncations += 1;
                break;
            }
            state = out.next_state;
        }
        stats.episodes += 1;
    }
    stats.exit_rate = stats.exits as f64 / stats.episodes as f64;
    stats
}

/// `probabilities[h]` is the chance that a uniform random walk started
/// uniformly in `S0` enters a goal within `h` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitProbabilityTable {
    pub probabilities: Vec<f64>,
}

impl ExitProbabilityTable {
    pub fn at(&self, horizon: u32) -> f64 {
        self.probabilities[horizon as usize]
    }
}

/// Forward dynamic programming over (vertex, time). Goal vertices absorb and
/// count as exits; other vertices without out-edges (deaths) absorb silently.
/// Every out-edge of a vertex is drawn with equal probability.
pub fn exact_exit_probability(g: &InducedGraph, max_horizon: u32) -> ExitProbabilityTable {
    let mut probabilities = vec![0.0; max_horizon as usize + 1];
    if g.initial.is_empty() || max_horizon == 0 {
        return ExitProbabilityTable { probabilities };
    }
    let out = g.out_edges();
    let goal = g.goal_mask();
    let mut mass = vec![0.0; g.vertices.len()];
    for &v in &g.initial {
        mass[v] += 1.0 / g.initial.len() as f64;
    }
    let mut exited = 0.0;
    let mut next = vec![0.0; mass.len()];
    for slot in probabilities.iter_mut().skip(1) {
        next.iter_mut().for_each(|m| *m = 0.0);
        for (v, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            if out[v].is_empty() {
                next[v] += m;
                continue;
            }
            let share = m / out[v].len() as f64;
            for &e in &out[v] {
                let d = g.edges[e].dst;
                if goal[d] {
                    exited += share;
                } else {
                    next[d] += share;
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
        *slot = exited;
    }
    ExitProbabilityTable { probabilities }
}
