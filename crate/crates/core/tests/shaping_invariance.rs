use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zidlab::gridworld::MapSpec;
use zidlab::mdpgraph::{enumerate_model, EdgeRecord, InducedGraph};
use zidlab::shaping::{shape_graph, AugmentedModel, ShapingConfig};
use zidlab::tabular::value_iteration;

fn greedy_labels(g: &InducedGraph, gamma: f64) -> HashMap<String, BTreeSet<String>> {
    let vi = value_iteration(g, gamma, 1e-10).unwrap();
    vi.greedy
        .iter()
        .enumerate()
        .map(|(v, edges)| {
            (
                g.vertices[v].clone(),
                edges.iter().map(|&e| g.edges[e].action.clone()).collect(),
            )
        })
        .collect()
}

#[test]
fn augmented_two_laser_argmax_is_unchanged_by_shaping() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../maps/two_lasers.map");
    let spec = MapSpec::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
    let gamma = 0.95;
    for d in 0..=4 {
        let plain = enumerate_model(
            &AugmentedModel {
                spec: &spec,
                d,
                shaping: None,
            },
            2_000_000,
            0.0,
        )
        .unwrap()
        .graph;
        let cfg = ShapingConfig::new(d, gamma).unwrap();
        let shaped = enumerate_model(
            &AugmentedModel {
                spec: &spec,
                d,
                shaping: Some(cfg),
            },
            2_000_000,
            0.0,
        )
        .unwrap()
        .graph;
        assert_eq!(plain.vertices, shaped.vertices);
        let (a, b) = (greedy_labels(&plain, gamma), greedy_labels(&shaped, gamma));
        let differing = a.iter().filter(|(k, v)| b[*k] != **v).count();
        assert_eq!(
            differing, 0,
            "d = {d}: {differing} states changed their greedy set"
        );
    }
}

fn random_graph(rng: &mut ChaCha8Rng) -> InducedGraph {
    let n = rng.gen_range(2..12);
    let mut edges = Vec::new();
    for v in 0..n - 1 {
        for k in 0..rng.gen_range(1..4) {
            edges.push(EdgeRecord {
                src: v,
                action: format!("a{k}"),
                dst: rng.gen_range(0..n),
                w: f64::from(rng.gen_range(-2..3)) * 0.5,
            });
        }
    }
    InducedGraph {
        vertices: (0..n).map(|i| format!("v{i}")).collect(),
        edges,
        initial: vec![0],
        goals: vec![n - 1],
        base_reward: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn potential_shaping_preserves_greedy_sets(seed in any::<u64>(), gamma in 0.5f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng);
        let phi: Vec<f64> = (0..g.vertices.len()).map(|_| f64::from(rng.gen_range(-4..5))).collect();
        let shaped = shape_graph(&g, &phi, gamma);
        let plain = value_iteration(&g, gamma, 1e-12).unwrap();
        let after = value_iteration(&shaped, gamma, 1e-12).unwrap();
        prop_assert_eq!(plain.greedy, after.greedy);
        let out = g.out_edges();
        for v in 0..g.vertices.len() {
            let p = if out[v].is_empty() { 0.0 } else { phi[v] };
            prop_assert!((after.values[v] - (plain.values[v] - p)).abs() < 1e-6);
        }
    }
}
