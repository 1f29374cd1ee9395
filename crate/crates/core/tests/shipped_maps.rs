use std::path::PathBuf;

use zidlab::discovery::{run_discovery, DiscoveryConfig};
use zidlab::gridworld::{MapSpec, Pos};
use zidlab::mdpgraph::{enumerate_graph, min_cut_ssb, reward_density};
use zidlab::rollout::exact_exit_probability;

fn load(name: &str) -> MapSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../maps")
        .join(name);
    MapSpec::parse(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn density_map_has_three_rewarded_edges_out_of_101() {
    let g = enumerate_graph(&load("density.map"), 10_000).unwrap();
    let d = reward_density(&g).unwrap();
    assert_eq!((d.rewarded, d.total), (3, 101));
    // hand count: 9 centre tiles with 5 moves, 11 border tiles with 4, 4 corners with 3
    assert_eq!(9 * 5 + 11 * 4 + 4 * 3, 101);
}

#[test]
fn variants_lose_one_edge_each_and_get_harder() {
    let base = load("density_variants.map");
    let g0 = enumerate_graph(&base, 10_000).unwrap();
    assert_eq!(g0.vertices.len(), 25);
    let mut previous: Option<(zidlab::mdpgraph::Density, Vec<f64>)> = None;
    for n in 0..=4 {
        let g = enumerate_graph(&base.variant(n), 10_000).unwrap();
        let d = reward_density(&g).unwrap();
        assert_eq!((d.rewarded, d.total), (3, 101 - n), "variant {n}");
        let table = exact_exit_probability(&g, 14);
        let p: Vec<f64> = [12, 13, 14].iter().map(|&h| table.at(h)).collect();
        if let Some((prev_d, prev_p)) = &previous {
            assert!(prev_d.less_than(&d));
            for (a, b) in prev_p.iter().zip(&p) {
                assert!(b < a, "variant {n}: {b} !< {a}");
            }
        }
        previous = Some((d, p));
    }
}

#[test]
fn two_laser_maps_classify() {
    let g = enumerate_graph(&load("two_lasers.map"), 100_000).unwrap();
    let cut = min_cut_ssb(&g).unwrap();
    assert_eq!(cut.cut_size, 4);
    assert!(cut.is_zid);
    assert!(cut.cut_edges.iter().all(|e| e.w == 0.0));

    let g = enumerate_graph(&load("rewarded_lasers.map"), 100_000).unwrap();
    let cut = min_cut_ssb(&g).unwrap();
    assert!(!cut.is_zid);
    assert_eq!(cut.max_cut_weight, 1.0);

    let g = enumerate_graph(&load("delay.map"), 100_000).unwrap();
    assert!(min_cut_ssb(&g).unwrap().is_zid);
}

#[test]
fn single_agent_finds_the_doorway() {
    let spec = load("doorway.map");
    let door = Pos::new(4, 4);
    for seed in 0..3 {
        let r = run_discovery(&spec, &DiscoveryConfig::new(100_000, 100, seed)).unwrap();
        assert_eq!(r.scores.rank(door), 1, "seed {seed}");
        assert_eq!(r.scores.top(), door);
    }
}
