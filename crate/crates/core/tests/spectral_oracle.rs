use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zidlab::discovery::{spectral_bisect, LocalGraph, SolverConfig};

/// Dense eigen-decomposition of the symmetric normalized Laplacian; returns
/// the two smallest eigenvalues ascending and the eigenvector of the second.
fn dense_fiedler(n: usize, edges: &[(usize, usize)]) -> (f64, f64, f64, Vec<f64>) {
    let mut a = DMatrix::<f64>::zeros(n, n);
    for &(u, v) in edges {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let mut l = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                l[(i, j)] -= a[(i, j)] / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    let eig = SymmetricEigen::new(l.clone());
    // pair each column with its own Rayleigh quotient; the returned
    // eigenvalue order does not always follow the columns
    let values: Vec<f64> = eig
        .eigenvectors
        .column_iter()
        .map(|c| c.dot(&(&l * c)))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let v = eig.eigenvectors.column(order[1]).iter().copied().collect();
    (values[order[0]], values[order[1]], values[order[2]], v)
}

fn sign_sides(v: &[f64]) -> Vec<bool> {
    v.iter().map(|&x| x > 0.0).collect()
}

fn same_or_mirror(a: &[bool], b: &[bool]) -> bool {
    a == b || a.iter().zip(b).all(|(x, y)| x != y)
}

fn check(n: usize, edges: &[(usize, usize)], check_partition: bool) {
    let g = LocalGraph::from_edges(n, edges);
    let cfg = SolverConfig::default();
    let b = spectral_bisect(&g, &cfg, None).expect("solver converges");
    assert_eq!(b.vertices.len(), n, "graph must be connected");
    assert!(b.residual < cfg.tolerance);
    let (_, l2, _, v) = dense_fiedler(n, edges);
    assert!(
        (b.lambda2 - l2).abs() < 1e-6,
        "lambda2 {} vs oracle {l2}",
        b.lambda2
    );
    assert!(b.side.iter().any(|&s| s) && b.side.iter().any(|&s| !s));
    if check_partition {
        assert!(
            same_or_mirror(&b.side, &sign_sides(&v)),
            "partition differs from the oracle on {edges:?}"
        );
    }
}

#[test]
fn path_of_four() {
    check(4, &[(0, 1), (1, 2), (2, 3)], true);
    let b = spectral_bisect(
        &LocalGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]),
        &SolverConfig::default(),
        None,
    )
    .unwrap();
    assert!(same_or_mirror(&b.side, &[false, false, true, true]));
}

#[test]
fn barbell_matches_brute_force_normalized_cut() {
    let mut edges = Vec::new();
    for base in [0, 4] {
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.push((3, 4));
    check(8, &edges, true);
    // every balanced-or-not split scored by normalized cut; the best one is the bridge
    let deg = |v: usize| edges.iter().filter(|&&(a, b)| a == v || b == v).count() as f64;
    let mut best = (f64::INFINITY, 0u32);
    for mask in 1u32..(1 << 8) - 1 {
        let inside = |v: usize| mask >> v & 1 == 1;
        let cut = edges
            .iter()
            .filter(|&&(a, b)| inside(a) != inside(b))
            .count() as f64;
        let vol_a: f64 = (0..8).filter(|&v| inside(v)).map(deg).sum();
        let vol_b: f64 = (0..8).filter(|&v| !inside(v)).map(deg).sum();
        let ncut = cut / vol_a + cut / vol_b;
        if ncut < best.0 {
            best = (ncut, mask);
        }
    }
    let oracle: Vec<bool> = (0..8).map(|v| best.1 >> v & 1 == 1).collect();
    let b = spectral_bisect(
        &LocalGraph::from_edges(8, &edges),
        &SolverConfig::default(),
        None,
    )
    .unwrap();
    assert!(same_or_mirror(&b.side, &oracle));
}

fn random_connected(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    let extra = rng.gen_range(0..2 * n);
    for _ in 0..extra {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b
            && !edges.contains(&(a.min(b), a.max(b)))
            && !edges.contains(&(a.max(b), a.min(b)))
        {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges
}

#[test]
fn fifty_random_graphs_match_dense_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let n = rng.gen_range(4..=200);
        let edges = random_connected(&mut rng, n);
        let (_, l2, l3, v) = dense_fiedler(n, &edges);
        // the sign pattern is only defined when the eigenvalue is simple and
        // no entry sits at zero
        let well_posed = l3 - l2 > 1e-3 && v.iter().all(|x| x.abs() > 1e-4);
        check(n, &edges, well_posed);
    }
}
