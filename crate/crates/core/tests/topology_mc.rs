use annealnet::topology::{BaseGraph, GraphModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mc_mean(model: &GraphModel, m: usize, seed: u64) -> nalgebra::DMatrix<f64> {
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = nalgebra::DMatrix::<f64>::zeros(n, n);
    for _ in 0..m {
        acc += model.sample(&mut rng).matrix();
    }
    acc / m as f64
}

/// Entrywise `4 sigma` band: off-diagonals are single Bernoulli edges,
/// diagonals are sums of `n - 1` (or `deg`) of them.
fn assert_within_band(model: &GraphModel, p: f64, m: usize, seed: u64) {
    let est = mc_mean(model, m, seed);
    let exact = model.mean_laplacian();
    let sd = (p * (1.0 - p) / m as f64).sqrt();
    let n = model.n();
    for i in 0..n {
        for j in 0..n {
            let terms = if i == j { (n - 1) as f64 } else { 1.0 };
            let tol = 4.0 * sd * terms.sqrt();
            let diff = (est[(i, j)] - exact[(i, j)]).abs();
            assert!(
                diff <= tol,
                "entry ({i},{j}): {} vs {} (tol {tol})",
                est[(i, j)],
                exact[(i, j)]
            );
        }
    }
}

#[test]
fn erdos_renyi_mean_matches_analytic() {
    let model = GraphModel::erdos_renyi(6, 0.3).unwrap();
    assert_within_band(&model, 0.3, 100_000, 11);
    // p (N I - 1 1^T)
    let l = model.mean_laplacian();
    assert!((l[(0, 0)] - 1.5).abs() < 1e-15 && (l[(0, 1)] + 0.3).abs() < 1e-15);
}

#[test]
fn edge_subsample_mean_matches_analytic() {
    let ring = BaseGraph::Ring.edges(7);
    let model = GraphModel::edge_subsample(7, &ring, 0.4, "ring").unwrap();
    assert_within_band(&model, 0.4, 100_000, 12);
    assert!(
        (model.lambda2_mean() - 0.4 * 2.0 * (1.0 - (std::f64::consts::TAU / 7.0).cos())).abs()
            < 1e-12
    );
}

#[test]
fn same_seed_same_graph_sequence() {
    let model = GraphModel::erdos_renyi(8, 0.5).unwrap();
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        assert_eq!(model.sample(&mut a).edges(), model.sample(&mut b).edges());
    }
}
