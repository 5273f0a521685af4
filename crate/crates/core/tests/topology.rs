use gt_adaptive::rng::GLOBAL;
use gt_adaptive::topology::{
    check_doubly_stochastic, check_shift_contraction, generate_erdos_renyi, metropolis_weights, power_spectral_radius,
    spectral_deviation, Graph, MixingMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ER_16_07_42: &str = include_str!("fixtures/er_n16_p0.7_seed42.edges");

/// Independent enumeration: upper-triangle pairs in row order, one uniform draw
/// each, redrawing with seed + 1 while disconnected.
fn enumerate_er(n: usize, p: f64, seed: u64) -> Graph {
    for attempt in 0.. {
        let mut r = ChaCha8Rng::seed_from_u64(seed + attempt);
        r.set_stream((GLOBAL << 8) | 1);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if r.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::new(n, edges).unwrap();
        if g.is_connected() {
            return g;
        }
    }
    unreachable!()
}

#[test]
fn er_golden_edge_set() {
    let g = generate_erdos_renyi(16, 0.7, 42).unwrap();
    assert_eq!(g, Graph::from_edge_list(ER_16_07_42).unwrap());
    assert_eq!(g, enumerate_er(16, 0.7, 42));
    assert!(g.is_connected());
    // Binomial(120, 0.7): mean 84, sd ≈ 5.
    assert!((60..=108).contains(&g.edge_count()), "{}", g.edge_count());
}

#[test]
fn path_graph_weights() {
    let a = metropolis_weights(&Graph::path(3).unwrap()).unwrap();
    let third = 1.0 / 3.0;
    let expected = DMatrix::from_row_slice(3, 3, &[2.0 * third, third, 0.0, third, third, third, 0.0, third, 2.0 * third]);
    assert!((a.weights() - expected).amax() < 1e-15);
    // Eigenvalues 1, 2/3, 0 of this matrix.
    assert!((a.rho_a() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn complete_graph_has_zero_deviation() {
    let a = metropolis_weights(&Graph::complete(6).unwrap()).unwrap();
    assert!(a.rho_a() < 1e-12);
}

#[test]
fn power_iteration_agrees_with_dense_solver() {
    let a = metropolis_weights(&generate_erdos_renyi(24, 0.3, 9).unwrap()).unwrap();
    let n = a.n();
    let dev = a.weights() - DMatrix::from_element(n, n, 1.0 / n as f64);
    let power = power_spectral_radius(&dev, 1e-13, 1_000_000).unwrap();
    assert!((power - spectral_deviation(&a).unwrap()).abs() < 1e-8);
}

#[test]
fn row_stochastic_matrix_is_not_doubly_stochastic() {
    let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.1, 0.9]);
    assert!(!check_doubly_stochastic(&w, 1e-12));
}

#[test]
fn single_node_identity() {
    let a = MixingMatrix::identity(1);
    assert_eq!(a.rho_a(), 0.0);
    assert!(check_shift_contraction(&a));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metropolis_invariants(n in 2usize..20, p in 0.2f64..1.0, seed in any::<u64>()) {
        let a = metropolis_weights(&generate_erdos_renyi(n, p, seed).unwrap()).unwrap();
        let w = a.weights();
        prop_assert!(check_doubly_stochastic(w, 1e-12));
        prop_assert_eq!(w, &w.transpose());
        prop_assert!(a.rho_a() < 1.0);
        prop_assert!(check_shift_contraction(&a));
    }
}
