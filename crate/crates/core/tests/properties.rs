use approx::assert_abs_diff_eq;
use gtot_core::gtot::{gtot_cost, intra_costs};
use gtot_core::{
    build_mask, combined_objective, exact_mwd, gtot_regularizer, gw_objective, mgwd_regularizer, solve_mgwd, solve_mwd,
    transport_deficit, CostMatrix, Error, GraphTopology, GwLossDecomposition, MaskMatrix, MaskSpec, ProbVec,
    SolverConfig,
};
use itertools::Itertools;
use ndarray::Array2;
use proptest::prelude::*;

fn mask_strategy(n: usize, m: usize) -> impl Strategy<Value = MaskMatrix> {
    proptest::collection::vec(proptest::bool::weighted(0.6), n * m).prop_filter_map("empty row or column", move |bits| {
        MaskMatrix::new(Array2::from_shape_vec((n, m), bits).unwrap()).ok()
    })
}

fn cost_strategy(n: usize, m: usize) -> impl Strategy<Value = CostMatrix> {
    proptest::collection::vec(0.0..1.0f64, n * m)
        .prop_map(move |v| CostMatrix::new(Array2::from_shape_vec((n, m), v).unwrap()).unwrap())
}

/// Instance whose marginals come from a plan on the mask, so it is feasible.
fn feasible() -> impl Strategy<Value = (CostMatrix, MaskMatrix, ProbVec, ProbVec)> {
    (2usize..=5, 2usize..=5).prop_flat_map(|(n, m)| {
        (cost_strategy(n, m), mask_strategy(n, m), proptest::collection::vec(0.05..1.0f64, n * m)).prop_map(
            move |(c, mask, w)| {
                let p = Array2::from_shape_fn((n, m), |(i, j)| if mask.get(i, j) { w[i * m + j] } else { 0.0 });
                let a = ProbVec::normalized(p.rows().into_iter().map(|r| r.sum()).collect()).unwrap();
                let b = ProbVec::normalized(p.columns().into_iter().map(|r| r.sum()).collect()).unwrap();
                (c, mask, a, b)
            },
        )
    })
}

fn random_topology(n: usize, extra: &[bool]) -> GraphTopology {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
    for ((i, j), &on) in (0..n).tuple_combinations().zip(extra) {
        if on && j > i + 1 {
            edges.push((i, j));
        }
    }
    GraphTopology::new(n, edges).unwrap()
}

fn cfg(epsilon: f64) -> SolverConfig {
    SolverConfig { epsilon, tau: 1e-12, max_iter: 100_000, record_dual_trace: false }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_respects_mask_and_marginals((c, mask, a, b) in feasible()) {
        let sol = solve_mwd(&c, &mask, &a, &b, &cfg(0.1)).unwrap();
        for ((i, j), &p) in sol.plan.values().indexed_iter() {
            prop_assert!(p >= 0.0);
            if !mask.get(i, j) {
                prop_assert_eq!(p, 0.0);
            }
        }
        prop_assert!(sol.report.converged);
        prop_assert!(sol.report.marginal_residual() < 1e-8);
    }

    #[test]
    fn relabelling_permutes_the_plan((c, mask, a, b) in feasible(), seed in any::<u64>()) {
        let (n, m) = mask.dim();
        let rot = |k: usize, len: usize| -> Vec<usize> { (0..len).map(|i| (i + k) % len).collect() };
        let rp = rot(seed as usize % n, n);
        let cp = rot((seed >> 8) as usize % m, m);
        let sol = solve_mwd(&c, &mask, &a, &b, &cfg(0.1)).unwrap();
        let moved = solve_mwd(&c.permuted(&rp, &cp), &mask.permuted(&rp, &cp), &a.permuted(&rp), &b.permuted(&cp), &cfg(0.1))
            .unwrap();
        for (i, j) in (0..n).cartesian_product(0..m) {
            prop_assert!((moved.plan.values()[[i, j]] - sol.plan.values()[[rp[i], cp[j]]]).abs() < 1e-9);
        }
        prop_assert!((moved.distance - sol.distance).abs() < 1e-9);
    }

    #[test]
    fn entropic_distance_bounds_exact_from_above((c, mask, a, b) in feasible()) {
        let exact = exact_mwd(&c, &mask, &a, &b).unwrap();
        let sol = solve_mwd(&c, &mask, &a, &b, &cfg(0.05)).unwrap();
        prop_assert!(sol.distance >= exact.value - 1e-6, "{} < {}", sol.distance, exact.value);
        let (r, col) = exact.plan.marginal_residuals(&a, &b);
        prop_assert!(r.max(col) < 1e-12);
    }

    #[test]
    fn feasibility_tests_agree(n in 2usize..=5, m in 2usize..=5, bits in proptest::collection::vec(proptest::bool::weighted(0.4), 25),
                               wa in proptest::collection::vec(0.0..1.0f64, 5), wb in proptest::collection::vec(0.0..1.0f64, 5)) {
        let dense = Array2::from_shape_fn((n, m), |(i, j)| bits[i * 5 + j]);
        let Ok(mask) = MaskMatrix::new(dense) else { return Ok(()) };
        let (Ok(a), Ok(b)) = (ProbVec::normalized(wa[..n].to_vec()), ProbVec::normalized(wb[..m].to_vec())) else { return Ok(()) };
        let deficit = transport_deficit(&mask, &a, &b);
        let c = CostMatrix::zeros(n, m);
        match exact_mwd(&c, &mask, &a, &b) {
            Ok(_) => prop_assert!(deficit <= 1e-9, "deficit {deficit}"),
            Err(Error::Infeasible(_)) => prop_assert!(deficit > 1e-9, "deficit {deficit}"),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn gtot_regularizer_is_masked_transport_of_gtot_cost(n in 2usize..=7, extra in proptest::collection::vec(any::<bool>(), 21),
                                                          xs in proptest::collection::vec(-1.0..1.0f64, 21),
                                                          xt in proptest::collection::vec(-1.0..1.0f64, 21)) {
        let g = random_topology(n, &extra);
        let xs = Array2::from_shape_fn((n, 3), |(i, k)| xs[3 * i + k] + if k == 0 { 1.5 } else { 0.0 });
        let xt = Array2::from_shape_fn((n, 3), |(i, k)| xt[3 * i + k] + if k == 1 { 1.5 } else { 0.0 });
        let mask = build_mask(&g, &MaskSpec::Adjacency).unwrap();
        let cost = gtot_cost(&g, xs.view(), xt.view(), &mask, true).unwrap();
        let q = ProbVec::uniform(n);
        let direct = solve_mwd(&cost, &mask, &q, &q, &cfg(0.05)).unwrap();
        let r = gtot_regularizer(&g, xs.view(), xt.view(), &MaskSpec::Adjacency, &cfg(0.05), true).unwrap();
        prop_assert_eq!(r.value, direct.distance);
        prop_assert_eq!(r.plan.values(), direct.plan.values());
    }
}

#[test]
fn exact_mwd_matches_masked_assignment_search() {
    // with uniform square marginals the masked polytope's vertices are the
    // permutation matrices supported on the mask
    let costs = [
        [[0.3, 0.9, 0.1], [0.4, 0.2, 0.8], [0.5, 0.6, 0.7]],
        [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
        [[0.9, 0.2, 0.4], [0.1, 0.8, 0.3], [0.6, 0.5, 0.05]],
    ];
    let masks = [
        vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]],
        vec![vec![1, 1, 1], vec![1, 1, 1], vec![1, 1, 1]],
        vec![vec![1, 0, 1], vec![1, 1, 0], vec![0, 1, 1]],
    ];
    let q = ProbVec::uniform(3);
    for c in &costs {
        let c = CostMatrix::from_rows(&c.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        for rows in &masks {
            let mask = MaskMatrix::from_rows(rows).unwrap();
            let best = (0..3)
                .permutations(3)
                .filter(|p| p.iter().enumerate().all(|(i, &j)| mask.get(i, j)))
                .map(|p| p.iter().enumerate().map(|(i, &j)| c.values()[[i, j]]).sum::<f64>() / 3.0)
                .fold(f64::INFINITY, f64::min);
            let exact = exact_mwd(&c, &mask, &q, &q).unwrap();
            assert_abs_diff_eq!(exact.value, best, epsilon = 1e-12);
        }
    }
}

#[test]
fn mgwd_distance_is_gw_objective_of_its_plan() {
    let g = GraphTopology::path(5);
    let xs = Array2::from_shape_fn((5, 3), |(i, k)| ((i * 3 + k) as f64 * 0.7).sin() + 1.2);
    let xt = Array2::from_shape_fn((5, 3), |(i, k)| ((i * 5 + k) as f64 * 0.3).cos() + 1.0);
    let c = SolverConfig::with_epsilon(0.05);
    let r = mgwd_regularizer(&g, xs.view(), xt.view(), &MaskSpec::Adjacency, &c, 30, true).unwrap();
    let (cx, cy) = intra_costs(xs.view(), xt.view(), true).unwrap();
    let obj = gw_objective(&cx, &cy, &r.plan, GwLossDecomposition::SquaredLoss).unwrap();
    assert_abs_diff_eq!(r.value, obj, epsilon = 1e-12);

    let mask = build_mask(&g, &MaskSpec::Adjacency).unwrap();
    let q = ProbVec::uniform(5);
    let direct = solve_mgwd(&cx, &cy, &mask, &q, &q, &c, 30, GwLossDecomposition::SquaredLoss).unwrap();
    assert_eq!(direct.distance, r.value);
}

#[test]
fn combined_objective_recomposes_from_parts() {
    let g = GraphTopology::path(4);
    let xs = Array2::from_shape_fn((4, 2), |(i, k)| 1.0 + (i + 2 * k) as f64 * 0.3);
    let xt = Array2::from_shape_fn((4, 2), |(i, k)| 1.0 + ((i * k) as f64).sin());
    let c = SolverConfig::with_epsilon(0.05);
    let mwd = gtot_regularizer(&g, xs.view(), xt.view(), &MaskSpec::Adjacency, &c, true).unwrap().value;
    let mgwd = mgwd_regularizer(&g, xs.view(), xt.view(), &MaskSpec::Adjacency, &c, 20, true).unwrap().value;
    for (task, lambda, beta) in [(0.7, 1.0, 1.0), (0.0, 0.1, 0.0), (1.3, 0.0, 2.5)] {
        let total = combined_objective(task, mwd, mgwd, lambda, beta);
        assert_abs_diff_eq!(total, task + lambda * mwd + beta * mgwd, epsilon = 1e-15);
    }
}

#[test]
fn wider_masks_never_increase_the_exact_distance() {
    let g = GraphTopology::path(6);
    let c = CostMatrix::new(Array2::from_shape_fn((6, 6), |(i, j)| ((i * 7 + j * 3) % 5) as f64 / 4.0)).unwrap();
    let q = ProbVec::uniform(6);
    let mut last = f64::INFINITY;
    for spec in [MaskSpec::Identity, MaskSpec::Adjacency, MaskSpec::AdjacencyPower(2), MaskSpec::AdjacencyPower(3), MaskSpec::Ones] {
        let mask = build_mask(&g, &spec).unwrap();
        let v = exact_mwd(&c, &mask, &q, &q).unwrap().value;
        assert!(v <= last + 1e-12, "{spec:?}: {v} > {last}");
        last = v;
    }
}
