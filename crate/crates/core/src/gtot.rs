//! Graph-topology regularizers built on masked transport.
//!
//! The node-level regularizer transports uniform mass between the node
//! embeddings of two networks, restricted to the adjacency (self loops
//! included) of the input graph, under the cosine dissimilarity. The
//! edge-level variant applies the same mask to a Gromov-Wasserstein problem
//! over the intra-embedding dissimilarities.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cost::{cosine_cost, normalize_cost};
use crate::error::{Error, Result};
use crate::graph::{build_mask, GraphTopology, MaskSpec};
use crate::gromov::{solve_mgwd, GwLossDecomposition};
use crate::sinkhorn::solve_mwd;
use crate::types::{CostMatrix, MaskMatrix, ProbVec, SolveReport, SolverConfig, TransportPlan};

/// Value of a graph regularizer for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerValue {
    /// Transport cost at the returned plan, entropy excluded.
    pub value: f64,
    /// Entropic optimum; its derivative in the cost is given by `plan`.
    pub regularized_value: f64,
    pub plan: TransportPlan,
    pub report: SolveReport,
}

fn check_embeddings(topology: &GraphTopology, xs: ArrayView2<'_, f64>, xt: ArrayView2<'_, f64>) -> Result<()> {
    topology.validate()?;
    if xs.nrows() != topology.n || xt.nrows() != topology.n {
        return Err(Error::ShapeMismatch(format!(
            "graph has {} vertices but embeddings have {} and {} rows",
            topology.n,
            xs.nrows(),
            xt.nrows()
        )));
    }
    Ok(())
}

/// Cost used by the node-level regularizer: cosine dissimilarity, optionally
/// max-normalized, multiplied by the edge weights at unmasked positions.
pub fn gtot_cost(
    topology: &GraphTopology,
    xs: ArrayView2<'_, f64>,
    xt: ArrayView2<'_, f64>,
    mask: &MaskMatrix,
    normalize: bool,
) -> Result<CostMatrix> {
    let mut c = cosine_cost(xs, xt)?;
    if normalize {
        c = normalize_cost(&c)?;
    }
    if topology.is_weighted() {
        let w = topology.weight_matrix();
        let mut v = c.into_inner();
        for ((i, j), x) in v.indexed_iter_mut() {
            if mask.get(i, j) {
                *x *= w[[i, j]];
            }
        }
        c = CostMatrix::new(v)?;
    }
    Ok(c)
}

/// Node-level graph regularizer: masked transport between uniform
/// marginals under the cosine cost.
pub fn gtot_regularizer(
    topology: &GraphTopology,
    xs: ArrayView2<'_, f64>,
    xt: ArrayView2<'_, f64>,
    spec: &MaskSpec,
    cfg: &SolverConfig,
    normalize: bool,
) -> Result<RegularizerValue> {
    check_embeddings(topology, xs, xt)?;
    let mask = build_mask(topology, spec)?;
    let cost = gtot_cost(topology, xs, xt, &mask, normalize)?;
    let q = ProbVec::uniform(topology.n);
    let sol = solve_mwd(&cost, &mask, &q, &q, cfg)?;
    Ok(RegularizerValue {
        value: sol.distance,
        regularized_value: sol.regularized_value,
        plan: sol.plan,
        report: sol.report,
    })
}

/// Intra-domain costs for the edge-level regularizer.
pub fn intra_costs(xs: ArrayView2<'_, f64>, xt: ArrayView2<'_, f64>, normalize: bool) -> Result<(CostMatrix, CostMatrix)> {
    let mut cx = cosine_cost(xs, xs)?;
    let mut cy = cosine_cost(xt, xt)?;
    symmetrize(&mut cx);
    symmetrize(&mut cy);
    if normalize {
        cx = normalize_cost(&cx)?;
        cy = normalize_cost(&cy)?;
    }
    Ok((cx, cy))
}

// Rounding in the Gram product can break exact symmetry.
pub(crate) fn symmetrize(c: &mut CostMatrix) {
    let v: Array2<f64> = c.values().clone();
    let n = v.nrows();
    let s = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 0.5 * (v[[i, j]] + v[[j, i]]) });
    *c = CostMatrix::new(s).expect("finite");
}

/// Edge-level graph regularizer: masked Gromov-Wasserstein between the
/// intra-embedding cosine dissimilarities of the two networks.
#[allow(clippy::too_many_arguments)]
pub fn mgwd_regularizer(
    topology: &GraphTopology,
    xs: ArrayView2<'_, f64>,
    xt: ArrayView2<'_, f64>,
    spec: &MaskSpec,
    cfg: &SolverConfig,
    outer_iters: usize,
    normalize: bool,
) -> Result<RegularizerValue> {
    check_embeddings(topology, xs, xt)?;
    let mask = build_mask(topology, spec)?;
    let (cx, cy) = intra_costs(xs, xt, normalize)?;
    let q = ProbVec::uniform(topology.n);
    let sol = solve_mgwd(&cx, &cy, &mask, &q, &q, cfg, outer_iters, GwLossDecomposition::SquaredLoss)?;
    Ok(RegularizerValue {
        value: sol.distance,
        regularized_value: sol.regularized_value,
        plan: sol.plan,
        report: sol.report,
    })
}

/// `task_loss + λ·mwd + β·mgwd`. `β = 0` is the node-only objective, `λ = 0`
/// the edge-only one. Both weights are expected to be nonnegative.
pub fn combined_objective(task_loss: f64, mwd_value: f64, mgwd_value: f64, lambda: f64, beta: f64) -> f64 {
    task_loss + lambda * mwd_value + beta * mgwd_value
}

/// Masked transport value of a graph signal under the squared-difference
/// cost `(s_i - s_j)²` on the 1-hop mask, a topology-optimised analogue of
/// the Laplacian quadratic form.
pub fn smooth_value(topology: &GraphTopology, signal: &[f64], cfg: &SolverConfig) -> Result<f64> {
    topology.validate()?;
    if signal.len() != topology.n {
        return Err(Error::ShapeMismatch(format!(
            "signal length {} for {} vertices",
            signal.len(),
            topology.n
        )));
    }
    if signal.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("graph signal"));
    }
    let n = topology.n;
    let cost = CostMatrix::new(Array2::from_shape_fn((n, n), |(i, j)| (signal[i] - signal[j]).powi(2)))?;
    let mask = build_mask(topology, &MaskSpec::Adjacency)?;
    let q = ProbVec::uniform(n);
    Ok(solve_mwd(&cost, &mask, &q, &q, cfg)?.distance)
}

/// `sum_ij A_ij (s_i - s_j)² = 2 sᵀ L s` on the graph without self loops.
pub fn laplacian_quadratic(topology: &GraphTopology, signal: &[f64]) -> f64 {
    topology.edges.iter().filter(|(u, v)| u != v).map(|&(u, v)| 2.0 * (signal[u] - signal[v]).powi(2)).sum()
}

/// Inputs of the stability-based generalization bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Upper bound on the task loss.
    pub loss_bound: f64,
    pub lambda: f64,
    /// Maximum vertex count over the training graphs.
    pub beta_vertices: u64,
    pub sample_count: u64,
    /// Upper bound on the full per-sample loss.
    pub q_bound: f64,
    pub delta: f64,
    pub empirical_risk: f64,
}

/// Uniform stability constant `2M + λ√B`.
pub fn uniform_stability(loss_bound: f64, lambda: f64, beta_vertices: u64) -> f64 {
    2.0 * loss_bound + lambda * (beta_vertices as f64).sqrt()
}

/// `R_m + 4M + 2λ√B + (8NM + 4Nλ√B + Q) √(ln(1/δ) / 2N)`.
pub fn generalization_bound(p: &BoundParams) -> Result<f64> {
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::InvalidDelta(p.delta));
    }
    let reals = [p.loss_bound, p.lambda, p.q_bound, p.empirical_risk];
    if reals.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidInput("bound parameters must be finite and nonnegative".into()));
    }
    if p.sample_count == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let n = p.sample_count as f64;
    let stab = uniform_stability(p.loss_bound, p.lambda, p.beta_vertices);
    Ok(p.empirical_risk + 2.0 * stab + (4.0 * n * stab + p.q_bound) * ((1.0 / p.delta).ln() / (2.0 * n)).sqrt())
}
