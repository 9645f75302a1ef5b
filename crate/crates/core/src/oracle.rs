//! Exact references for small instances.
//!
//! None of these share code with the entropic solvers: the unregularized
//! masked problem is solved as a min-cost flow, and the Gromov
//! objectives are evaluated by literal quadruple sums or by enumeration.

use std::collections::VecDeque;

use itertools::Itertools;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::feasibility::INFEASIBLE_DEFICIT;
use crate::gromov::GwLossDecomposition;
use crate::types::{validate_feasibility_inputs, CostMatrix, MaskMatrix, ProbVec, TransportPlan};

/// Largest side accepted by [`exact_mwd`].
pub const MAX_FLOW_SIDE: usize = 64;
/// Largest side accepted by the quadruple-sum references.
pub const MAX_NAIVE_SIDE: usize = 8;
/// Largest side accepted by [`permutation_gw_search`].
pub const MAX_PERMUTATION_SIDE: usize = 6;

// residual capacities below this count as saturated
const CAPACITY_EPS: f64 = 1e-15;

/// Exact (unregularized) masked transport optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub value: f64,
    pub plan: TransportPlan,
}

struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Successive shortest paths with Bellman-Ford on the residual graph.
struct FlowNetwork {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self { arcs: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn add_arc(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.adj[from].push(id);
        self.arcs.push(Arc { to: from, cap: 0.0, cost: -cost });
        self.adj[to].push(id + 1);
        id
    }

    fn shortest_path(&self, s: usize) -> (Vec<f64>, Vec<usize>) {
        let nodes = self.adj.len();
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        let mut queued = vec![false; nodes];
        dist[s] = 0.0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            for &id in &self.adj[v] {
                let arc = &self.arcs[id];
                if arc.cap <= CAPACITY_EPS {
                    continue;
                }
                let nd = dist[v] + arc.cost;
                // the margin keeps rounding noise from cycling forever
                if nd < dist[arc.to] - 1e-14 {
                    dist[arc.to] = nd;
                    via[arc.to] = id;
                    if !queued[arc.to] {
                        queued[arc.to] = true;
                        queue.push_back(arc.to);
                    }
                }
            }
        }
        (dist, via)
    }

    /// Pushes up to `target` units from `s` to `t`; returns the amount sent.
    fn min_cost_flow(&mut self, s: usize, t: usize, target: f64) -> f64 {
        let mut sent = 0.0;
        while target - sent > CAPACITY_EPS {
            let (dist, via) = self.shortest_path(s);
            if dist[t].is_infinite() {
                break;
            }
            let mut push = target - sent;
            let mut v = t;
            while v != s {
                let id = via[v];
                push = push.min(self.arcs[id].cap);
                v = self.arcs[id ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let id = via[v];
                self.arcs[id].cap -= push;
                self.arcs[id ^ 1].cap += push;
                v = self.arcs[id ^ 1].to;
            }
            sent += push;
        }
        sent
    }
}

/// Exact masked transport optimum by min-cost flow on the masked bipartite
/// graph. Returns [`Error::Infeasible`] when no feasible flow exists, which
/// certifies that the masked polytope is empty.
pub fn exact_mwd(cost: &CostMatrix, mask: &MaskMatrix, a: &ProbVec, b: &ProbVec) -> Result<ExactSolution> {
    validate_feasibility_inputs(mask, a, b)?;
    let (n, m) = mask.dim();
    if cost.dim() != (n, m) {
        return Err(Error::ShapeMismatch(format!("cost {:?} vs mask {:?}", cost.dim(), (n, m))));
    }
    if n > MAX_FLOW_SIDE || m > MAX_FLOW_SIDE {
        return Err(Error::TooLarge(format!("{n}x{m} exceeds {MAX_FLOW_SIDE}x{MAX_FLOW_SIDE}")));
    }
    let c = cost.values();
    let (source, sink) = (0, n + m + 1);
    let mut net = FlowNetwork::new(n + m + 2);
    for (i, &s) in a.as_slice().iter().enumerate() {
        net.add_arc(source, 1 + i, s, 0.0);
    }
    let mut transport_arcs = Vec::new();
    for i in 0..n {
        for &j in mask.row_support(i) {
            let id = net.add_arc(1 + i, 1 + n + j, f64::INFINITY, c[[i, j]]);
            transport_arcs.push((i, j, id));
        }
    }
    for (j, &d) in b.as_slice().iter().enumerate() {
        net.add_arc(1 + n + j, sink, d, 0.0);
    }
    let total: f64 = a.as_slice().iter().sum();
    let sent = net.min_cost_flow(source, sink, total);
    if total - sent > INFEASIBLE_DEFICIT {
        return Err(Error::Infeasible(format!("only {sent:.9} of the unit mass can be routed through the mask")));
    }
    let mut p = Array2::zeros((n, m));
    for (i, j, id) in transport_arcs {
        // flow on a forward arc is the capacity picked up by its reverse twin
        p[[i, j]] = net.arcs[id ^ 1].cap;
    }
    let plan = TransportPlan::new(p, mask.clone())?;
    let value = plan.cost(cost);
    Ok(ExactSolution { value, plan })
}

fn check_naive(cx: &CostMatrix, cy: &CostMatrix, p: &Array2<f64>) -> Result<(usize, usize)> {
    let (n, m) = p.dim();
    if cx.dim() != (n, n) || cy.dim() != (m, m) {
        return Err(Error::ShapeMismatch("intra-domain costs do not fit the plan".into()));
    }
    if n > MAX_NAIVE_SIDE || m > MAX_NAIVE_SIDE {
        return Err(Error::TooLarge(format!("{n}x{m} exceeds {MAX_NAIVE_SIDE}x{MAX_NAIVE_SIDE}")));
    }
    Ok((n, m))
}

/// Literal contraction `(L ⊗ P)_ij = sum_kl L(Cx_ik, Cy_jl) P_kl`.
pub fn naive_pseudo_cost(cx: &CostMatrix, cy: &CostMatrix, masked_plan: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, m) = check_naive(cx, cy, masked_plan)?;
    let loss = GwLossDecomposition::SquaredLoss;
    let (x, y) = (cx.values(), cy.values());
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..n {
                for l in 0..m {
                    acc += loss.loss(x[[i, k]], y[[j, l]]) * masked_plan[[k, l]];
                }
            }
            out[[i, j]] = acc;
        }
    }
    Ok(out)
}

/// Literal quadruple sum `sum_ijkl (Cx_ik - Cy_jl)² P_ij P_kl`.
pub fn naive_gw_objective(cx: &CostMatrix, cy: &CostMatrix, masked_plan: &Array2<f64>) -> Result<f64> {
    let (n, m) = check_naive(cx, cy, masked_plan)?;
    let (x, y) = (cx.values(), cy.values());
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    let d = x[[i, k]] - y[[j, l]];
                    total += d * d * masked_plan[[i, j]] * masked_plan[[k, l]];
                }
            }
        }
    }
    Ok(total)
}

/// Minimum squared-loss Gromov objective over all permutation couplings
/// `P = Π_σ / n`, the vertices of the uniform-marginal coupling polytope.
pub fn permutation_gw_search(cx: &CostMatrix, cy: &CostMatrix) -> Result<f64> {
    let (n, n2) = cx.dim();
    if n != n2 || cy.dim() != (n, n) {
        return Err(Error::ShapeMismatch("permutation search needs equal square costs".into()));
    }
    if n > MAX_PERMUTATION_SIDE {
        return Err(Error::TooLarge(format!("{n}! permutations (limit {MAX_PERMUTATION_SIDE})")));
    }
    let (x, y) = (cx.values(), cy.values());
    let scale = 1.0 / (n * n) as f64;
    let best = (0..n)
        .permutations(n)
        .map(|sigma| {
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..n {
                    let d = x[[i, k]] - y[[sigma[i], sigma[k]]];
                    s += d * d;
                }
            }
            s * scale
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}
