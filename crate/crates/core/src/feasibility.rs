//! Exact feasibility of masked marginal constraints via maximum flow.

use std::collections::VecDeque;

use crate::types::{MaskMatrix, ProbVec};

/// Deficit above which the masked polytope is treated as empty.
pub const INFEASIBLE_DEFICIT: f64 = 1e-9;

// residual capacities below this count as saturated
const CAPACITY_EPS: f64 = 1e-15;

struct Edge {
    to: usize,
    cap: f64,
}

struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0.0 });
    }

    fn levels(&self, s: usize, t: usize) -> Option<Vec<usize>> {
        let mut level = vec![usize::MAX; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.edges[e].to;
                if self.edges[e].cap > CAPACITY_EPS && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (level[t] != usize::MAX).then_some(level)
    }

    fn augment(&mut self, u: usize, t: usize, pushed: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return pushed;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let v = self.edges[e].to;
            if self.edges[e].cap > CAPACITY_EPS && level[v] == level[u] + 1 {
                let got = self.augment(v, t, pushed.min(self.edges[e].cap), level, next);
                if got > 0.0 {
                    self.edges[e].cap -= got;
                    self.edges[e ^ 1].cap += got;
                    return got;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while let Some(level) = self.levels(s, t) {
            let mut next = vec![0; self.adj.len()];
            loop {
                let got = self.augment(s, t, f64::INFINITY, &level, &mut next);
                if got <= 0.0 {
                    break;
                }
                total += got;
            }
        }
        total
    }
}

/// Mass that cannot be routed: `1 - max flow` in the network
/// source → row `i` (capacity `a_i`) → column `j` for unmasked `(i, j)`
/// → sink (capacity `b_j`). Zero exactly when a plan with marginals `a`, `b`
/// supported on the mask exists.
pub fn transport_deficit(mask: &MaskMatrix, a: &ProbVec, b: &ProbVec) -> f64 {
    let (n, m) = mask.dim();
    let (s, t) = (n + m, n + m + 1);
    let mut net = FlowNetwork::new(n + m + 2);
    for (i, &w) in a.as_slice().iter().enumerate() {
        if w > 0.0 {
            net.add(s, i, w);
            for &j in mask.row_support(i) {
                net.add(i, n + j, f64::INFINITY);
            }
        }
    }
    for (j, &w) in b.as_slice().iter().enumerate() {
        if w > 0.0 {
            net.add(n + j, t, w);
        }
    }
    (1.0 - net.max_flow(s, t)).max(0.0)
}
