//! Graph topologies and the masks derived from them.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::MaskMatrix;

/// Undirected graph on vertices `0..n`, optionally edge-weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTopology {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_weights: Option<Vec<f64>>,
    /// Whether `edges` already lists every `(i, i)`. Self loops are added
    /// when building masks either way.
    #[serde(default)]
    pub self_loops_added: bool,
}

impl GraphTopology {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let g = Self { n, edges, edge_weights: None, self_loops_added: false };
        g.validate()?;
        Ok(g)
    }

    pub fn weighted(n: usize, edges: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        let g = Self { n, edges, edge_weights: Some(weights), self_loops_added: false };
        g.validate()?;
        Ok(g)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i)).collect()).expect("path graph is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        let mut seen = HashSet::new();
        for &(u, v) in &self.edges {
            if u >= self.n || v >= self.n {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range for n = {}", self.n)));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
        }
        if let Some(w) = &self.edge_weights {
            if w.len() != self.edges.len() {
                return Err(Error::InvalidGraph(format!(
                    "{} weights for {} edges",
                    w.len(),
                    self.edges.len()
                )));
            }
            if let Some(x) = w.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::InvalidGraph(format!("edge weight {x} is not positive")));
            }
        }
        Ok(())
    }

    pub fn is_weighted(&self) -> bool {
        self.edge_weights.is_some()
    }

    /// Binary `A + I`: symmetric with a unit diagonal.
    pub fn adjacency_with_self_loops(&self) -> Array2<f64> {
        let mut a = Array2::eye(self.n);
        for &(u, v) in &self.edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        a
    }

    /// Edge-weight matrix `W`: edge weights on edges, one elsewhere
    /// (including self loops not listed explicitly).
    pub fn weight_matrix(&self) -> Array2<f64> {
        let mut w = Array2::ones((self.n, self.n));
        if let Some(ws) = &self.edge_weights {
            for (&(u, v), &x) in self.edges.iter().zip(ws) {
                w[[u, v]] = x;
                w[[v, u]] = x;
            }
        }
        w
    }

    /// Neighbours of each vertex, self included, in ascending order.
    pub fn closed_neighbourhoods(&self) -> Vec<Vec<usize>> {
        let a = self.adjacency_with_self_loops();
        a.rows()
            .into_iter()
            .map(|r| r.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(j, _)| j).collect())
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let nb = self.closed_neighbourhoods();
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &nb[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Which support a graph regularizer may transport along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MaskSpec {
    Ones,
    Identity,
    /// 1-hop: `A + I`.
    Adjacency,
    /// k-hop: support of `(A + I)^k`.
    AdjacencyPower(u32),
    /// Support of `sum_k c_k (A + I)^k`.
    Polynomial(Vec<f64>),
}

fn binarize(m: &Array2<f64>) -> Result<MaskMatrix> {
    MaskMatrix::new(m.mapv(|x| x > 0.0))
}

/// Builds the `n x n` mask described by `spec`.
pub fn build_mask(topology: &GraphTopology, spec: &MaskSpec) -> Result<MaskMatrix> {
    topology.validate()?;
    let n = topology.n;
    match spec {
        MaskSpec::Ones => Ok(MaskMatrix::ones(n, n)),
        MaskSpec::Identity => Ok(MaskMatrix::identity(n)),
        MaskSpec::Adjacency => binarize(&topology.adjacency_with_self_loops()),
        MaskSpec::AdjacencyPower(k) => {
            if *k == 0 {
                return Err(Error::InvalidInput("adjacency power must be at least 1".into()));
            }
            let a = topology.adjacency_with_self_loops();
            let mut acc = a.clone();
            for _ in 1..*k {
                // keep the support only; entries would otherwise grow like degree^k
                acc = acc.dot(&a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
            }
            binarize(&acc)
        }
        MaskSpec::Polynomial(coeffs) => {
            if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput("polynomial needs finite coefficients".into()));
            }
            let a = topology.adjacency_with_self_loops();
            let mut power = Array2::eye(n);
            let mut acc = Array2::zeros((n, n));
            for (k, &c) in coeffs.iter().enumerate() {
                if k > 0 {
                    power = power.dot(&a);
                }
                acc.scaled_add(c, &power);
            }
            binarize(&acc)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(m: &MaskMatrix) -> Vec<Vec<u8>> {
        m.dense().rows().into_iter().map(|r| r.iter().map(|&b| b as u8).collect()).collect()
    }

    #[test]
    fn path_graph_masks() {
        let g = GraphTopology::path(3);
        let adj = build_mask(&g, &MaskSpec::Adjacency).unwrap();
        assert_eq!(rows(&adj), vec![vec![1, 1, 0], vec![1, 1, 1], vec![0, 1, 1]]);
        let two_hop = build_mask(&g, &MaskSpec::AdjacencyPower(2)).unwrap();
        assert_eq!(rows(&two_hop), vec![vec![1; 3]; 3]);
        assert_eq!(build_mask(&GraphTopology::path(4), &MaskSpec::Identity).unwrap(), MaskMatrix::identity(4));
        let poly = build_mask(&g, &MaskSpec::Polynomial(vec![0.0, 1.0])).unwrap();
        assert_eq!(poly, adj);
        let poly2 = build_mask(&g, &MaskSpec::Polynomial(vec![1.0, 0.0, 0.5])).unwrap();
        assert_eq!(poly2, two_hop);
    }

    #[test]
    fn power_masks_grow_monotonically() {
        let g = GraphTopology::path(6);
        let mut prev = build_mask(&g, &MaskSpec::Adjacency).unwrap();
        for k in 2..6 {
            let next = build_mask(&g, &MaskSpec::AdjacencyPower(k)).unwrap();
            assert!(prev.is_subset_of(&next));
            prev = next;
        }
        assert_eq!(prev, MaskMatrix::ones(6, 6));
    }

    #[test]
    fn validation_errors() {
        assert!(GraphTopology::new(3, vec![(0, 3)]).is_err());
        assert!(GraphTopology::new(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(GraphTopology::weighted(3, vec![(0, 1)], vec![0.0]).is_err());
        assert!(GraphTopology::weighted(3, vec![(0, 1)], vec![1.0, 2.0]).is_err());
        assert!(GraphTopology::new(0, vec![]).is_err());
        let g = GraphTopology::path(3);
        assert!(build_mask(&g, &MaskSpec::AdjacencyPower(0)).is_err());
        assert!(matches!(
            build_mask(&g, &MaskSpec::Polynomial(vec![-1.0])),
            Err(Error::ZeroRowOrColumn { .. })
        ));
    }

    #[test]
    fn adjacency_is_symmetric_with_unit_diagonal() {
        let g = GraphTopology::weighted(4, vec![(0, 1), (2, 1), (3, 3)], vec![2.0, 0.5, 3.0]).unwrap();
        let a = g.adjacency_with_self_loops();
        assert_eq!(a, a.t());
        assert!((0..4).all(|i| a[[i, i]] == 1.0));
        let w = g.weight_matrix();
        assert_eq!(w[[1, 0]], 2.0);
        assert_eq!(w[[1, 2]], 0.5);
        assert_eq!(w[[3, 3]], 3.0);
        assert_eq!(w[[0, 0]], 1.0);
        assert!(!g.is_connected());
        assert!(GraphTopology::path(5).is_connected());
    }
}
