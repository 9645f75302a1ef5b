//! Value types shared by every solver: marginals, masks, costs, plans and
//! solver configuration.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a [`ProbVec`].
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A probability vector: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec(Array1<f64>);

impl ProbVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let v = Array1::from(values);
        if v.is_empty() {
            return Err(Error::InvalidProbVec("empty vector".into()));
        }
        if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidProbVec(format!("entry {i} = {x}")));
        }
        if !v.iter().any(|&x| x > 0.0) {
            return Err(Error::InvalidProbVec("no positive entry".into()));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbVec(format!("entries sum to {s}")));
        }
        Ok(Self(v))
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidProbVec(format!("weights sum to {s}")));
        }
        Self::new(weights.into_iter().map(|w| w / s).collect())
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over zero points");
        Self(Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("contiguous")
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(perm.iter().map(|&i| self.0[i]).collect())
    }
}

/// Binary support constraint on a transport plan.
///
/// Keeps the dense matrix alongside per-row and per-column lists of unmasked
/// indices so the solvers can skip masked entries without scanning.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix {
    dense: Array2<bool>,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl MaskMatrix {
    /// Builds a mask, rejecting any all-zero row or column.
    pub fn new(dense: Array2<bool>) -> Result<Self> {
        let mask = Self::from_dense_unchecked(dense);
        mask.check_rows_and_cols()?;
        Ok(mask)
    }

    pub fn from_dense_unchecked(dense: Array2<bool>) -> Self {
        let (n, m) = dense.dim();
        let mut rows = vec![Vec::new(); n];
        let mut cols = vec![Vec::new(); m];
        for ((i, j), &on) in dense.indexed_iter() {
            if on {
                rows[i].push(j);
                cols[j].push(i);
            }
        }
        Self { dense, rows, cols }
    }

    pub fn from_fn(n: usize, m: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n, m), |(i, j)| f(i, j)))
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::ShapeMismatch("ragged mask rows".into()));
        }
        Self::from_fn(n, m, |i, j| rows[i][j] != 0)
    }

    pub fn ones(n: usize, m: usize) -> Self {
        Self::from_dense_unchecked(Array2::from_elem((n, m), true))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_dense_unchecked(Array2::from_shape_fn((n, n), |(i, j)| i == j))
    }

    pub(crate) fn check_rows_and_cols(&self) -> Result<()> {
        if let Some(i) = self.rows.iter().position(Vec::is_empty) {
            return Err(Error::ZeroRowOrColumn { axis: "row", index: i });
        }
        if let Some(j) = self.cols.iter().position(Vec::is_empty) {
            return Err(Error::ZeroRowOrColumn { axis: "column", index: j });
        }
        Ok(())
    }

    pub fn dim(&self) -> (usize, usize) {
        self.dense.dim()
    }

    pub fn nrows(&self) -> usize {
        self.dense.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.dense.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.dense[[i, j]]
    }

    pub fn dense(&self) -> &Array2<bool> {
        &self.dense
    }

    /// Unmasked column indices of row `i`.
    pub fn row_support(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    /// Unmasked row indices of column `j`.
    pub fn col_support(&self, j: usize) -> &[usize] {
        &self.cols[j]
    }

    pub fn count_ones(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.dense.mapv(|b| if b { 1.0 } else { 0.0 })
    }

    /// `true` when every unmasked entry of `self` is also unmasked in `other`.
    pub fn is_subset_of(&self, other: &MaskMatrix) -> bool {
        self.dim() == other.dim()
            && self.dense.iter().zip(other.dense.iter()).all(|(&a, &b)| !a || b)
    }

    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let (n, m) = self.dim();
        Self::from_dense_unchecked(Array2::from_shape_fn((n, m), |(i, j)| {
            self.dense[[row_perm[i], col_perm[j]]]
        }))
    }
}

/// Dense pairwise cost matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        Ok(Self(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::ShapeMismatch("ragged cost rows".into()));
        }
        Self::new(Array2::from_shape_fn((n, m), |(i, j)| rows[i][j]))
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self(Array2::zeros((n, m)))
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let (n, m) = self.dim();
        n == m && (0..n).all(|i| (0..i).all(|j| (self.0[[i, j]] - self.0[[j, i]]).abs() <= tol))
    }

    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let (n, m) = self.dim();
        Self(Array2::from_shape_fn((n, m), |(i, j)| self.0[[row_perm[i], col_perm[j]]]))
    }
}

/// Nonnegative coupling whose entries vanish exactly outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    values: Array2<f64>,
    mask: MaskMatrix,
}

impl TransportPlan {
    /// Wraps `values`, zeroing every masked entry.
    pub fn new(mut values: Array2<f64>, mask: MaskMatrix) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::ShapeMismatch(format!(
                "plan {:?} vs mask {:?}",
                values.dim(),
                mask.dim()
            )));
        }
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidInput("plan entries must be finite and nonnegative".into()));
        }
        values.zip_mut_with(mask.dense(), |p, &on| {
            if !on {
                *p = 0.0;
            }
        });
        Ok(Self { values, mask })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn mask(&self) -> &MaskMatrix {
        &self.mask
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.values.rows().into_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.values.columns().into_iter().map(|c| c.iter().sum()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// L1 residuals of the row and column marginals.
    pub fn marginal_residuals(&self, a: &ProbVec, b: &ProbVec) -> (f64, f64) {
        let r = l1_distance(self.row_sums().view(), a.view());
        let c = l1_distance(self.col_sums().view(), b.view());
        (r, c)
    }

    /// `<P, C>`.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        self.values.iter().zip(cost.values().iter()).map(|(p, c)| p * c).sum()
    }

    /// Shannon entropy `-sum P log P`, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self.values.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

pub(crate) fn l1_distance(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()).sum()
}

/// Entropic solver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Entropic regularization strength.
    pub epsilon: f64,
    /// Stopping threshold on the scaling change per iteration.
    pub tau: f64,
    pub max_iter: usize,
    pub record_dual_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, tau: 1e-6, max_iter: 10_000, record_dual_trace: false }
    }
}

impl SolverConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Convergence diagnostics of a single solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub marginal_residual_row: f64,
    pub marginal_residual_col: f64,
    pub dual_trace: Option<Vec<f64>>,
}

impl SolveReport {
    pub fn marginal_residual(&self) -> f64 {
        self.marginal_residual_row.max(self.marginal_residual_col)
    }
}

/// Checks shapes and the no-empty-row/column condition on the mask.
///
/// This is necessary but not sufficient for the masked polytope to be
/// non-empty; emptiness surfaces at solve time.
pub fn validate_feasibility_inputs(mask: &MaskMatrix, a: &ProbVec, b: &ProbVec) -> Result<()> {
    let (n, m) = mask.dim();
    if a.len() != n || b.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "mask is {n}x{m} but marginals have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    mask.check_rows_and_cols()
}
