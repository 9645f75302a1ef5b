//! Cost-matrix construction.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::types::CostMatrix;

/// Norms below this make cosine dissimilarity undefined.
pub const MIN_ROW_NORM: f64 = 1e-12;

pub(crate) fn row_norms(x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    x.rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let nrm = r.dot(&r).sqrt();
            if nrm < MIN_ROW_NORM || !nrm.is_finite() {
                Err(Error::ZeroRow(i))
            } else {
                Ok(nrm)
            }
        })
        .collect()
}

/// Cosine dissimilarity `C_ij = (1 - cos(x_i, y_j)) / 2` between the rows of
/// two embedding matrices with the same number of columns.
pub fn cosine_cost(source: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<CostMatrix> {
    if source.ncols() != target.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "embedding widths differ: {} vs {}",
            source.ncols(),
            target.ncols()
        )));
    }
    if source.iter().chain(target.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("embeddings"));
    }
    let ns = row_norms(source)?;
    let nt = row_norms(target)?;
    let dots = source.dot(&target.t());
    let c = Array2::from_shape_fn(dots.dim(), |(i, j)| {
        let cos = (dots[[i, j]] / (ns[i] * nt[j])).clamp(-1.0, 1.0);
        0.5 * (1.0 - cos)
    });
    CostMatrix::new(c)
}

/// Maximum normalization `2C / max(C)`; an all-zero matrix is returned as is.
pub fn normalize_cost(cost: &CostMatrix) -> Result<CostMatrix> {
    if let Some(((row, col), &value)) = cost.values().indexed_iter().find(|(_, &x)| x < 0.0) {
        return Err(Error::NegativeCost { row, col, value });
    }
    let max = cost.max();
    if max > 0.0 {
        CostMatrix::new(cost.values().mapv(|x| 2.0 * x / max))
    } else {
        Ok(cost.clone())
    }
}

/// Pulls a gradient `grad` with respect to `cosine_cost(source, target)` back
/// to the two embedding matrices.
pub fn cosine_cost_backward(
    source: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    grad: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if grad.dim() != (source.nrows(), target.nrows()) || source.ncols() != target.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "gradient {:?} for embeddings {:?} and {:?}",
            grad.dim(),
            source.dim(),
            target.dim()
        )));
    }
    let ns = row_norms(source)?;
    let nt = row_norms(target)?;
    let mut s_hat = source.to_owned();
    for (mut r, n) in s_hat.rows_mut().into_iter().zip(&ns) {
        r /= *n;
    }
    let mut t_hat = target.to_owned();
    for (mut r, n) in t_hat.rows_mut().into_iter().zip(&nt) {
        r /= *n;
    }
    let cos = s_hat.dot(&t_hat.t());
    // d C / d cos = -1/2
    let g = grad.mapv(|x| -0.5 * x);
    let gc = &g * &cos;
    let mut d_source = g.dot(&t_hat);
    for (i, mut r) in d_source.rows_mut().into_iter().enumerate() {
        let w = gc.row(i).sum();
        r.scaled_add(-w, &s_hat.row(i));
        r /= ns[i];
    }
    let mut d_target = g.t().dot(&s_hat);
    for (j, mut r) in d_target.rows_mut().into_iter().enumerate() {
        let w = gc.column(j).sum();
        r.scaled_add(-w, &t_hat.row(j));
        r /= nt[j];
    }
    Ok((d_source, d_target))
}

/// Pulls a gradient with respect to `normalize_cost(cost)` back to `cost`.
/// The maximum is differentiated at its first occurrence in row-major order.
pub fn normalize_cost_backward(cost: &CostMatrix, grad: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if grad.dim() != cost.dim() {
        return Err(Error::ShapeMismatch(format!("gradient {:?} for cost {:?}", grad.dim(), cost.dim())));
    }
    let max = cost.max();
    if max <= 0.0 {
        return Ok(grad.to_owned());
    }
    let c = cost.values();
    let mut out = grad.mapv(|x| 2.0 * x / max);
    let weighted: f64 = grad.iter().zip(c.iter()).map(|(g, c)| g * c).sum();
    let (at, _) = c.indexed_iter().find(|(_, &x)| x == max).expect("max is attained");
    out[at] -= 2.0 * weighted / (max * max);
    Ok(out)
}
