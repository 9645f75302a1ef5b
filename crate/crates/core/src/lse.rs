//! Stabilized log-sum-exp restricted to unmasked entries.

use crate::error::{Error, Result};

/// `log sum_{j: mask_j} exp(z_j)`, shifted by the maximum unmasked entry.
///
/// Masked entries are skipped entirely; `exp` is never evaluated there.
pub fn masked_logsumexp(z: &[f64], mask: &[bool]) -> Result<f64> {
    if z.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "values have length {} but mask has length {}",
            z.len(),
            mask.len()
        )));
    }
    logsumexp(z.iter().zip(mask).filter(|(_, &on)| on).map(|(&v, _)| v)).ok_or(Error::EmptyMask)
}

/// Log-sum-exp over an iterator; `None` when it yields nothing.
///
/// The iterator is consumed twice (max pass, then sum pass), so it must be
/// cheap to clone.
pub(crate) fn logsumexp<I>(values: I) -> Option<f64>
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        // empty, or every term is exp(-inf) = 0
        return values.clone().next().map(|_| f64::NEG_INFINITY);
    }
    if max == f64::INFINITY {
        return Some(f64::INFINITY);
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    Some(max + sum.ln())
}
