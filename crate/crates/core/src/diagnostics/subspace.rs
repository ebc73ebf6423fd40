use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, principal_angle_cosines, Matrix};
use crate::stats::quantile_sorted;

/// Cosines of the principal angles between two column spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceReport {
    /// Descending.
    pub cosines: Vec<f64>,
    pub max: f64,
    pub median: f64,
    pub min: f64,
}

/// Orthonormalizes the columns of both maps and compares their spans.
pub fn subspace_report(l1: &Matrix, l2: &Matrix) -> Result<SubspaceReport> {
    if l1.rows() != l2.rows() {
        return Err(Error::DimensionMismatch { expected: l1.rows(), found: l2.rows() });
    }
    let cosines = principal_angle_cosines(&orthonormalize(l1)?, &orthonormalize(l2)?)?;
    let mut asc = cosines.clone();
    asc.sort_by(f64::total_cmp);
    Ok(SubspaceReport { max: asc[asc.len() - 1], median: quantile_sorted(&asc, 0.5), min: asc[0], cosines })
}
