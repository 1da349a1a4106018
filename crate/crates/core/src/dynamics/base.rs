//! Identifiable subspace of the parameter vector from a stacked regressor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{fill_regressor, DynamicsError, ParamLayout};
use crate::kinematics::RobotState;
use crate::model::ChainModel;
use crate::N_JOINTS;

/// Relative singular-value threshold for the numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiableSubspace {
    pub rank: usize,
    /// Descending singular values of the stacked regressor.
    pub singular_values: Vec<f64>,
    /// Orthonormal basis `B` (p × r) of the identifiable directions.
    pub basis: DMatrix<f64>,
    /// Orthonormal basis (p × (p − r)) of the unidentifiable directions.
    pub null_basis: DMatrix<f64>,
    /// Columns that are identically zero over every sample.
    pub zero_columns: Vec<usize>,
}

impl IdentifiableSubspace {
    /// Orthogonal projector onto the null space.
    pub fn null_projector(&self) -> DMatrix<f64> {
        &self.null_basis * self.null_basis.transpose()
    }

    /// Component of `params` that the data can determine.
    pub fn project(&self, params: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * params)
    }
}

/// Rank analysis of a stacked regressor `W` (rows are samples).
pub fn identifiable_subspace(w: &DMatrix<f64>) -> IdentifiableSubspace {
    let p = w.ncols();
    let zero_columns = (0..p).filter(|&j| w.column(j).iter().all(|v| *v == 0.0)).collect();
    // Reduce to a square triangular factor first so the SVD stays p × p.
    let square = if w.nrows() > p {
        w.clone().qr().r()
    } else {
        let mut padded = DMatrix::zeros(p, p);
        padded.view_mut((0, 0), (w.nrows(), p)).copy_from(w);
        padded
    };
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|s| **s > top * RANK_TOLERANCE && **s > 0.0).count();
    let mut basis = DMatrix::zeros(p, rank);
    let mut null_basis = DMatrix::zeros(p, p - rank);
    for (k, &i) in order.iter().enumerate() {
        let v = v_t.row(i).transpose();
        if k < rank {
            basis.set_column(k, &v);
        } else {
            null_basis.set_column(k - rank, &v);
        }
    }
    IdentifiableSubspace {
        rank,
        singular_values,
        basis,
        null_basis,
        zero_columns,
    }
}

/// Stacks the regressor over `states` and analyses the result.
pub fn base_parameter_analysis(
    model: &ChainModel,
    layout: &ParamLayout,
    states: &[RobotState],
) -> Result<IdentifiableSubspace, DynamicsError> {
    let needed = layout.dim().div_ceil(N_JOINTS);
    if states.len() < needed {
        return Err(DynamicsError::TooFewSamples {
            needed,
            got: states.len(),
        });
    }
    let mut w = DMatrix::zeros(N_JOINTS * states.len(), layout.dim());
    for (k, s) in states.iter().enumerate() {
        fill_regressor(model, layout, s, &mut w, k * N_JOINTS, true);
    }
    Ok(identifiable_subspace(&w))
}
