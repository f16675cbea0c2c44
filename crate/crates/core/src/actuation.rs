//! Control-matrix estimation from forced trajectories.
//!
//! With eigenfunctions phi_c = Theta xi_c already identified, the forced
//! dynamics give, per sample,
//!
//! ```text
//!   grad phi_c(x) . (B u) = [Gamma(x, xdot) - lambda Theta(x)] xi_c,
//! ```
//!
//! which is linear in the entries of B: the left side equals
//! kron_row(grad phi_c(x), u) . vec(B) with vec(B) stacking the rows of B.
//! Stacking every sample and eigenfunction yields one least-squares problem
//! for vec(B), solved by minimum-norm SVD.

use nalgebra::{DMatrix, DVector};

use crate::discovery::InvariantSubspace;
use crate::error::{Error, Result};
use crate::features::{eval_gamma, eval_theta, grad_theta_at, Dictionary};
use crate::systems::TrajectoryDataset;

/// Relative singular-value cutoff for rank decisions in the LS solve.
const RANK_REL_TOL: f64 = 1e-10;

/// Identified control matrix with solve diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrixEstimate {
    /// n x q estimate.
    pub b_hat: DMatrix<f64>,
    /// RMS of the least-squares residual actually achieved.
    pub residual_rms: f64,
    /// Condition number sigma_1 / sigma_nq of the stacked regressor.
    pub regressor_condition: f64,
}

/// Row-wise Kronecker product: [g1 u1 .. g1 uq, g2 u1, .., gn uq], matching
/// vec(B) in row-major order.
pub fn kron_row(g: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(g.len() * u.len());
    for i in 0..g.len() {
        for j in 0..u.len() {
            out[i * u.len() + j] = g[i] * u[j];
        }
    }
    out
}

/// Estimate B from a forced dataset given the identified eigenfunctions.
pub fn estimate_b(
    dict: &Dictionary,
    subspace: &InvariantSubspace,
    forced: &TrajectoryDataset,
    lambda: f64,
) -> Result<ControlMatrixEstimate> {
    if subspace.dictionary != *dict {
        return Err(Error::invalid("subspace uses a different dictionary"));
    }
    if subspace.kernel_dimension() == 0 {
        return Err(Error::invalid("subspace has no eigenfunctions"));
    }
    if !lambda.is_finite() {
        return Err(Error::invalid("lambda must be finite"));
    }
    let inputs = forced
        .inputs
        .as_ref()
        .ok_or_else(|| Error::invalid("forced dataset has no input columns"))?;
    let n = dict.state_dim;
    let q = inputs.ncols();
    let d = subspace.kernel_dimension();
    let m = forced.len();
    if forced.state_dim() != n {
        return Err(Error::invalid("dataset state dimension does not match dictionary"));
    }

    let gamma = eval_gamma(dict, &forced.states, &forced.derivatives)?;
    let theta = eval_theta(dict, &forced.states)?;
    // rhs(i, c) = [Gamma_i - lambda Theta_i] xi_c
    let rhs_all = (&gamma - lambda * theta) * &subspace.basis;

    let mut a = DMatrix::zeros(m * d, n * q);
    let mut y = DVector::zeros(m * d);
    for i in 0..m {
        let x = forced.states.row(i).transpose();
        let u = inputs.row(i).transpose();
        let grads = grad_theta_at(dict, &x)?; // P x n
        for c in 0..d {
            let g = grads.transpose() * subspace.basis.column(c); // grad phi_c
            a.row_mut(i * d + c).copy_from_slice(kron_row(&g, &u).as_slice());
            y[i * d + c] = rhs_all[(i, c)];
        }
    }

    let svd = a.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let s1 = sigma.max();
    let rank = sigma.iter().filter(|&&s| s > RANK_REL_TOL * s1).count();
    if !(s1.is_finite() && s1 > 0.0) || rank < n * q {
        return Err(Error::Unidentifiable(format!(
            "stacked regressor has numerical rank {rank} < {} unknowns; \
             the input is not exciting enough",
            n * q
        )));
    }
    let s_end = sigma[sigma.len() - 1];
    let u_mat = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    // minimum-norm least squares: x = V S^-1 U^T y over retained sigma
    let mut z = u_mat.transpose() * &y;
    for k in 0..sigma.len() {
        z[k] = if sigma[k] > RANK_REL_TOL * s1 { z[k] / sigma[k] } else { 0.0 };
    }
    let vec_b = v_t.transpose() * z;
    let residual = (&a * &vec_b - &y).norm_squared();
    let residual_rms = (residual / (m * d) as f64).sqrt();

    let mut b_hat = DMatrix::zeros(n, q);
    for i in 0..n {
        for j in 0..q {
            b_hat[(i, j)] = vec_b[i * q + j];
        }
    }
    Ok(ControlMatrixEstimate { b_hat, residual_rms, regressor_condition: s1 / s_end })
}
