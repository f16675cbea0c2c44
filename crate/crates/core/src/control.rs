//! Model predictive control in the identified conserved-quantity coordinates.
//!
//! The coordinates C(x) = Theta(x) Xi evolve only through the input:
//! dC/dt = B_c(x) u with B_c(x) = grad C(x)^T B. Over one short horizon
//! B_c is frozen at the current measurement (zero-order hold), which makes
//! the horizon cost a strictly convex quadratic in a single constant control
//! move and the optimizer closed-form. The plant itself is integrated with
//! RK4 sub-steps while the control is held constant, and the control is
//! recomputed every macro-step.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

use crate::discovery::InvariantSubspace;
use crate::error::{Error, Result};
use crate::features::{eval_theta, grad_theta_at, Dictionary};
use crate::systems::{rk4_step, ForcingSignal, SystemSpec, DIVERGENCE_GUARD};

/// Componentwise tolerance on |C(t_end) - C*| used for the convergence flag.
pub const CONVERGENCE_TOL: f64 = 1e-2;

/// Weights, horizon and reference of the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// d x d symmetric positive-definite weight on the coordinate error.
    pub q_weight: DMatrix<f64>,
    /// q x q symmetric positive-semidefinite input weight.
    pub r_weight: DMatrix<f64>,
    /// Prediction horizon in plant macro-steps.
    pub horizon_steps: usize,
    /// Macro-step length; the control is recomputed at this period.
    pub plant_dt: f64,
    /// RK4 sub-steps of size plant_dt / substeps per macro-step.
    pub substeps: usize,
    /// Reference state; the tracked reference is C(reference_state).
    pub reference_state: DVector<f64>,
    /// Optional per-channel (lower, upper) input clipping.
    pub input_bounds: Option<Vec<(f64, f64)>>,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0)
}

impl MpcConfig {
    pub fn validate(&self, d: usize, q: usize, n: usize) -> Result<()> {
        if self.q_weight.shape() != (d, d) || !is_symmetric(&self.q_weight) {
            return Err(Error::invalid("Q must be d x d symmetric"));
        }
        if self.r_weight.shape() != (q, q) || !is_symmetric(&self.r_weight) {
            return Err(Error::invalid("R must be q x q symmetric"));
        }
        let eig_min = |m: &DMatrix<f64>| m.clone().symmetric_eigen().eigenvalues.min();
        if eig_min(&self.q_weight) <= 0.0 {
            return Err(Error::invalid("Q must be positive definite"));
        }
        if eig_min(&self.r_weight) < 0.0 {
            return Err(Error::invalid("R must be positive semidefinite"));
        }
        if self.horizon_steps == 0 || self.substeps == 0 {
            return Err(Error::invalid("horizon_steps and substeps must be at least 1"));
        }
        if !(self.plant_dt > 0.0 && self.plant_dt.is_finite()) {
            return Err(Error::invalid("plant_dt must be positive"));
        }
        if self.reference_state.len() != n {
            return Err(Error::invalid("reference state has wrong dimension"));
        }
        if let Some(b) = &self.input_bounds {
            if b.len() != q || b.iter().any(|(lo, hi)| lo > hi) {
                return Err(Error::invalid("input bounds must be q ordered intervals"));
            }
        }
        Ok(())
    }
}

/// Everything the controller knows about the plant: identified eigenfunction
/// basis and (estimated or true) control matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlModel {
    pub subspace: InvariantSubspace,
    /// n x q control matrix used for prediction.
    pub b: DMatrix<f64>,
}

impl ControlModel {
    pub fn new(subspace: InvariantSubspace, b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != subspace.dictionary.state_dim {
            return Err(Error::invalid("control matrix rows must match the state dimension"));
        }
        if subspace.kernel_dimension() == 0 {
            return Err(Error::invalid("control model needs at least one coordinate"));
        }
        Ok(ControlModel { subspace, b })
    }
}

/// C(x) = Theta(x) Xi, one value per identified eigenfunction.
pub fn conserved_coordinates(
    dict: &Dictionary,
    subspace: &InvariantSubspace,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if subspace.dictionary != *dict {
        return Err(Error::invalid("subspace uses a different dictionary"));
    }
    let row = eval_theta(dict, &DMatrix::from_row_slice(1, x.len(), x.as_slice()))?;
    Ok((row * &subspace.basis).row(0).transpose())
}

/// B_c(x): row c = grad C_c(x)^T B.
pub fn control_gain_map(
    dict: &Dictionary,
    subspace: &InvariantSubspace,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if subspace.dictionary != *dict {
        return Err(Error::invalid("subspace uses a different dictionary"));
    }
    if b.nrows() != dict.state_dim {
        return Err(Error::invalid("control matrix rows must match the state dimension"));
    }
    let grads = grad_theta_at(dict, x)?; // P x n
    Ok(subspace.basis.transpose() * grads * b)
}

/// One controller solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcStep {
    pub input: DVector<f64>,
    /// True when B_c vanished while the coordinate error did not: the error
    /// is invisible to the input and u = 0 was returned.
    pub uncontrollable: bool,
}

/// Closed-form minimizer of the zero-order-hold horizon cost
/// `sum_{k=1..N} (C0 + k dt B_c u - C*)^T Q (.) + u^T R u`.
pub fn mpc_step(config: &MpcConfig, model: &ControlModel, x_now: &DVector<f64>) -> Result<MpcStep> {
    let dict = &model.subspace.dictionary;
    let q_dim = model.b.ncols();
    config.validate(model.subspace.kernel_dimension(), q_dim, dict.state_dim)?;
    let c_now = conserved_coordinates(dict, &model.subspace, x_now)?;
    let c_ref = conserved_coordinates(dict, &model.subspace, &config.reference_state)?;
    let e = c_now - c_ref;
    let bc = control_gain_map(dict, &model.subspace, &model.b, x_now)?;

    let n = config.horizon_steps as f64;
    let dt = config.plant_dt;
    // sum of k dt and (k dt)^2 over the horizon
    let s1 = dt * n * (n + 1.0) / 2.0;
    let s2 = dt * dt * n * (n + 1.0) * (2.0 * n + 1.0) / 6.0;

    let qe = &config.q_weight * &e;
    if bc.amax() == 0.0 {
        let uncontrollable = e.amax() > 0.0;
        return Ok(MpcStep { input: DVector::zeros(q_dim), uncontrollable });
    }
    let m = s2 * bc.transpose() * &config.q_weight * &bc + n * &config.r_weight;
    let rhs = -s1 * bc.transpose() * qe;
    let mut u = match m.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            // R may be only semidefinite; fall back to the minimum-norm
            // solution of the normal equations.
            let svd = m.svd(true, true);
            svd.solve(&rhs, 1e-12).map_err(|e| Error::DegenerateData(e.to_string()))?
        }
    };
    if let Some(bounds) = &config.input_bounds {
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            u[i] = u[i].clamp(*lo, *hi);
        }
    }
    Ok(MpcStep { input: u, uncontrollable: false })
}

/// Time series of one controlled run, sampled at macro-step boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult {
    pub times: Vec<f64>,
    /// m x n states.
    pub states: DMatrix<f64>,
    /// m x q inputs applied from each sample onward (zero in the last row).
    pub inputs: DMatrix<f64>,
    /// m x d coordinate values C(x).
    pub coordinates: DMatrix<f64>,
    /// Stage cost (C - C*)^T Q (C - C*) + u^T R u per sample.
    pub cost: Vec<f64>,
    /// Whether |C(t_end) - C*| <= CONVERGENCE_TOL componentwise.
    pub converged: bool,
    /// Euclidean distance of the final state to the nearer of +-reference.
    /// The coordinates are even in x, so the controller cannot distinguish
    /// the two mirror references.
    pub final_distance_to_reference: f64,
    /// True when any controller solve hit a vanishing B_c with nonzero error.
    pub hit_uncontrollable: bool,
}

impl ClosedLoopResult {
    /// CSV with header `t,x1..xn,u1..uq,C1..Cd,cost`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let (n, q, d) = (self.states.ncols(), self.inputs.ncols(), self.coordinates.ncols());
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x{i}"));
        }
        for i in 1..=q {
            header.push_str(&format!(",u{i}"));
        }
        for i in 1..=d {
            header.push_str(&format!(",C{i}"));
        }
        header.push_str(",cost");
        writeln!(out, "{header}")?;
        for r in 0..self.times.len() {
            let mut line = format!("{:?}", self.times[r]);
            for c in 0..n {
                line.push_str(&format!(",{:?}", self.states[(r, c)]));
            }
            for c in 0..q {
                line.push_str(&format!(",{:?}", self.inputs[(r, c)]));
            }
            for c in 0..d {
                line.push_str(&format!(",{:?}", self.coordinates[(r, c)]));
            }
            line.push_str(&format!(",{:?}", self.cost[r]));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Run the receding-horizon loop: solve for u, hold it for `substeps` RK4
/// sub-steps of size plant_dt / substeps, repeat until t_end.
pub fn run_closed_loop(
    spec: &SystemSpec,
    config: &MpcConfig,
    model: &ControlModel,
    x0: &DVector<f64>,
    t_end: f64,
) -> Result<ClosedLoopResult> {
    let n = spec.state_dim();
    let q = spec.input_dim();
    let dict = &model.subspace.dictionary;
    config.validate(model.subspace.kernel_dimension(), q, n)?;
    if x0.len() != n || dict.state_dim != n || model.b.shape() != (n, q) {
        return Err(Error::invalid("inconsistent dimensions between plant and model"));
    }
    if !(t_end > 0.0) {
        return Err(Error::invalid("t_end must be positive"));
    }
    let macro_steps = (t_end / config.plant_dt).round().max(1.0) as usize;
    let m = macro_steps + 1;
    let d = model.subspace.kernel_dimension();
    let c_ref = conserved_coordinates(dict, &model.subspace, &config.reference_state)?;

    let mut times = Vec::with_capacity(m);
    let mut states = DMatrix::zeros(m, n);
    let mut inputs = DMatrix::zeros(m, q);
    let mut coords = DMatrix::zeros(m, d);
    let mut cost = Vec::with_capacity(m);
    let mut hit_uncontrollable = false;

    let sub_dt = config.plant_dt / config.substeps as f64;
    let mut x = x0.clone();
    for k in 0..m {
        let t = k as f64 * config.plant_dt;
        let norm = x.norm();
        if !norm.is_finite() || norm > DIVERGENCE_GUARD {
            return Err(Error::Divergence { time: t, norm, guard: DIVERGENCE_GUARD });
        }
        let c = conserved_coordinates(dict, &model.subspace, &x)?;
        let u = if k < macro_steps {
            let step = mpc_step(config, model, &x)?;
            hit_uncontrollable |= step.uncontrollable;
            step.input
        } else {
            DVector::zeros(q)
        };
        let e = &c - &c_ref;
        let stage = (e.transpose() * &config.q_weight * &e)[(0, 0)]
            + (u.transpose() * &config.r_weight * &u)[(0, 0)];
        times.push(t);
        states.row_mut(k).copy_from_slice(x.as_slice());
        inputs.row_mut(k).copy_from_slice(u.as_slice());
        coords.row_mut(k).copy_from_slice(c.as_slice());
        cost.push(stage);
        if k < macro_steps {
            let held = ForcingSignal::Constant { value: u.as_slice().to_vec() };
            for s in 0..config.substeps {
                x = rk4_step(spec, &x, t + s as f64 * sub_dt, sub_dt, Some(&held));
            }
        }
    }

    let c_end = coords.row(m - 1).transpose();
    let converged = (c_end - &c_ref).amax() <= CONVERGENCE_TOL;
    let x_end = states.row(m - 1).transpose();
    let dist_plus = (&x_end - &config.reference_state).norm();
    let dist_minus = (&x_end + &config.reference_state).norm();
    Ok(ClosedLoopResult {
        times,
        states,
        inputs,
        coordinates: coords,
        cost,
        converged,
        final_distance_to_reference: dist_plus.min(dist_minus),
        hit_uncontrollable,
    })
}

/// Independent closed-loop runs for an ensemble of initial conditions.
pub fn run_closed_loop_ensemble(
    spec: &SystemSpec,
    config: &MpcConfig,
    model: &ControlModel,
    initial_conditions: &[DVector<f64>],
    t_end: f64,
) -> Result<Vec<ClosedLoopResult>> {
    initial_conditions
        .par_iter()
        .map(|x0| run_closed_loop(spec, config, model, x0, t_end))
        .collect()
}
