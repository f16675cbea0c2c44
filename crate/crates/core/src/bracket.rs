//! Poisson-bracket evaluation and bracket-based discovery.
//!
//! Two brackets are supported: the canonical bracket on paired (q, p)
//! coordinates and the Lie-Poisson bracket underlying rigid-body dynamics,
//!
//! ```text
//!   {F, G}(x) = -x . (grad F x grad G),        x in R^3.
//! ```
//!
//! Identified conserved quantities must pairwise Poisson-commute (be in
//! involution); checking this on data is an independent consistency test of
//! the null-space discovery. Given a known Hamiltonian H = Theta xi_H the
//! same bracket also yields a linear problem for further constants of motion:
//! rows of the D matrix evaluate {upsilon_j, H} on data, so null vectors of D
//! are candidate invariants, and the vector field itself is recovered as
//! f_i = {x_i, H}.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::discovery::{null_space, InvariantSubspace};
use crate::error::{Error, Result};
use crate::features::{grad_theta_at, CoefficientVector, Dictionary};

/// Which Poisson structure to evaluate.
///
/// `Canonical` pairs coordinates as x = (q_1..q_k, p_1..p_k). For
/// `LiePoissonSo3` the sign convention follows {F,G} = <-x, grad F x grad G>;
/// the same source sometimes writes the opposite ordering, but only this sign
/// reproduces the rigid-body equations via f_i = {x_i, H}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketKind {
    Canonical,
    LiePoissonSo3,
}

impl BracketKind {
    fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            BracketKind::Canonical if n % 2 != 0 || n == 0 => {
                Err(Error::invalid("canonical bracket needs an even state dimension"))
            }
            BracketKind::LiePoissonSo3 if n != 3 => {
                Err(Error::invalid("the so(3) Lie-Poisson bracket needs n = 3"))
            }
            _ => Ok(()),
        }
    }
}

/// Evaluate {F, G} at a point.
pub fn bracket_eval(
    kind: BracketKind,
    f: &CoefficientVector,
    g: &CoefficientVector,
    x: &DVector<f64>,
) -> Result<f64> {
    let n = x.len();
    kind.check_dim(n)?;
    if f.dictionary.state_dim != n || g.dictionary.state_dim != n {
        return Err(Error::invalid("coefficient vectors do not match the state dimension"));
    }
    let gf = f.gradient(x);
    let gg = g.gradient(x);
    Ok(match kind {
        BracketKind::Canonical => {
            let k = n / 2;
            (0..k).map(|j| gf[j] * gg[k + j] - gf[k + j] * gg[j]).sum()
        }
        BracketKind::LiePoissonSo3 => {
            let xf = Vector3::new(gf[0], gf[1], gf[2]);
            let xg = Vector3::new(gg[0], gg[1], gg[2]);
            -Vector3::new(x[0], x[1], x[2]).dot(&xf.cross(&xg))
        }
    })
}

/// Pairwise RMS bracket magnitudes of candidate invariants over data points.
/// The diagonal is exactly zero (antisymmetry).
pub fn involution_check(
    kind: BracketKind,
    candidates: &[CoefficientVector],
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if candidates.is_empty() {
        return Err(Error::invalid("at least one candidate required"));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("no data points supplied"));
    }
    let d = candidates.len();
    let m = x.nrows();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let mut acc = 0.0;
            for r in 0..m {
                let p = x.row(r).transpose();
                let v = bracket_eval(kind, &candidates[i], &candidates[j], &p)?;
                acc += v * v;
            }
            let rms = (acc / m as f64).sqrt();
            out[(i, j)] = rms;
            out[(j, i)] = rms;
        }
    }
    Ok(out)
}

/// Partial derivative of F = Theta xi with respect to coordinate `i`
/// (1-based) at `x`.
pub fn basis_partial(
    dict: &Dictionary,
    xi: &CoefficientVector,
    i: usize,
    x: &DVector<f64>,
) -> Result<f64> {
    if xi.dictionary != *dict {
        return Err(Error::invalid("coefficient vector uses a different dictionary"));
    }
    if i == 0 || i > dict.state_dim {
        return Err(Error::invalid(format!(
            "coordinate index {i} out of range 1..={}",
            dict.state_dim
        )));
    }
    Ok(xi.gradient(x)[i - 1])
}

/// D matrix for bracket-based discovery: entry (i, j) = {upsilon_j, H}(x_i)
/// with H = Theta xi_H, assembled from gradient rows so the two dictionaries
/// stay independent.
pub fn build_d_matrix(
    theta: &Dictionary,
    xi_h: &CoefficientVector,
    upsilon: &Dictionary,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if theta.state_dim != 3 || upsilon.state_dim != 3 {
        return Err(Error::Unsupported(
            "bracket-based discovery is implemented for n = 3 only".into(),
        ));
    }
    if xi_h.dictionary != *theta {
        return Err(Error::invalid("Hamiltonian coefficients use a different dictionary"));
    }
    if x.ncols() != 3 {
        return Err(Error::invalid("data must have 3 columns"));
    }
    let m = x.nrows();
    let r = upsilon.len();
    let mut out = DMatrix::zeros(m, r);
    for i in 0..m {
        let p = x.row(i).transpose();
        let gh = xi_h.gradient(&p);
        let gu = grad_theta_at(upsilon, &p)?; // r x 3
        for j in 0..r {
            // {upsilon_j, H} = -x . (grad upsilon_j x grad H)
            //               =  x1 (dH2 du3 - dH3 du2) + cyclic
            out[(i, j)] = p[0] * (gh[1] * gu[(j, 2)] - gh[2] * gu[(j, 1)])
                + p[1] * (gh[2] * gu[(j, 0)] - gh[0] * gu[(j, 2)])
                + p[2] * (gh[0] * gu[(j, 1)] - gh[1] * gu[(j, 0)]);
        }
    }
    Ok(out)
}

/// Null space of the D matrix: candidate constants of motion C = Upsilon eta
/// in involution with the given Hamiltonian on the data.
pub fn discover_via_bracket(
    theta: &Dictionary,
    xi_h: &CoefficientVector,
    upsilon: &Dictionary,
    x: &DMatrix<f64>,
    rank_tolerance: f64,
) -> Result<InvariantSubspace> {
    let d = build_d_matrix(theta, xi_h, upsilon, x)?;
    null_space(upsilon, &d, 0.0, rank_tolerance)
}

/// Reconstruct the vector field from a Hamiltonian: f_i(x) = {x_i, H}, which
/// for the so(3) bracket is f = x x grad H.
pub fn recover_vector_field(
    theta: &Dictionary,
    xi_h: &CoefficientVector,
    x: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    if theta.state_dim != 3 {
        return Err(Error::Unsupported("vector-field recovery needs n = 3".into()));
    }
    if xi_h.dictionary != *theta {
        return Err(Error::invalid("Hamiltonian coefficients use a different dictionary"));
    }
    let p = DVector::from_vec(vec![x.x, x.y, x.z]);
    let g = xi_h.gradient(&p);
    Ok(x.cross(&Vector3::new(g[0], g[1], g[2])))
}
