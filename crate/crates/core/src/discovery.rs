//! Null-space identification of conserved quantities.
//!
//! A function F = Theta(x) xi is a generator eigenfunction with eigenvalue
//! lambda when (lambda Theta(X) - Gamma(X, Xdot)) xi = 0 on data. Conserved
//! quantities are the lambda = 0 case, so discovery reduces to extracting the
//! numerical null space of the stacked generator matrix by SVD and then
//! rotating the null basis towards sparse, interpretable directions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{eval_gamma, eval_theta, CoefficientVector, Dictionary};
use crate::systems::TrajectoryDataset;

/// Orthonormal basis of the identified eigenfunction subspace plus the full
/// singular spectrum it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSubspace {
    pub dictionary: Dictionary,
    /// P x d matrix with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// All singular values of the generator matrix, non-increasing.
    pub singular_values: DVector<f64>,
    pub rank_tolerance: f64,
    pub lambda: f64,
}

impl InvariantSubspace {
    pub fn kernel_dimension(&self) -> usize {
        self.basis.ncols()
    }

    /// Column c as a coefficient vector over the dictionary.
    pub fn column(&self, c: usize) -> CoefficientVector {
        CoefficientVector::new(self.dictionary.clone(), self.basis.column(c).into_owned())
            .expect("basis columns are finite and aligned by construction")
    }
}

/// `lambda * Theta(X) - Gamma(X, Xdot)` for one trajectory.
pub fn build_generator_matrix(
    dict: &Dictionary,
    data: &TrajectoryDataset,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if !lambda.is_finite() {
        return Err(Error::invalid("lambda must be finite"));
    }
    let gamma = eval_gamma(dict, &data.states, &data.derivatives)?;
    if lambda == 0.0 {
        return Ok(-gamma);
    }
    let theta = eval_theta(dict, &data.states)?;
    Ok(lambda * theta - gamma)
}

/// Generator matrices of several trajectories stacked row-wise.
pub fn build_generator_matrix_stacked(
    dict: &Dictionary,
    datasets: &[TrajectoryDataset],
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if datasets.is_empty() {
        return Err(Error::invalid("no trajectories supplied"));
    }
    let blocks = datasets
        .iter()
        .map(|d| build_generator_matrix(dict, d, lambda))
        .collect::<Result<Vec<_>>>()?;
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, dict.len());
    let mut at = 0;
    for b in &blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    Ok(out)
}

fn singular_triplet(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    // Tall systems: reduce by QR first, the SVD then runs on min(m,P) x P.
    let reduced;
    let work = if a.nrows() > 2 * a.ncols() {
        reduced = a.clone().qr().r();
        &reduced
    } else {
        a
    };
    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::DegenerateData("SVD did not produce V".into()))?;
    Ok((svd.singular_values, v_t))
}

/// Numerical null space of `a` with a relative singular-value threshold.
///
/// The returned basis columns are the right singular vectors whose singular
/// values fall below `rank_tolerance * sigma_max`; the full spectrum is kept
/// for reporting so the rank gap can be audited.
pub fn null_space(
    dict: &Dictionary,
    a: &DMatrix<f64>,
    lambda: f64,
    rank_tolerance: f64,
) -> Result<InvariantSubspace> {
    if !(rank_tolerance > 0.0 && rank_tolerance < 1.0) {
        return Err(Error::invalid("rank_tolerance must lie in (0, 1)"));
    }
    if a.nrows() == 0 || a.ncols() != dict.len() {
        return Err(Error::invalid("generator matrix shape does not match dictionary"));
    }
    let (sigma, v_t) = singular_triplet(a)?;
    let sigma_max = sigma.max();
    if !(sigma_max.is_finite() && sigma_max > 0.0) {
        return Err(Error::DegenerateData(
            "all singular values vanish; the data does not constrain the dictionary".into(),
        ));
    }
    let p = dict.len();
    // Right singular vectors for singular values below min(m, P) are an
    // arbitrary completion only when m < P; treat the missing directions as
    // exact null vectors with sigma = 0.
    let mut full_sigma = DVector::zeros(p);
    full_sigma.rows_mut(0, sigma.len()).copy_from(&sigma);
    let threshold = rank_tolerance * sigma_max;
    if v_t.nrows() < p {
        return Err(Error::DegenerateData(format!(
            "fewer samples ({}) than dictionary terms ({p}); null space is not determined",
            a.nrows()
        )));
    }
    let keep: Vec<usize> = (0..p).filter(|&k| full_sigma[k] <= threshold).collect();
    let mut basis = DMatrix::zeros(p, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        basis.set_column(c, &v_t.row(k).transpose());
    }
    Ok(InvariantSubspace {
        dictionary: dict.clone(),
        basis,
        singular_values: full_sigma,
        rank_tolerance,
        lambda,
    })
}

/// One sparsified direction plus whether the iteration stabilized within the
/// allowed iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCandidate {
    pub coefficients: CoefficientVector,
    pub converged: bool,
}

const CLEAN_REL_TOL: f64 = 1e-6;
const ADM_TOL: f64 = 1e-10;

fn soft_threshold(v: &DVector<f64>, lam: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - lam).max(0.0))
}

struct RoundResult {
    xi: DVector<f64>,
    q: DVector<f64>,
    converged: bool,
}

/// One deflation round: run the alternating soft-threshold / renormalize
/// iteration from every initializer and keep the best candidate by
/// (converged, sparsity after cleaning, l1 norm).
fn sparsify_round(basis: &DMatrix<f64>, l1_weight: f64, max_iters: usize) -> Option<RoundResult> {
    let p = basis.nrows();
    let mut inits: Vec<DVector<f64>> = Vec::new();
    for i in 0..p {
        let r = basis.row(i).transpose();
        let n = r.norm();
        if n > 0.0 {
            inits.push(r / n);
        }
    }
    // Row differences reach sparse directions whose sign pattern no single
    // row matches (e.g. coefficients of mixed sign).
    for i in 0..p {
        for j in (i + 1)..p {
            let r = basis.row(i).transpose() - basis.row(j).transpose();
            let n = r.norm();
            if n > 1e-300 {
                inits.push(r / n);
            }
        }
    }
    let mut best: Option<(bool, usize, f64, RoundResult)> = None;
    for q0 in inits {
        let mut q = q0;
        let mut converged = false;
        for _ in 0..max_iters {
            let v = basis * &q;
            let x = soft_threshold(&v, l1_weight);
            if x.norm() == 0.0 {
                break;
            }
            let mut qn = basis.transpose() * x;
            qn /= qn.norm();
            if (&qn - &q).norm() < ADM_TOL || (&qn + &q).norm() < ADM_TOL {
                q = qn;
                converged = true;
                break;
            }
            q = qn;
        }
        let v = basis * &q;
        let max_abs = v.amax();
        if !(max_abs.is_finite() && max_abs > 0.0) {
            continue;
        }
        let xi = v.map(|x| if x.abs() < CLEAN_REL_TOL * max_abs { 0.0 } else { x });
        let nnz = xi.iter().filter(|&&x| x != 0.0).count();
        let l1 = v.abs().sum();
        let better = match &best {
            None => true,
            Some((bc, bn, bl, _)) => {
                (converged, nnz, l1) < (*bc, *bn, *bl)
                    || (converged && !bc)
                    || (converged == *bc && (nnz, l1) < (*bn, *bl))
            }
        };
        if better {
            let xi = &xi / xi.norm();
            best = Some((converged, nnz, l1, RoundResult { xi, q: q.clone(), converged }));
        }
    }
    best.map(|(_, _, _, r)| r)
}

/// Rotate an orthonormal subspace basis towards sparse directions.
///
/// For each of d rounds, minimizes the l1 norm of `basis * q` over unit
/// vectors q by alternating soft-thresholding and renormalization, cleans
/// entries below 1e-6 of the largest, then deflates the found direction and
/// repeats on the orthogonal complement within the span. Outputs are unit
/// vectors with the largest-magnitude entry made positive.
pub fn sparsify(
    subspace: &InvariantSubspace,
    l1_weight: f64,
    max_iters: usize,
) -> Result<Vec<SparseCandidate>> {
    if subspace.kernel_dimension() == 0 {
        return Err(Error::invalid("subspace is empty"));
    }
    if !(l1_weight > 0.0 && l1_weight.is_finite()) || max_iters == 0 {
        return Err(Error::invalid("need l1_weight > 0 and max_iters >= 1"));
    }
    let mut basis = subspace.basis.clone();
    let mut out = Vec::new();
    loop {
        let d = basis.ncols();
        let round = sparsify_round(&basis, l1_weight, max_iters)
            .ok_or_else(|| Error::DegenerateData("sparsification produced no candidate".into()))?;
        let mut xi = round.xi;
        // Sign convention: largest-magnitude entry positive.
        let k = xi.iamax();
        if xi[k] < 0.0 {
            xi = -xi;
        }
        out.push(SparseCandidate {
            coefficients: CoefficientVector::new(subspace.dictionary.clone(), xi)?,
            converged: round.converged,
        });
        if d == 1 {
            break;
        }
        // Deflate: orthonormal complement of q inside the current span.
        let mut m = DMatrix::zeros(d, 1 + d);
        m.set_column(0, &round.q);
        m.view_mut((0, 1), (d, d)).copy_from(&DMatrix::identity(d, d));
        let qr = m.qr();
        let qfull = qr.q();
        basis = &basis * qfull.columns(1, d - 1);
    }
    Ok(out)
}

/// RMS over samples of |grad F . xdot - lambda F| for F = Theta xi.
pub fn eigenfunction_residual(
    dict: &Dictionary,
    xi: &CoefficientVector,
    data: &TrajectoryDataset,
    lambda: f64,
) -> Result<f64> {
    if xi.dictionary != *dict {
        return Err(Error::invalid("coefficient vector uses a different dictionary"));
    }
    let a = build_generator_matrix(dict, data, lambda)?;
    let r = a * &xi.coefficients;
    Ok((r.norm_squared() / data.len() as f64).sqrt())
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
/// With unequal dimensions this measures how far the smaller span is from
/// being contained in the larger one.
pub fn largest_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() == 0 || b.ncols() == 0 {
        return Err(Error::invalid("subspace bases must be non-empty with equal row counts"));
    }
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let m = qa.transpose() * qb;
    let sigma = m.svd(false, false).singular_values;
    // min(dim a, dim b) principal angles exist; the largest corresponds to
    // the smallest singular value.
    let smin = sigma.min().clamp(-1.0, 1.0);
    Ok(smin.acos())
}
