//! Monomial candidate-function dictionaries and their data matrices.
//!
//! A `Dictionary` is an ordered set of monomials theta_k(x) = prod x_i^{a_i}.
//! From it we build the two matrices of the generator regression: Theta(X)
//! with entries theta_k(x_i), and Gamma(X, Xdot) with entries
//! grad theta_k(x_i) . xdot_i. Candidate conserved quantities are expressed
//! as coefficient vectors over the same term order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered monomial basis. Terms are sorted by total degree, then
/// lexicographically with the exponent of x1 decreasing first, so for n = 3:
/// x1, x2, x3, x1^2, x1 x2, x1 x3, x2^2, x2 x3, x3^2, ...
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dictionary {
    pub state_dim: usize,
    pub max_degree: u32,
    pub include_constant: bool,
    /// Exponent multi-indices, one per term.
    pub terms: Vec<Vec<u32>>,
}

fn multi_indices_of_degree(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![d]];
    }
    let mut out = Vec::new();
    for first in (0..=d).rev() {
        for mut rest in multi_indices_of_degree(n - 1, d - first) {
            let mut idx = Vec::with_capacity(n);
            idx.push(first);
            idx.append(&mut rest);
            out.push(idx);
        }
    }
    out
}

/// Build the graded-lex monomial dictionary of degrees 1..=p (0..=p when the
/// constant term is included).
pub fn build_dictionary(n: usize, p: u32, include_constant: bool) -> Result<Dictionary> {
    if n < 1 || p < 1 {
        return Err(Error::invalid("dictionary needs n >= 1 and p >= 1"));
    }
    let mut terms = Vec::new();
    let start = if include_constant { 0 } else { 1 };
    for d in start..=p {
        terms.extend(multi_indices_of_degree(n, d));
    }
    Ok(Dictionary { state_dim: n, max_degree: p, include_constant, terms })
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Position of the term with the given exponents, if present.
    pub fn term_index(&self, multi_index: &[u32]) -> Option<usize> {
        self.terms.iter().position(|t| t == multi_index)
    }

    fn eval_term(&self, k: usize, x: &[f64]) -> f64 {
        self.terms[k]
            .iter()
            .zip(x)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }

    fn grad_term(&self, k: usize, x: &[f64]) -> DVector<f64> {
        let alpha = &self.terms[k];
        let mut g = DVector::zeros(self.state_dim);
        for j in 0..self.state_dim {
            if alpha[j] == 0 {
                continue;
            }
            let mut v = alpha[j] as f64;
            for (i, &a) in alpha.iter().enumerate() {
                let p = if i == j { a - 1 } else { a };
                v *= x[i].powi(p as i32);
            }
            g[j] = v;
        }
        g
    }
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} contains non-finite entries")));
    }
    Ok(())
}

/// Theta(X): entry (i, k) = theta_k(x_i).
pub fn eval_theta(dict: &Dictionary, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != dict.state_dim {
        return Err(Error::invalid(format!(
            "data has {} columns, dictionary expects {}",
            x.ncols(),
            dict.state_dim
        )));
    }
    check_finite("state data", x)?;
    let m = x.nrows();
    let mut out = DMatrix::zeros(m, dict.len());
    let mut row = vec![0.0; dict.state_dim];
    for i in 0..m {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        for k in 0..dict.len() {
            out[(i, k)] = dict.eval_term(k, &row);
        }
    }
    Ok(out)
}

/// Gamma(X, Xdot): entry (i, k) = grad theta_k(x_i) . xdot_i, with analytic
/// monomial gradients.
pub fn eval_gamma(dict: &Dictionary, x: &DMatrix<f64>, xdot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != xdot.shape() {
        return Err(Error::invalid("states and derivatives have different shapes"));
    }
    if x.ncols() != dict.state_dim {
        return Err(Error::invalid(format!(
            "data has {} columns, dictionary expects {}",
            x.ncols(),
            dict.state_dim
        )));
    }
    check_finite("state data", x)?;
    check_finite("derivative data", xdot)?;
    let m = x.nrows();
    let mut out = DMatrix::zeros(m, dict.len());
    let mut row = vec![0.0; dict.state_dim];
    for i in 0..m {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        for k in 0..dict.len() {
            let g = dict.grad_term(k, &row);
            let mut acc = 0.0;
            for j in 0..dict.state_dim {
                acc += g[j] * xdot[(i, j)];
            }
            out[(i, k)] = acc;
        }
    }
    Ok(out)
}

/// Gradient of the whole dictionary at one point: row k = grad theta_k(x).
pub fn grad_theta_at(dict: &Dictionary, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    if x.len() != dict.state_dim {
        return Err(Error::invalid("point dimension does not match dictionary"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("point has non-finite entries"));
    }
    let xs = x.as_slice();
    let mut out = DMatrix::zeros(dict.len(), dict.state_dim);
    for k in 0..dict.len() {
        out.row_mut(k).copy_from_slice(dict.grad_term(k, xs).as_slice());
    }
    Ok(out)
}

/// A scalar function F = Theta(x) . coefficients over a dictionary's term
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub dictionary: Dictionary,
    pub coefficients: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct SparseTerm {
    multi_index: Vec<u32>,
    coefficient: f64,
}

impl CoefficientVector {
    pub fn new(dictionary: Dictionary, coefficients: DVector<f64>) -> Result<Self> {
        if coefficients.len() != dictionary.len() {
            return Err(Error::invalid(format!(
                "coefficient length {} does not match dictionary size {}",
                coefficients.len(),
                dictionary.len()
            )));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients contain non-finite entries"));
        }
        Ok(CoefficientVector { dictionary, coefficients })
    }

    /// Build from (multi-index, value) pairs; unknown terms are an error.
    pub fn from_terms(dictionary: Dictionary, terms: &[(&[u32], f64)]) -> Result<Self> {
        let mut c = DVector::zeros(dictionary.len());
        for (mi, v) in terms {
            let k = dictionary
                .term_index(mi)
                .ok_or_else(|| Error::invalid(format!("term {mi:?} is not in the dictionary")))?;
            c[k] = *v;
        }
        CoefficientVector::new(dictionary, c)
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        (0..self.dictionary.len())
            .map(|k| self.coefficients[k] * self.dictionary.eval_term(k, x.as_slice()))
            .sum()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dictionary.state_dim);
        for k in 0..self.dictionary.len() {
            let c = self.coefficients[k];
            if c != 0.0 {
                g += c * self.dictionary.grad_term(k, x.as_slice());
            }
        }
        g
    }

    /// JSON array of `{multi_index, coefficient}` pairs, zeros omitted.
    pub fn to_sparse_json(&self) -> serde_json::Value {
        let terms: Vec<SparseTerm> = (0..self.dictionary.len())
            .filter(|&k| self.coefficients[k] != 0.0)
            .map(|k| SparseTerm {
                multi_index: self.dictionary.terms[k].clone(),
                coefficient: self.coefficients[k],
            })
            .collect();
        serde_json::to_value(terms).expect("sparse term serialization")
    }

    pub fn from_sparse_json(dictionary: Dictionary, value: &serde_json::Value) -> Result<Self> {
        let terms: Vec<SparseTerm> =
            serde_json::from_value(value.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let mut c = DVector::zeros(dictionary.len());
        for t in terms {
            let k = dictionary
                .term_index(&t.multi_index)
                .ok_or_else(|| Error::Parse(format!("term {:?} is not in the dictionary", t.multi_index)))?;
            c[k] = t.coefficient;
        }
        CoefficientVector::new(dictionary, c)
    }
}

/// Coefficients of `sum_i w_i x_i^2` — the form of both conserved quantities
/// of the rigid body (angular momentum has w = 1/2, kinetic energy
/// w_i = 1/(2 I_i)).
pub fn diagonal_quadratic(dict: &Dictionary, weights: &[f64]) -> Result<CoefficientVector> {
    if weights.len() != dict.state_dim {
        return Err(Error::invalid("one quadratic weight per coordinate required"));
    }
    let mut c = DVector::zeros(dict.len());
    for (i, &w) in weights.iter().enumerate() {
        let mut mi = vec![0u32; dict.state_dim];
        mi[i] = 2;
        let k = dict
            .term_index(&mi)
            .ok_or_else(|| Error::invalid("dictionary lacks the diagonal quadratic terms"))?;
        c[k] = w;
    }
    CoefficientVector::new(dict.clone(), c)
}

/// Second-order finite differences on a (possibly nonuniform) strictly
/// increasing grid: three-point central stencil in the interior, one-sided
/// three-point stencils at the endpoints, so all m rows are kept.
pub fn differentiate_trajectory(times: &[f64], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = times.len();
    if m < 3 {
        return Err(Error::invalid("numerical differentiation needs at least 3 samples"));
    }
    if x.nrows() != m {
        return Err(Error::invalid("sample count disagrees between times and states"));
    }
    if !times.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    check_finite("state data", x)?;
    let n = x.ncols();
    let mut out = DMatrix::zeros(m, n);
    for c in 0..n {
        for r in 0..m {
            // Stencil anchored at the first interior-capable triple.
            let (i0, i1, i2) = if r == 0 {
                (0, 1, 2)
            } else if r == m - 1 {
                (m - 3, m - 2, m - 1)
            } else {
                (r - 1, r, r + 1)
            };
            let h1 = times[i1] - times[i0];
            let h2 = times[i2] - times[i1];
            let (f0, f1, f2) = (x[(i0, c)], x[(i1, c)], x[(i2, c)]);
            // Written as weighted differences so a constant column
            // differentiates to exactly zero.
            out[(r, c)] = if r == 0 {
                (h1 + h2) / (h1 * h2) * (f1 - f0) - h1 / (h2 * (h1 + h2)) * (f2 - f0)
            } else if r == m - 1 {
                h2 / (h1 * (h1 + h2)) * (f0 - f2) - (h1 + h2) / (h1 * h2) * (f1 - f2)
            } else {
                h1 / (h2 * (h1 + h2)) * (f2 - f1) - h2 / (h1 * (h1 + h2)) * (f0 - f1)
            };
        }
    }
    Ok(out)
}
