//! Randomized property checks for the algebraic building blocks.

use crate::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn coeff_vec(dict: &Dictionary, raw: &[f64]) -> CoefficientVector {
    CoefficientVector {
        dictionary: dict.clone(),
        coefficients: DVector::from_row_slice(raw),
    }
}

fn monomial(exponents: &[u32], x: &DVector<f64>) -> f64 {
    exponents
        .iter()
        .zip(x.iter())
        .map(|(&e, &xi)| xi.powi(e as i32))
        .product()
}

proptest! {
    /// {F, G} = -{G, F} for arbitrary cubic polynomials and evaluation points.
    #[test]
    fn bracket_is_antisymmetric(
        cf in prop::collection::vec(-2.0f64..2.0, 19),
        cg in prop::collection::vec(-2.0f64..2.0, 19),
        x in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let dict = build_dictionary(3, 3, false).unwrap();
        let f = coeff_vec(&dict, &cf);
        let g = coeff_vec(&dict, &cg);
        let x = DVector::from_vec(x);
        let fg = bracket_eval(BracketKind::LiePoissonSo3, &f, &g, &x).unwrap();
        let gf = bracket_eval(BracketKind::LiePoissonSo3, &g, &f, &x).unwrap();
        prop_assert!((fg + gf).abs() <= 1e-12 * (1.0 + fg.abs()));
    }

    /// |x|^2/2 commutes with everything under the so(3) bracket.
    #[test]
    fn squared_norm_is_a_casimir(
        cg in prop::collection::vec(-2.0f64..2.0, 19),
        x in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let dict = build_dictionary(3, 3, false).unwrap();
        let casimir = diagonal_quadratic(&dict, &[0.5, 0.5, 0.5]).unwrap();
        let g = coeff_vec(&dict, &cg);
        let x = DVector::from_vec(x);
        let v = bracket_eval(BracketKind::LiePoissonSo3, &casimir, &g, &x).unwrap();
        prop_assert!(v.abs() <= 1e-12 * (1.0 + x.norm().powi(4)));
    }

    /// The row-major Kronecker row reproduces g . (B u) for every B.
    #[test]
    fn kron_row_matches_bilinear_form(
        g in prop::collection::vec(-5.0f64..5.0, 3),
        u in prop::collection::vec(-5.0f64..5.0, 4),
        b in prop::collection::vec(-5.0f64..5.0, 12),
    ) {
        let g = DVector::from_vec(g);
        let u = DVector::from_vec(u);
        let bm = DMatrix::from_row_slice(3, 4, &b);
        let direct = g.dot(&(&bm * &u));
        let via_row = kron_row(&g, &u).dot(&DVector::from_row_slice(&b));
        prop_assert!((direct - via_row).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    /// Dictionary evaluation is multiplicative under exponent addition.
    #[test]
    fn monomials_multiply_by_adding_exponents(
        a in prop::collection::vec(0u32..2, 3),
        b in prop::collection::vec(0u32..2, 3),
        x in prop::collection::vec(0.1f64..2.0, 3),
    ) {
        let deg: u32 = a.iter().chain(b.iter()).sum();
        prop_assume!(deg >= 1);
        let dict = build_dictionary(3, deg, true).unwrap();
        let x = DVector::from_vec(x);
        let sum: Vec<u32> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let product = monomial(&a, &x) * monomial(&b, &x);
        let combined = monomial(&sum, &x);
        prop_assert!((product - combined).abs() <= 1e-12 * (1.0 + combined.abs()));
        // every exponent pattern of this degree is present exactly once
        prop_assert!(dict.term_index(&sum).is_some());
    }
}
