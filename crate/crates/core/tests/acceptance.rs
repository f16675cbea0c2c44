//! End-to-end acceptance gate. Each test prints one PASS/FAIL line per
//! criterion (or per clause) and asserts the stated tolerance.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use conserved_core::control::CONVERGENCE_TOL;
use conserved_core::systems::{rk4_step, sample_momentum_spread, DerivativeScheme};
use conserved_core::*;

const INERTIA: [f64; 3] = [1.0, 0.5, 1.0 / 3.0];
const SEED: u64 = 42;

struct Fixture {
    dict: Dictionary,
    ensemble: Vec<TrajectoryDataset>,
    subspace: InvariantSubspace,
    discovery_time: Duration,
    l: CoefficientVector,
    h: CoefficientVector,
}

fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let dict = build_dictionary(3, 3, false).unwrap();
        let spec = SystemSpec::rigid_body(INERTIA).unwrap();
        // Initial conditions spread over momentum spheres of different radii:
        // a single level set cannot distinguish a candidate from the same
        // candidate times |x|^2 / r^2 and would inflate the null space.
        let ics: Vec<DVector<f64>> = sample_momentum_spread(0.5, 1.5, 114, SEED)
            .unwrap()
            .into_iter()
            .map(|p| DVector::from_vec(vec![p.x, p.y, p.z]))
            .collect();
        let start = Instant::now();
        let ensemble = simulate_ensemble(&spec, &ics, None, 10.0, 0.01).unwrap();
        let a = build_generator_matrix_stacked(&dict, &ensemble, 0.0).unwrap();
        let subspace = null_space(&dict, &a, 0.0, 1e-6).unwrap();
        let discovery_time = start.elapsed();
        let l = diagonal_quadratic(&dict, &[0.5, 0.5, 0.5]).unwrap();
        let h = diagonal_quadratic(&dict, &[0.5, 1.0, 1.5]).unwrap();
        Fixture { dict, ensemble, subspace, discovery_time, l, h }
    })
}

fn analytic_pair(fix: &Fixture) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(fix.dict.len(), 2);
    m.set_column(0, &fix.l.coefficients);
    m.set_column(1, &fix.h.coefficients);
    m
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("[{criterion}] {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion} failed: {detail}");
}

#[test]
fn criterion_01_null_space_dimension_and_gap() {
    let fix = fixture();
    let s = &fix.subspace.singular_values;
    let p = fix.dict.len();
    let r_last = s[p - 1] / s[0];
    let r_prev = s[p - 2] / s[0];
    let r_gap = s[p - 3] / s[0];
    let dim_ok = fix.subspace.kernel_dimension() == 2;
    let gaps_ok = r_last <= 1e-8 && r_prev <= 1e-8 && r_gap >= 1e-4;
    let time_ok = fix.discovery_time <= Duration::from_secs(60);
    report(
        "criterion 1",
        dim_ok && gaps_ok && time_ok,
        &format!(
            "kernel dim {}, sigma ratios {:.2e}/{:.2e} (null) vs {:.2e} (gap), {:.1?}",
            fix.subspace.kernel_dimension(),
            r_prev,
            r_last,
            r_gap,
            fix.discovery_time
        ),
    );
}

#[test]
fn criterion_02_subspace_matches_analytic_invariants() {
    let fix = fixture();
    let angle = largest_principal_angle(&fix.subspace.basis, &analytic_pair(fix)).unwrap();
    report(
        "criterion 2",
        angle <= 1e-6,
        &format!("largest principal angle {angle:.3e} rad (<= 1e-6)"),
    );
}

#[test]
fn criterion_03_sparsification_recovers_angular_momentum() {
    let fix = fixture();
    let cands = sparsify(&fix.subspace, 0.2, 500).unwrap();
    let l_dir = &fix.l.coefficients / fix.l.coefficients.norm();
    let best = cands
        .iter()
        .map(|c| c.coefficients.coefficients.dot(&l_dir).abs())
        .fold(0.0_f64, f64::max);
    report(
        "criterion 3",
        best >= 1.0 - 1e-6,
        &format!("best cosine similarity to the angular-momentum direction: {best:.12}"),
    );
}

#[test]
fn criterion_04_identified_pair_is_in_involution() {
    let fix = fixture();
    // every 10th sample of every trajectory
    let rows: Vec<usize> = (0..fix.ensemble[0].len()).step_by(10).collect();
    let mut pts = DMatrix::zeros(rows.len() * fix.ensemble.len(), 3);
    for (ti, traj) in fix.ensemble.iter().enumerate() {
        for (k, &r) in rows.iter().enumerate() {
            pts.row_mut(ti * rows.len() + k)
                .copy_from(&traj.states.row(r));
        }
    }
    let c1 = fix.subspace.column(0);
    let c2 = fix.subspace.column(1);
    let m = involution_check(BracketKind::LiePoissonSo3, &[c1, c2], &pts).unwrap();
    report(
        "criterion 4",
        m[(0, 1)] <= 1e-3,
        &format!("RMS |{{C1, C2}}| over the ensemble: {:.3e} (<= 1e-3)", m[(0, 1)]),
    );
}

#[test]
fn criterion_05_bracket_discovery_recovers_angular_momentum() {
    let fix = fixture();
    let pts_v = sample_momentum_spread(0.5, 1.5, 120, SEED + 1).unwrap();
    let pts = DMatrix::from_fn(pts_v.len(), 3, |r, c| pts_v[r][c]);
    let sub = discover_via_bracket(&fix.dict, &fix.h, &fix.dict, &pts, 1e-6).unwrap();
    let l_dir = DMatrix::from_column_slice(fix.dict.len(), 1, fix.l.coefficients.as_slice());
    let angle = largest_principal_angle(&l_dir, &sub.basis).unwrap();
    report(
        "criterion 5",
        angle <= 1e-6,
        &format!(
            "D-matrix kernel dim {}, principal angle to the L direction {angle:.3e} rad",
            sub.kernel_dimension()
        ),
    );
}

#[test]
fn criterion_06_vector_field_recovery() {
    let fix = fixture();
    let inertia = Vector3::new(INERTIA[0], INERTIA[1], INERTIA[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let x = Vector3::new(
            2.0 * rng.random::<f64>() - 1.0,
            2.0 * rng.random::<f64>() - 1.0,
            2.0 * rng.random::<f64>() - 1.0,
        );
        let fa = rigid_body_rhs(&x, &Vector3::zeros(), &inertia).unwrap();
        let fr = recover_vector_field(&fix.dict, &fix.h, &x).unwrap();
        worst = worst.max((fa - fr).amax());
    }
    report(
        "criterion 6",
        worst <= 1e-10,
        &format!("worst componentwise error over 1000 random points: {worst:.3e}"),
    );
}

#[test]
fn criterion_07_control_matrix_estimation() {
    let fix = fixture();
    let forced = |b: DMatrix<f64>| {
        let spec =
            SystemSpec::new(conserved_core::systems::Dynamics::RigidBody { inertia: INERTIA }, b)
                .unwrap();
        integrate(
            &spec,
            &DVector::from_vec(vec![0.3, 0.9, -0.2]),
            Some(&multisine_forcing()),
            10.0,
            0.01,
        )
        .unwrap()
    };
    let est = estimate_b(&fix.dict, &fix.subspace, &forced(DMatrix::identity(3, 3)), 0.0).unwrap();
    let err_id = (&est.b_hat - DMatrix::identity(3, 3)).amax();
    let b_syn = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, 1.0]));
    let est_syn = estimate_b(&fix.dict, &fix.subspace, &forced(b_syn.clone()), 0.0).unwrap();
    let err_syn = (&est_syn.b_hat - &b_syn).amax();
    report(
        "criterion 7",
        err_id <= 1e-2 && err_syn <= 1e-6,
        &format!(
            "identity recovery error {err_id:.3e} (<= 1e-2), synthetic-B error {err_syn:.3e} (<= 1e-6)"
        ),
    );
}

#[test]
fn criterion_08_closed_loop_control() {
    let fix = fixture();
    let spec = SystemSpec::rigid_body(INERTIA).unwrap();
    let config = MpcConfig {
        q_weight: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0])),
        r_weight: DMatrix::from_diagonal(&DVector::from_vec(vec![1e-3, 1e-3, 1e-3])),
        horizon_steps: 10,
        plant_dt: 0.01,
        substeps: 10,
        reference_state: DVector::from_vec(vec![0.0, 1.0, 0.0]),
        input_bounds: None,
    };
    let ics: Vec<DVector<f64>> = sample_momentum_sphere(0.5, 114, SEED)
        .unwrap()
        .into_iter()
        .map(|p| DVector::from_vec(vec![p.x, p.y, p.z]))
        .collect();
    let start = Instant::now();

    let forced_spec =
        SystemSpec::new(conserved_core::systems::Dynamics::RigidBody { inertia: INERTIA },
                        DMatrix::identity(3, 3))
            .unwrap();
    let forced = integrate(
        &forced_spec,
        &DVector::from_vec(vec![0.3, 0.9, -0.2]),
        Some(&multisine_forcing()),
        10.0,
        0.01,
    )
    .unwrap();
    let b_hat = estimate_b(&fix.dict, &fix.subspace, &forced, 0.0).unwrap().b_hat;

    let mut clause_coord = true;
    let mut clause_state = true;
    let mut worst_coord = 0.0_f64;
    let mut worst_state = 0.0_f64;
    for b in [DMatrix::identity(3, 3), b_hat] {
        let model = ControlModel::new(fix.subspace.clone(), b).unwrap();
        let c_ref = conserved_coordinates(&fix.dict, &fix.subspace, &config.reference_state).unwrap();
        let results = run_closed_loop_ensemble(&spec, &config, &model, &ics, 20.0).unwrap();
        for res in &results {
            let last = res.coordinates.row(res.times.len() - 1).transpose();
            let coord_err = (last - &c_ref).amax();
            worst_coord = worst_coord.max(coord_err);
            clause_coord &= coord_err <= CONVERGENCE_TOL;
            worst_state = worst_state.max(res.final_distance_to_reference);
            clause_state &= res.final_distance_to_reference <= 0.05;
        }
    }
    let elapsed = start.elapsed();
    println!(
        "[criterion 8, coordinates] {} — worst |C(t_end) - C*| = {worst_coord:.3e} (<= 1e-2), {elapsed:.1?}",
        if clause_coord { "PASS" } else { "FAIL" }
    );
    println!(
        "[criterion 8, final state] {} — worst distance to +-reference = {worst_state:.3e} (<= 0.05)",
        if clause_state { "PASS" } else { "FAIL" }
    );
    assert!(clause_coord, "coordinate convergence failed: worst error {worst_coord:.3e}");
    assert!(elapsed <= Duration::from_secs(300), "runtime {elapsed:?} exceeded 5 min");
    // The reference is a saddle of the unforced flow and the gradients of
    // both coordinates are parallel there, so the transverse unstable mode is
    // invisible in C and the controller cannot pin the state itself: every
    // trajectory visits +-reference but escapes along the unstable manifold.
    // No choice of t_end puts all 114 states within 0.05 simultaneously.
    assert!(
        clause_state,
        "final-state clause failed as analyzed: worst distance {worst_state:.3e} > 0.05"
    );
}

#[test]
fn criterion_09_property_suites() {
    let fix = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut unit = move || -> f64 { 2.0 * rand::Rng::random::<f64>(&mut rng) - 1.0 };

    // bracket antisymmetry / bilinearity / Casimir on 1e4 random inputs
    let mut worst_anti = 0.0_f64;
    let mut worst_bilin = 0.0_f64;
    let mut worst_casimir = 0.0_f64;
    for _ in 0..10_000 {
        let f1 = CoefficientVector::new(
            fix.dict.clone(),
            DVector::from_fn(fix.dict.len(), |_, _| unit()),
        )
        .unwrap();
        let f2 = CoefficientVector::new(
            fix.dict.clone(),
            DVector::from_fn(fix.dict.len(), |_, _| unit()),
        )
        .unwrap();
        let g = CoefficientVector::new(
            fix.dict.clone(),
            DVector::from_fn(fix.dict.len(), |_, _| unit()),
        )
        .unwrap();
        let x = DVector::from_fn(3, |_, _| unit());
        let (a, b) = (unit(), unit());
        let fg = bracket_eval(BracketKind::LiePoissonSo3, &f1, &g, &x).unwrap();
        let gf = bracket_eval(BracketKind::LiePoissonSo3, &g, &f1, &x).unwrap();
        worst_anti = worst_anti.max((fg + gf).abs());
        let comb =
            CoefficientVector::new(fix.dict.clone(), a * &f1.coefficients + b * &f2.coefficients)
                .unwrap();
        let lhs = bracket_eval(BracketKind::LiePoissonSo3, &comb, &g, &x).unwrap();
        let rhs = a * fg + b * bracket_eval(BracketKind::LiePoissonSo3, &f2, &g, &x).unwrap();
        worst_bilin = worst_bilin.max((lhs - rhs).abs());
        let c = bracket_eval(BracketKind::LiePoissonSo3, &fix.l, &g, &x).unwrap();
        worst_casimir = worst_casimir.max(c.abs());
    }
    let brackets_ok = worst_anti <= 1e-12 && worst_bilin <= 1e-12 && worst_casimir <= 1e-12;

    // gradient rows vs central finite differences, relative 1e-6
    let x = DVector::from_fn(3, |_, _| unit());
    let grads = grad_theta_at(&fix.dict, &x).unwrap();
    let hstep = 1e-5;
    let mut grads_ok = true;
    for k in 0..fix.dict.len() {
        let term = CoefficientVector::from_terms(
            fix.dict.clone(),
            &[(fix.dict.terms[k].as_slice(), 1.0)],
        )
        .unwrap();
        for j in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += hstep;
            xm[j] -= hstep;
            let fd = (term.evaluate(&xp) - term.evaluate(&xm)) / (2.0 * hstep);
            grads_ok &= (grads[(k, j)] - fd).abs() / grads[(k, j)].abs().max(1.0) <= 1e-6;
        }
    }

    // RK4 order-4 convergence factor
    let decay = SystemSpec::linear_decay(1).unwrap();
    let end_err = |dt: f64| {
        let d = integrate(&decay, &DVector::from_vec(vec![1.0]), None, 1.0, dt).unwrap();
        (d.states[(d.len() - 1, 0)] - (-1.0_f64).exp()).abs()
    };
    let factor = end_err(0.01) / end_err(0.005);
    let order_ok = (14.0..=18.0).contains(&factor);

    // unforced conservation drift over the discovery ensemble
    let mut drift = 0.0_f64;
    for traj in &fix.ensemble {
        let x0 = traj.states.row(0).transpose();
        let l0 = fix.l.evaluate(&x0);
        let h0 = fix.h.evaluate(&x0);
        for r in 0..traj.len() {
            let x = traj.states.row(r).transpose();
            drift = drift.max((fix.l.evaluate(&x) - l0).abs());
            drift = drift.max((fix.h.evaluate(&x) - h0).abs());
        }
    }
    let drift_ok = drift <= 1e-8;

    // kron_row / vec(B) ordering identity
    let mut kron_ok = true;
    let mut rng2 = ChaCha8Rng::seed_from_u64(SEED + 10);
    for _ in 0..1000 {
        let g = DVector::from_fn(3, |_, _| 2.0 * rng2.random::<f64>() - 1.0);
        let u = DVector::from_fn(3, |_, _| 2.0 * rng2.random::<f64>() - 1.0);
        let b = DMatrix::from_fn(3, 3, |_, _| 2.0 * rng2.random::<f64>() - 1.0);
        let vec_b = DVector::from_fn(9, |k, _| b[(k / 3, k % 3)]);
        kron_ok &= (kron_row(&g, &u).dot(&vec_b) - g.dot(&(&b * &u))).abs() <= 1e-12;
    }

    report(
        "criterion 9",
        brackets_ok && grads_ok && order_ok && drift_ok && kron_ok,
        &format!(
            "brackets (anti {worst_anti:.1e}, bilin {worst_bilin:.1e}, casimir {worst_casimir:.1e}), \
             gradients {grads_ok}, RK4 factor {factor:.2}, drift {drift:.2e}, kron ordering {kron_ok}"
        ),
    );
}

#[test]
fn criterion_10_nonzero_eigenvalue_path() {
    let dict = build_dictionary(1, 3, false).unwrap();
    let spec = SystemSpec::linear_decay(1).unwrap();
    let data = integrate(&spec, &DVector::from_vec(vec![1.0]), None, 1.0, 0.01).unwrap();
    let a = build_generator_matrix(&dict, &data, -1.0).unwrap();
    let sub = null_space(&dict, &a, -1.0, 1e-6).unwrap();
    let dim_ok = sub.kernel_dimension() == 1;
    let direction_ok = dim_ok && sub.basis[(0, 0)].abs() >= 1.0 - 1e-10;
    let residual = if dim_ok {
        eigenfunction_residual(&dict, &sub.column(0), &data, -1.0).unwrap()
    } else {
        f64::INFINITY
    };
    report(
        "criterion 10",
        direction_ok && residual <= 1e-8,
        &format!(
            "kernel dim {}, |coefficient on x| {:.12}, residual {residual:.3e}",
            sub.kernel_dimension(),
            if dim_ok { sub.basis[(0, 0)].abs() } else { f64::NAN }
        ),
    );
}

// keep DerivativeScheme referenced so ingestion stays part of the public API
#[test]
fn csv_ingestion_round_trip_preserves_data() {
    let spec = SystemSpec::rigid_body(INERTIA).unwrap();
    let data = integrate(
        &spec,
        &DVector::from_vec(vec![0.2, 0.9, -0.1]),
        Some(&multisine_forcing()),
        0.2,
        0.01,
    )
    .unwrap();
    let dir = std::env::temp_dir().join(format!("acc_csv_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("t.csv");
    data.write_csv(&path).unwrap();
    let back = TrajectoryDataset::read_csv(&path).unwrap();
    assert_eq!(back.states, data.states);
    assert_eq!(back.derivative_scheme, DerivativeScheme::CentralDifference);
    // a closed-loop RK4 sub-step matches integrate's first step on the same grid
    let u = ForcingSignal::Constant { value: vec![0.0, 0.0, 0.0] };
    let x0 = DVector::from_vec(vec![0.2, 0.9, -0.1]);
    let stepped = rk4_step(&spec, &x0, 0.0, 0.01, Some(&u));
    let unforced = integrate(&spec, &x0, None, 0.02, 0.01).unwrap();
    assert!((stepped - unforced.states.row(1).transpose()).amax() <= 1e-14);
    std::fs::remove_dir_all(&dir).ok();
}
