use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use std::hint::black_box;

use conserved_core::systems::sample_momentum_spread;
use conserved_core::*;

const INERTIA: [f64; 3] = [1.0, 0.5, 1.0 / 3.0];

fn ensemble(count: usize, t_end: f64) -> Vec<TrajectoryDataset> {
    let spec = SystemSpec::rigid_body(INERTIA).unwrap();
    let ics: Vec<DVector<f64>> = sample_momentum_spread(0.5, 1.5, count, 42)
        .unwrap()
        .into_iter()
        .map(|p| DVector::from_vec(vec![p.x, p.y, p.z]))
        .collect();
    simulate_ensemble(&spec, &ics, None, t_end, 0.01).unwrap()
}

fn bench_eval_gamma(c: &mut Criterion) {
    let dict = build_dictionary(3, 3, false).unwrap();
    let data = &ensemble(1, 10.0)[0];
    c.bench_function("eval_gamma_1001x19", |b| {
        b.iter(|| eval_gamma(&dict, black_box(&data.states), black_box(&data.derivatives)).unwrap())
    });
}

fn bench_null_space(c: &mut Criterion) {
    let dict = build_dictionary(3, 3, false).unwrap();
    let data = ensemble(20, 10.0);
    let a = build_generator_matrix_stacked(&dict, &data, 0.0).unwrap();
    c.bench_function("null_space_20020x19", |b| {
        b.iter(|| null_space(&dict, black_box(&a), 0.0, 1e-6).unwrap())
    });
}

fn bench_mpc_step(c: &mut Criterion) {
    let dict = build_dictionary(3, 3, false).unwrap();
    let l = diagonal_quadratic(&dict, &[0.5, 0.5, 0.5]).unwrap();
    let h = diagonal_quadratic(&dict, &[0.5, 1.0, 1.5]).unwrap();
    let mut basis = DMatrix::zeros(dict.len(), 2);
    basis.set_column(0, &l.coefficients);
    basis.set_column(1, &h.coefficients);
    let subspace = InvariantSubspace {
        dictionary: dict,
        basis,
        singular_values: DVector::zeros(19),
        rank_tolerance: 1e-6,
        lambda: 0.0,
    };
    let model = ControlModel::new(subspace, DMatrix::identity(3, 3)).unwrap();
    let config = MpcConfig {
        q_weight: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0])),
        r_weight: DMatrix::from_diagonal(&DVector::from_vec(vec![1e-3, 1e-3, 1e-3])),
        horizon_steps: 10,
        plant_dt: 0.01,
        substeps: 10,
        reference_state: DVector::from_vec(vec![0.0, 1.0, 0.0]),
        input_bounds: None,
    };
    let x = DVector::from_vec(vec![0.36, 0.48, 0.8]);
    c.bench_function("mpc_step", |b| {
        b.iter(|| mpc_step(black_box(&config), black_box(&model), black_box(&x)).unwrap())
    });
}

criterion_group!(benches, bench_eval_gamma, bench_null_space, bench_mpc_step);
criterion_main!(benches);
