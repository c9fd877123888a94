use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use gravcomp::gravity::{gravity_regressor, gravity_torque, sample_poses, stacked_regressor};
use gravcomp::identification::{identify, synth_dataset, IdentifyOptions};
use gravcomp::kinematics::{DhRow, JointState, LinkInertia, RobotModel};
use gravcomp::plant::{step, SimConfig};
use gravcomp::GravityParams;
use nalgebra::{DVector, Vector3};
use rand::SeedableRng;

fn chain(n: usize) -> RobotModel {
    let dh = (0..n)
        .map(|i| {
            let alpha = if i % 2 == 0 {
                std::f64::consts::FRAC_PI_2
            } else {
                0.0
            };
            DhRow::revolute(0.05, alpha, 0.3)
        })
        .collect();
    let links = (0..n)
        .map(|_| LinkInertia::new(0.5, [-0.15, 0.01, 0.0]))
        .collect();
    RobotModel::new("bench", dh, links, Vector3::new(0.0, 0.0, -9.81), None).unwrap()
}

fn kinematics_and_gravity(c: &mut Criterion) {
    let model = chain(7);
    let params = GravityParams::from_model(&model);
    let q = vec![0.3; 7];
    c.bench_function("gravity_torque_7dof", |b| {
        b.iter(|| gravity_torque(&model, black_box(&q), &params).unwrap())
    });
    c.bench_function("gravity_regressor_7dof", |b| {
        b.iter(|| gravity_regressor(&model, black_box(&q)).unwrap())
    });
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let poses = sample_poses(&model, 200, &mut rng);
    c.bench_function("stacked_regressor_200_poses", |b| {
        b.iter(|| stacked_regressor(&model, black_box(&poses)).unwrap())
    });
}

fn identification(c: &mut Criterion) {
    let model = chain(7);
    let params = GravityParams::from_model(&model);
    let data = synth_dataset(&model, &params, 200, 0.01, 3).unwrap();
    c.bench_function("identify_200_poses", |b| {
        b.iter(|| identify(&model, black_box(&data), &IdentifyOptions::default()).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let model = chain(7);
    let params = GravityParams::from_model(&model);
    let config = SimConfig::new(7);
    let state = gravcomp::plant::PlantState {
        t: 0.0,
        joint: JointState::new(vec![0.2; 7], vec![0.1; 7]),
    };
    let tau = DVector::zeros(7);
    c.bench_function("plant_step_7dof", |b| {
        b.iter(|| step(black_box(&state), &tau, &model, &params, &config).unwrap())
    });
}

criterion_group!(benches, kinematics_and_gravity, identification, simulation);
criterion_main!(benches);
