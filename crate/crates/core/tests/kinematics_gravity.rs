mod common;

use gravcomp::gravity::{gravity_regressor, gravity_torque, potential_energy, GravityParams};
use gravcomp::kinematics::{
    com_jacobian, com_positions, dh_transform, forward_kinematics, RobotModel,
};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::Rng;

fn random_params(n: usize, rng: &mut impl Rng) -> GravityParams {
    GravityParams::new((0..4 * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Central difference of the potential along each joint.
fn potential_gradient(model: &RobotModel, q: &[f64], params: &GravityParams) -> Vec<f64> {
    let h = 1e-6;
    (0..q.len())
        .map(|k| {
            let mut qp = q.to_vec();
            let mut qm = q.to_vec();
            qp[k] += h;
            qm[k] -= h;
            (potential_energy(model, &qp, params).unwrap()
                - potential_energy(model, &qm, params).unwrap())
                / (2.0 * h)
        })
        .collect()
}

#[test]
fn torque_is_potential_gradient() {
    let mut rng = common::rng(11);
    let mut worst: f64 = 0.0;
    for i in 0..240 {
        let n = [1, 3, 7][i % 3];
        let model = common::random_chain(n, &mut rng);
        let q = common::random_q(n, &mut rng);
        let params = random_params(n, &mut rng);
        let tau = gravity_torque(&model, &q, &params).unwrap();
        for (t, fd) in tau.iter().zip(potential_gradient(&model, &q, &params)) {
            worst = worst.max((t - fd).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn com_jacobian_matches_finite_differences() {
    let mut rng = common::rng(12);
    let h = 1e-6;
    for i in 0..120 {
        let n = [1, 3, 7][i % 3];
        let model = common::random_chain(n, &mut rng);
        let q = common::random_q(n, &mut rng);
        let link = rng.random_range(0..n);
        let jac = com_jacobian(&model, &q, link).unwrap();
        for k in 0..n {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let fd = (com_positions(&model, &qp).unwrap()[link]
                - com_positions(&model, &qm).unwrap()[link])
                / (2.0 * h);
            assert!((jac.column(k) - fd).amax() < 1e-6, "link {link} joint {k}");
        }
    }
}

#[test]
fn regressor_reproduces_torque() {
    let mut rng = common::rng(13);
    for i in 0..100 {
        let n = [1, 3, 7][i % 3];
        let model = common::random_chain(n, &mut rng);
        let q = common::random_q(n, &mut rng);
        let params = random_params(n, &mut rng);
        let tau = gravity_torque(&model, &q, &params).unwrap();
        let y = gravity_regressor(&model, &q).unwrap();
        assert!((y * params.to_dvector() - &tau).amax() < 1e-10 * (1.0 + tau.amax()));
    }
}

#[test]
fn torque_is_linear_and_odd_in_gravity() {
    let mut rng = common::rng(14);
    for _ in 0..50 {
        let model = common::random_chain(4, &mut rng);
        let q = common::random_q(4, &mut rng);
        let a = random_params(4, &mut rng);
        let b = random_params(4, &mut rng);
        let sum = GravityParams::new(
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| 2.0 * x + y)
                .collect(),
        )
        .unwrap();
        let lhs = gravity_torque(&model, &q, &sum).unwrap();
        let rhs =
            gravity_torque(&model, &q, &a).unwrap() * 2.0 + gravity_torque(&model, &q, &b).unwrap();
        assert!((lhs - rhs).amax() < 1e-12);

        let mut flipped = model.clone();
        flipped.gravity = -model.gravity;
        let t = gravity_torque(&model, &q, &a).unwrap();
        let tf = gravity_torque(&flipped, &q, &a).unwrap();
        assert!((t + tf).amax() < 1e-12);
    }
}

#[test]
fn zero_length_chain_sits_at_origin() {
    let model = RobotModel::new(
        "points",
        (0..3)
            .map(|_| gravcomp::DhRow::revolute(0.0, 0.0, 0.0))
            .collect(),
        (0..3).map(|_| gravcomp::LinkInertia::point(1.0)).collect(),
        Vector3::new(0.0, 0.0, -9.81),
        None,
    )
    .unwrap();
    for f in forward_kinematics(&model, &[0.4, -1.0, 2.0]).unwrap() {
        assert_eq!(f.translation, Vector3::zeros());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn frames_are_orthonormal_and_compose(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(n, &mut rng);
        let q = common::random_q(n, &mut rng);
        let frames = forward_kinematics(&model, &q).unwrap();
        prop_assert_eq!(frames.len(), n);
        for (k, f) in frames.iter().enumerate() {
            prop_assert!(f.orthonormality_error() < 1e-12);
            let local = dh_transform(&model.dh[k], q[k]);
            let expected = if k == 0 { local } else { frames[k - 1].compose(&local) };
            prop_assert!((f.translation - expected.translation).amax() < 1e-12);
            prop_assert!((f.rotation - expected.rotation).amax() < 1e-12);
        }
    }

    #[test]
    fn regressor_columns_are_unit_parameter_torques(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = common::rng(seed);
        let model = common::random_chain(n, &mut rng);
        let q = common::random_q(n, &mut rng);
        let y = gravity_regressor(&model, &q).unwrap();
        for j in 0..4 * n {
            let tau = gravity_torque(&model, &q, &GravityParams::unit(n, j)).unwrap();
            prop_assert!((y.column(j) - tau).amax() < 1e-12);
        }
    }
}
