mod common;

use gravcomp::gravity::{gravity_torque, sample_poses, stacked_regressor, GravityParams};
use gravcomp::identification::{
    identify, predict, solve, stack, synth_dataset, Dataset, IdentifyOptions, Sample, SolveMethod,
    SolveOptions,
};
use gravcomp::linalg::svd_least_squares;

#[test]
fn noiseless_fit_predicts_unseen_poses() {
    for model in [common::mtm(), common::chain3()] {
        let truth = GravityParams::from_model(&model);
        let data = synth_dataset(&model, &truth, 200, 0.0, 21).unwrap();
        let report = identify(&model, &data, &IdentifyOptions::default()).unwrap();
        assert!(report.residual_rms < 1e-8);
        let mut rng = common::rng(99);
        for q in sample_poses(&model, 100, &mut rng) {
            let err = (predict(&model, &report, &q).unwrap()
                - gravity_torque(&model, &q, &truth).unwrap())
            .amax();
            assert!(err < 1e-7, "{err}");
        }
    }
}

#[test]
fn fitted_vector_is_minimum_norm() {
    let model = common::mtm();
    let truth = GravityParams::from_model(&model);
    let data = synth_dataset(&model, &truth, 100, 0.0, 5).unwrap();
    let system = stack(&model, &data).unwrap();
    let report = solve(&system, &SolveOptions::default()).unwrap();
    // a minimum-norm solution lies in the row space of the regressor
    let x = report.params_full.to_dvector();
    let yt = system.regressor.transpose();
    let w = svd_least_squares(&yt, &x, 1e-10).x;
    assert!((yt * w - &x).amax() < 1e-9 * (1.0 + x.amax()));
    assert!(report.rank < 4 * model.dof());
}

#[test]
fn sample_order_does_not_matter() {
    let model = common::mtm();
    let truth = GravityParams::from_model(&model);
    let data = synth_dataset(&model, &truth, 150, 0.01, 8).unwrap();
    let mut shuffled = data.samples.clone();
    shuffled.reverse();
    shuffled.rotate_left(37);
    let a = identify(&model, &data, &IdentifyOptions::default()).unwrap();
    let b = identify(&model, &Dataset::new(shuffled), &IdentifyOptions::default()).unwrap();
    let diff = (a.params_full.to_dvector() - b.params_full.to_dvector()).amax();
    assert!(diff < 1e-9, "{diff}");
}

#[test]
fn residual_tracks_noise_level() {
    let model = common::mtm();
    let truth = GravityParams::from_model(&model);
    let levels = [0.005, 0.01, 0.02];
    let means: Vec<f64> = levels
        .iter()
        .map(|&noise| {
            (0..10)
                .map(|seed| {
                    let data = synth_dataset(&model, &truth, 500, noise, seed).unwrap();
                    let r = identify(&model, &data, &IdentifyOptions::default()).unwrap();
                    if noise == 0.01 {
                        assert!(
                            (0.005..=0.02).contains(&r.residual_rms),
                            "{}",
                            r.residual_rms
                        );
                    }
                    r.residual_rms
                })
                .sum::<f64>()
                / 10.0
        })
        .collect();
    let mx = levels.iter().sum::<f64>() / 3.0;
    let my = means.iter().sum::<f64>() / 3.0;
    let sxy: f64 = levels
        .iter()
        .zip(&means)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = levels.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = means.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(r2 > 0.99, "{r2} {means:?}");
}

#[test]
fn consistent_samples_do_not_raise_residual() {
    let model = common::chain3();
    let truth = GravityParams::from_model(&model);
    let data = synth_dataset(&model, &truth, 80, 0.02, 4).unwrap();
    let opts = IdentifyOptions::default();
    let first = identify(&model, &data, &opts).unwrap();
    let mut rng = common::rng(7);
    let mut extended = data.samples.clone();
    for q in sample_poses(&model, 40, &mut rng) {
        let tau = predict(&model, &first, &q)
            .unwrap()
            .iter()
            .copied()
            .collect();
        extended.push(Sample { q, tau });
    }
    let second = identify(&model, &Dataset::new(extended), &opts).unwrap();
    assert!(second.residual_rms <= first.residual_rms + 1e-12);
}

#[test]
fn normal_equations_fail_on_rank_deficient_regressor() {
    let model = common::mtm();
    let truth = GravityParams::from_model(&model);
    let data = synth_dataset(&model, &truth, 60, 0.0, 2).unwrap();
    let opts = SolveOptions {
        method: SolveMethod::NormalEquations,
        ..SolveOptions::default()
    };
    // the full parameter vector is not identifiable, so the Gram matrix is singular
    let system = stack(&model, &data).unwrap();
    match solve(&system, &opts) {
        Err(gravcomp::Error::SingularNormalEquations) => {}
        Ok(r) => assert!(r.residual_rms.is_finite()),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn stacked_regressor_matches_per_pose_blocks() {
    let model = common::chain3();
    let mut rng = common::rng(3);
    let poses = sample_poses(&model, 10, &mut rng);
    let stacked = stacked_regressor(&model, &poses).unwrap();
    for (b, q) in poses.iter().enumerate() {
        let block = gravcomp::gravity::gravity_regressor(&model, q).unwrap();
        assert_eq!(stacked.rows(3 * b, 3), block);
    }
}
