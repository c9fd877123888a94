mod common;

use gravcomp::controller::{
    amplitude_ratio_per_period, tune_gains, tune_kp_oscillation, ControllerState, Gains,
    GravityPid, TuneOptions, TuningPlant,
};
use gravcomp::plant::{simulate, SimConfig};
use gravcomp::GravityParams;
use std::f64::consts::PI;

fn pendulum_config(viscous: f64, duration: f64) -> SimConfig {
    SimConfig::new(1)
        .with_viscous(viscous)
        .with_duration(duration)
}

#[test]
fn critical_period_matches_linearisation() {
    let model = common::pendulum(1.0, 1.0);
    let params = GravityParams::from_model(&model);
    let config = pendulum_config(0.05, 20.0);
    let plant = TuningPlant {
        model: &model,
        params_plant: &params,
        params_hat: &params,
        config: &config,
    };
    let crit = tune_kp_oscillation(&plant, 0, &TuneOptions::new(vec![0.0])).unwrap();
    let inertia = 1.0 + config.armature[0];
    let predicted = 2.0 * PI * (inertia / crit.kp).sqrt();
    assert!(
        (crit.period - predicted).abs() < 0.2 * predicted,
        "period {} vs {predicted} at kp {}",
        crit.period,
        crit.kp
    );
    assert!((crit.amplitude_ratio - 1.0).abs() <= 0.05);
}

#[test]
fn damping_above_critical_gain_decays() {
    let model = common::pendulum(1.0, 1.0);
    let params = GravityParams::from_model(&model);
    let config = pendulum_config(0.05, 20.0);
    let plant = TuningPlant {
        model: &model,
        params_plant: &params,
        params_hat: &params,
        config: &config,
    };
    let crit = tune_kp_oscillation(&plant, 0, &TuneOptions::new(vec![0.0])).unwrap();
    let law = GravityPid::new(
        model.clone(),
        params.clone(),
        Gains::uniform(1, 1.5 * crit.kp, 0.0, 0.5),
    );
    let mut ctl = law.into_controller(ControllerState::regulate(vec![0.0]));
    let log = simulate(&model, &params, &mut ctl, &config, &[0.05], &[0.0]).unwrap();
    let x = log.joint_positions(0);
    let ratio = amplitude_ratio_per_period(&log.times(), &x);
    assert!(ratio.is_none_or(|r| r < 0.95), "{ratio:?}");
    assert!(x.last().unwrap().abs() < 0.05 * 0.1);
}

#[test]
fn heavier_plant_has_longer_critical_period() {
    let periods: Vec<f64> = [1.0, 2.0]
        .iter()
        .map(|&m| {
            let model = common::pendulum(m, 1.0);
            let params = GravityParams::from_model(&model);
            let config = pendulum_config(0.05, 30.0);
            let plant = TuningPlant {
                model: &model,
                params_plant: &params,
                params_hat: &params,
                config: &config,
            };
            tune_kp_oscillation(&plant, 0, &TuneOptions::new(vec![0.0]))
                .unwrap()
                .period
        })
        .collect();
    assert!(periods[1] > periods[0], "{periods:?}");
}

#[test]
fn empty_bracket_is_reported() {
    let model = common::pendulum(1.0, 1.0);
    let params = GravityParams::from_model(&model);
    let config = pendulum_config(0.05, 5.0);
    let plant = TuningPlant {
        model: &model,
        params_plant: &params,
        params_hat: &params,
        config: &config,
    };
    let mut opts = TuneOptions::new(vec![0.0]);
    opts.kp_bracket = (0.01, 0.02);
    let err = tune_kp_oscillation(&plant, 0, &opts).unwrap_err();
    assert!(err.to_string().contains("bracket"), "{err}");
}

#[test]
fn closed_loop_convergence_with_mismatch() {
    let model = common::chain3();
    let params_hat = GravityParams::from_model(&model);
    // 5% relative perturbation with alternating sign per parameter
    let perturbed: Vec<f64> = params_hat
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, p)| p * if i % 2 == 0 { 1.05 } else { 0.95 })
        .collect();
    let params_plant = GravityParams::new(perturbed).unwrap();
    let target = vec![0.3, 0.4, -0.5];
    let config = SimConfig::new(3).with_viscous(0.2).with_duration(10.0);
    let plant = TuningPlant {
        model: &model,
        params_plant: &params_plant,
        params_hat: &params_hat,
        config: &config,
    };
    let tuned = tune_gains(&plant, &TuneOptions::new(target.clone())).unwrap();
    eprintln!("{tuned:?}");

    let law = GravityPid::new(model.clone(), params_hat, tuned.gains);
    let mut ctl = law.into_controller(ControllerState::regulate(target.clone()));
    let q0: Vec<f64> = target.iter().map(|q| q + 0.05).collect();
    let log = simulate(&model, &params_plant, &mut ctl, &config, &q0, &[0.0; 3]).unwrap();
    let settled = log
        .rows
        .iter()
        .rev()
        .take_while(|r| r.q.iter().zip(&target).all(|(q, t)| (q - t).abs() < 5e-3));
    let settle_from = log.rows.len() - settled.count();
    assert!(settle_from < log.rows.len(), "never settled");
    eprintln!(
        "settled at t = {}",
        log.rows[settle_from.min(log.rows.len() - 1)].t
    );
}

#[test]
fn integral_stage_removes_feedforward_offset() {
    let model = common::pendulum(1.0, 1.0);
    let params_hat = GravityParams::from_model(&model);
    let params_plant = params_hat.scaled(1.05);
    let config = pendulum_config(0.05, 30.0);
    let plant = TuningPlant {
        model: &model,
        params_plant: &params_plant,
        params_hat: &params_hat,
        config: &config,
    };
    let opts = TuneOptions::new(vec![0.0]);
    let tuned = tune_gains(&plant, &opts).unwrap();
    assert!(tuned.gains.ki[0] > 0.0, "{tuned:?}");

    let law = GravityPid::new(model.clone(), params_hat, tuned.gains);
    let mut ctl = law.into_controller(ControllerState::regulate(vec![0.0]));
    let log = simulate(&model, &params_plant, &mut ctl, &config, &[0.05], &[0.0]).unwrap();
    let tail = &log.rows[log.rows.len() * 4 / 5..];
    assert!(tail.iter().all(|r| r.q[0].abs() < opts.offset_tol));
}
