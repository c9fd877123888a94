#![allow(dead_code)]

use gravcomp::kinematics::{DhRow, LinkInertia, RobotModel};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

pub const G: f64 = 9.81;

/// Horizontal-axis pendulum of length `l`, angle measured from the horizontal.
pub fn pendulum(mass: f64, l: f64) -> RobotModel {
    RobotModel::new(
        "pendulum",
        vec![DhRow::revolute(0.0, 0.0, l)],
        vec![LinkInertia::point(mass)],
        Vector3::new(0.0, -G, 0.0),
        None,
    )
    .unwrap()
}

/// Waist joint about the vertical followed by two pitch joints.
pub fn chain3() -> RobotModel {
    RobotModel::new(
        "chain3",
        vec![
            DhRow::revolute(0.3, FRAC_PI_2, 0.0),
            DhRow::new(-1, 0.1, 0.0, 0.0, 0.4),
            DhRow::revolute(0.0, 0.0, 0.3),
        ],
        vec![
            LinkInertia::new(2.0, [0.0, -0.05, 0.0]),
            LinkInertia::new(1.2, [-0.2, 0.0, 0.01]),
            LinkInertia::new(0.6, [-0.1, 0.02, 0.0]),
        ],
        Vector3::new(0.0, 0.0, -G),
        None,
    )
    .unwrap()
}

/// Random serial chain with `n` links, arbitrary DH rows, COM offsets and signs.
pub fn random_chain(n: usize, rng: &mut impl Rng) -> RobotModel {
    let alphas = [0.0, FRAC_PI_2, -FRAC_PI_2, 0.3];
    let dh = (0..n)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1 } else { -1 };
            DhRow::new(
                sign,
                rng.random_range(-3.0..3.0),
                rng.random_range(-0.3..0.3),
                alphas[rng.random_range(0..alphas.len())],
                rng.random_range(-0.5..0.5),
            )
        })
        .collect();
    let links = (0..n)
        .map(|_| {
            LinkInertia::new(
                rng.random_range(0.1..3.0),
                [
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                ],
            )
        })
        .collect();
    let gravity = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), -G);
    RobotModel::new("random", dh, links, gravity, None).unwrap()
}

pub fn random_q(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.1..3.1)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The master tool manipulator geometry with placeholder lengths.
pub fn mtm() -> RobotModel {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/examples/mtm.json");
    gravcomp::io::load_robot(std::path::Path::new(path)).unwrap()
}
