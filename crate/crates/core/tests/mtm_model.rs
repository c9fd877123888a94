mod common;

use gravcomp::gravity::{base_reduction, DEFAULT_RANK_TOL};
use gravcomp::kinematics::forward_kinematics;

#[test]
fn first_frame_origin_at_minus_l1() {
    let model = common::mtm();
    let frames = forward_kinematics(&model, &[0.0; 7]).unwrap();
    let o = frames[0].translation;
    assert!((o - nalgebra::Vector3::new(0.0, 0.0, -0.2)).amax() < 1e-15);
}

#[test]
fn base_rank_is_seed_invariant() {
    let model = common::mtm();
    let ranks: Vec<usize> = (0..5)
        .map(|seed| {
            base_reduction(&model, 500, seed, DEFAULT_RANK_TOL)
                .unwrap()
                .rank
        })
        .collect();
    let map = base_reduction(&model, 500, 0, DEFAULT_RANK_TOL).unwrap();
    eprintln!(
        "ranks {ranks:?} columns {:?} cond {}",
        map.column_names(),
        map.condition_number
    );
    assert!(ranks.iter().all(|&r| r == ranks[0]));
}
