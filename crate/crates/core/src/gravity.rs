//! Gravity potential, static gravity torque and its linear regressor.
//!
//! Each link contributes four parameters `[m, m*cx, m*cy, m*cz]`: its mass and
//! the first moment of mass in the link frame. The potential
//! `P = -g . sum_i (m_i o_i + R_i (m c)_i)` is linear in these, and so is the
//! holding torque `tau = dP/dq`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    check_len, frames_unchecked, joint_axis, LinkInertia, RobotModel, Transform,
};
use crate::linalg::{singular_values, svd_least_squares, PivotedQr};

pub const PARAMS_PER_LINK: usize = 4;

/// Full gravity parameter vector, 4 entries per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GravityParams(Vec<f64>);

impl GravityParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.len().is_multiple_of(PARAMS_PER_LINK) || values.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector length {} is not a positive multiple of {PARAMS_PER_LINK}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "parameter vector is not finite".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn zeros(n_links: usize) -> Self {
        Self(vec![0.0; PARAMS_PER_LINK * n_links])
    }

    pub fn from_links(links: &[LinkInertia]) -> Self {
        Self(
            links
                .iter()
                .flat_map(|l| {
                    [
                        l.mass,
                        l.mass * l.com[0],
                        l.mass * l.com[1],
                        l.mass * l.com[2],
                    ]
                })
                .collect(),
        )
    }

    pub fn from_model(model: &RobotModel) -> Self {
        Self::from_links(&model.links)
    }

    /// Inverse of [`GravityParams::from_links`]. Links with non-positive mass
    /// get zero mass and a COM at the frame origin.
    pub fn to_links(&self) -> Vec<LinkInertia> {
        self.0
            .chunks_exact(PARAMS_PER_LINK)
            .map(|b| {
                if b[0] > 0.0 {
                    LinkInertia::new(b[0], [b[1] / b[0], b[2] / b[0], b[3] / b[0]])
                } else {
                    LinkInertia::point(0.0)
                }
            })
            .collect()
    }

    pub fn unit(n_links: usize, j: usize) -> Self {
        let mut p = Self::zeros(n_links);
        p.0[j] = 1.0;
        p
    }

    pub fn n_links(&self) -> usize {
        self.0.len() / PARAMS_PER_LINK
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        Self::new(v.iter().copied().collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    fn check(&self, model: &RobotModel) -> Result<()> {
        check_len(
            "gravity parameters",
            PARAMS_PER_LINK * model.dof(),
            self.0.len(),
        )
    }

    #[inline]
    fn mass(&self, link: usize) -> f64 {
        self.0[PARAMS_PER_LINK * link]
    }

    #[inline]
    fn first_moment(&self, link: usize) -> Vector3<f64> {
        let b = PARAMS_PER_LINK * link;
        Vector3::new(self.0[b + 1], self.0[b + 2], self.0[b + 3])
    }
}

/// Human-readable name of full-vector entry `j`, e.g. `m3` or `m3cy` (links 1-based).
pub fn param_name(j: usize) -> String {
    let link = j / PARAMS_PER_LINK + 1;
    match j % PARAMS_PER_LINK {
        0 => format!("m{link}"),
        1 => format!("m{link}cx"),
        2 => format!("m{link}cy"),
        _ => format!("m{link}cz"),
    }
}

fn check_q(model: &RobotModel, q: &[f64]) -> Result<()> {
    check_len("joint positions", model.dof(), q.len())
}

pub fn potential_energy(model: &RobotModel, q: &[f64], params: &GravityParams) -> Result<f64> {
    check_q(model, q)?;
    params.check(model)?;
    let frames = frames_unchecked(model, q);
    Ok(potential_from_frames(model, &frames, params))
}

pub(crate) fn potential_from_frames(
    model: &RobotModel,
    frames: &[Transform],
    params: &GravityParams,
) -> f64 {
    let moment: Vector3<f64> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| f.translation * params.mass(i) + f.rotation * params.first_moment(i))
        .sum();
    -model.gravity.dot(&moment)
}

/// Joint torques that hold pose `q` against gravity, `dP/dq`.
pub fn gravity_torque(
    model: &RobotModel,
    q: &[f64],
    params: &GravityParams,
) -> Result<DVector<f64>> {
    check_q(model, q)?;
    params.check(model)?;
    let frames = frames_unchecked(model, q);
    Ok(torque_from_frames(model, &frames, params))
}

pub(crate) fn torque_from_frames(
    model: &RobotModel,
    frames: &[Transform],
    params: &GravityParams,
) -> DVector<f64> {
    let n = model.dof();
    let mut tau = DVector::zeros(n);
    // Suffix sums over links k..n of total mass and first moment about the base.
    let mut mass_sum = 0.0;
    let mut moment_sum = Vector3::zeros();
    for k in (0..n).rev() {
        let f = &frames[k];
        mass_sum += params.mass(k);
        moment_sum += f.translation * params.mass(k) + f.rotation * params.first_moment(k);
        let (origin, z) = joint_axis(frames, k);
        let lever = moment_sum - origin * mass_sum;
        tau[k] = -model.dh[k].sign_f64() * model.gravity.dot(&z.cross(&lever));
    }
    tau
}

/// `n x 4n` matrix `Y(q)` with `Y(q) * params == gravity_torque(q, params)`.
pub fn gravity_regressor(model: &RobotModel, q: &[f64]) -> Result<DMatrix<f64>> {
    check_q(model, q)?;
    let frames = frames_unchecked(model, q);
    Ok(regressor_from_frames(model, &frames))
}

#[allow(clippy::needless_range_loop)]
pub(crate) fn regressor_from_frames(model: &RobotModel, frames: &[Transform]) -> DMatrix<f64> {
    let n = model.dof();
    let g = model.gravity;
    let mut y = DMatrix::zeros(n, PARAMS_PER_LINK * n);
    for k in 0..n {
        let (origin, z) = joint_axis(frames, k);
        let s = model.dh[k].sign_f64();
        // column vector multiplying each parameter: -s g . (z x v) = v . (-s (g x z))
        let w = g.cross(&z) * -s;
        for i in k..n {
            let f = &frames[i];
            let c = PARAMS_PER_LINK * i;
            y[(k, c)] = w.dot(&(f.translation - origin));
            for axis in 0..3 {
                y[(k, c + 1 + axis)] = w.dot(&f.rotation.column(axis));
            }
        }
    }
    y
}

/// Uniform random poses within the joint limits (or `[-pi, pi]`).
pub fn sample_poses(model: &RobotModel, n_poses: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n_poses)
        .map(|_| {
            (0..model.dof())
                .map(|j| {
                    let (lo, hi) = model.sampling_range(j);
                    rng.random_range(lo..hi)
                })
                .collect()
        })
        .collect()
}

/// Vertically stacked regressors for the given poses, in pose order.
pub fn stacked_regressor(model: &RobotModel, poses: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = model.dof();
    for q in poses {
        check_q(model, q)?;
    }
    let blocks: Vec<DMatrix<f64>> = poses
        .par_iter()
        .map(|q| regressor_from_frames(model, &frames_unchecked(model, q)))
        .collect();
    let mut stacked = DMatrix::zeros(n * poses.len(), PARAMS_PER_LINK * n);
    for (b, block) in blocks.iter().enumerate() {
        stacked.rows_mut(b * n, n).copy_from(block);
    }
    Ok(stacked)
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Identifiable (base) parameter structure of the gravity regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseParamMap {
    /// Pivot columns of the full vector, most significant first.
    pub independent_columns: Vec<usize>,
    /// `rank x 4n` map from full to base parameters.
    pub recombination: DMatrix<f64>,
    pub rank: usize,
    /// Condition number of the regressor restricted to the independent columns.
    pub condition_number: f64,
}

impl BaseParamMap {
    /// Base map of an explicit stacked regressor.
    pub fn from_regressor(stacked: &DMatrix<f64>, tol: f64) -> Self {
        let cols = stacked.ncols();
        let qr = PivotedQr::new(stacked);
        let rank = qr.rank(tol);
        let independent: Vec<usize> = qr.pivots[..rank].to_vec();

        let mut recombination = DMatrix::zeros(rank, cols);
        if rank > 0 {
            let r11 = qr.r.view((0, 0), (rank, rank)).clone_owned();
            let r12 = qr.r.view((0, rank), (rank, cols - rank)).clone_owned();
            let coupling = r11
                .solve_upper_triangular(&r12)
                .expect("retained diagonal entries are non-zero");
            for k in 0..rank {
                recombination[(k, qr.pivots[k])] = 1.0;
            }
            for (c, &col) in qr.pivots[rank..].iter().enumerate() {
                recombination.column_mut(col).copy_from(&coupling.column(c));
            }
        }

        let condition_number = if rank == 0 {
            1.0
        } else {
            let sv = singular_values(&stacked.select_columns(&independent));
            sv[0] / sv[sv.len() - 1]
        };

        Self {
            independent_columns: independent,
            recombination,
            rank,
            condition_number,
        }
    }

    /// Base parameters of a full vector.
    pub fn base_params(&self, full: &GravityParams) -> Vec<f64> {
        (&self.recombination * full.to_dvector())
            .iter()
            .copied()
            .collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.independent_columns
            .iter()
            .map(|&j| param_name(j))
            .collect()
    }
}

/// Numerical base-parameter reduction from `n_poses` random poses.
pub fn base_reduction(
    model: &RobotModel,
    n_poses: usize,
    seed: u64,
    tol: f64,
) -> Result<BaseParamMap> {
    if n_poses < 1 {
        return Err(Error::InvalidArgument("n_poses must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance must be positive, got {tol}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = sample_poses(model, n_poses, &mut rng);
    let stacked = stacked_regressor(model, &poses)?;
    Ok(BaseParamMap::from_regressor(&stacked, tol))
}

/// Least-squares fit of base parameters, lifted back to a minimum-norm full vector.
pub fn lift_base_params(map: &BaseParamMap, base: &[f64]) -> Result<GravityParams> {
    check_len("base parameters", map.rank, base.len())?;
    let b = DVector::from_column_slice(base);
    let sol = svd_least_squares(&map.recombination, &b, 1e-12);
    GravityParams::from_dvector(&sol.x)
}
