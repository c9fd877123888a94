//! Forward-dynamics simulator for point-mass serial chains.
//!
//! Each link is a point mass at its centre of mass, so the inertia matrix is
//! `M(q) = sum_i m_i J_i^T J_i + diag(armature)`. Coriolis and centrifugal
//! torques come from Christoffel symbols of central finite differences of `M`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gravity::{potential_from_frames, torque_from_frames, GravityParams, PARAMS_PER_LINK};
use crate::io::write_atomic;
use crate::kinematics::{check_len, frames_unchecked, point_jacobian, JointState, RobotModel};

/// Step used for the finite-difference derivatives of the mass matrix.
pub const MASS_MATRIX_FD_STEP: f64 = 1e-6;

pub const DEFAULT_ARMATURE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    SemiImplicitEuler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Per-joint rotor inertia added to the diagonal of `M` (kg m^2).
    pub armature: Vec<f64>,
    /// Per-joint viscous friction coefficient (N m s/rad).
    #[serde(alias = "viscous")]
    pub viscous_friction: Vec<f64>,
    /// Joints held fixed (zero velocity and acceleration). Empty means none.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub locked: Vec<bool>,
}

impl SimConfig {
    /// 1 ms semi-implicit Euler for one second with the default armature.
    pub fn new(n: usize) -> Self {
        Self {
            dt: 1e-3,
            duration: 1.0,
            integrator: Integrator::SemiImplicitEuler,
            armature: vec![DEFAULT_ARMATURE; n],
            viscous_friction: vec![0.0; n],
            locked: Vec::new(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_armature(mut self, value: f64) -> Self {
        self.armature.iter_mut().for_each(|a| *a = value);
        self
    }

    pub fn with_viscous(mut self, value: f64) -> Self {
        self.viscous_friction.iter_mut().for_each(|b| *b = value);
        self
    }

    /// Locks every joint except `free`.
    pub fn only_free(mut self, free: usize) -> Self {
        let n = self.armature.len();
        self.locked = (0..n).map(|j| j != free).collect();
        self
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn is_locked(&self, j: usize) -> bool {
        self.locked.get(j).copied().unwrap_or(false)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "duration {} must be at least dt {}",
                self.duration, self.dt
            )));
        }
        check_len("armature", n, self.armature.len())?;
        check_len("viscous friction", n, self.viscous_friction.len())?;
        if !self.locked.is_empty() {
            check_len("locked joints", n, self.locked.len())?;
        }
        if self
            .armature
            .iter()
            .chain(&self.viscous_friction)
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::InvalidArgument(
                "armature and viscous friction must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn free_joints(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|&j| !self.is_locked(j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub joint: JointState,
}

impl PlantState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Self {
        Self {
            t: 0.0,
            joint: JointState::new(q, qdot),
        }
    }
}

fn link_mass_matrix(model: &RobotModel, q: &[f64]) -> DMatrix<f64> {
    let n = model.dof();
    let frames = frames_unchecked(model, q);
    let mut m = DMatrix::zeros(n, n);
    for (i, link) in model.links.iter().enumerate() {
        if link.mass == 0.0 {
            continue;
        }
        let p = frames[i].apply(&link.com_vector());
        let jac = point_jacobian(model, &frames, i, &p);
        // only the leading (i+1) columns are non-zero
        let active = jac.columns(0, i + 1);
        let block = active.transpose() * active * link.mass;
        let mut target = m.view_mut((0, 0), (i + 1, i + 1));
        target += block;
    }
    m
}

pub fn mass_matrix(model: &RobotModel, q: &[f64], armature: &[f64]) -> Result<DMatrix<f64>> {
    check_len("joint positions", model.dof(), q.len())?;
    check_len("armature", model.dof(), armature.len())?;
    let mut m = link_mass_matrix(model, q);
    for (j, a) in armature.iter().enumerate() {
        m[(j, j)] += a;
    }
    Ok(m)
}

fn mass_matrix_derivative(model: &RobotModel, q: &[f64], k: usize) -> DMatrix<f64> {
    let h = MASS_MATRIX_FD_STEP;
    let mut qp = q.to_vec();
    let mut qm = q.to_vec();
    qp[k] += h;
    qm[k] -= h;
    (link_mass_matrix(model, &qp) - link_mass_matrix(model, &qm)) / (2.0 * h)
}

/// Coriolis/centrifugal torques for the listed rows; other entries are zero.
fn coriolis_rows(model: &RobotModel, q: &[f64], qdot: &[f64], rows: &[usize]) -> DVector<f64> {
    let n = model.dof();
    let mut c = DVector::zeros(n);
    let moving: Vec<usize> = (0..n).filter(|&i| qdot[i] != 0.0).collect();
    if moving.is_empty() {
        return c;
    }
    let v = DVector::from_column_slice(qdot);
    let mut derivs: Vec<Option<DMatrix<f64>>> = vec![None; n];
    for &k in moving.iter().chain(rows) {
        if derivs[k].is_none() {
            derivs[k] = Some(mass_matrix_derivative(model, q, k));
        }
    }
    // c_k = sum_ij (dM_kj/dq_i - 1/2 dM_ij/dq_k) qd_i qd_j
    let mut mdot_v = DVector::zeros(n);
    for &i in &moving {
        mdot_v += derivs[i].as_ref().unwrap() * &v * qdot[i];
    }
    for &k in rows {
        let dk = derivs[k].as_ref().unwrap();
        c[k] = mdot_v[k] - 0.5 * v.dot(&(dk * &v));
    }
    c
}

/// Coriolis and centrifugal torque vector `C(q, qdot) qdot`.
///
/// Armature is constant in `q` and so does not contribute; it is accepted for
/// signature symmetry with [`mass_matrix`].
pub fn coriolis_torque(
    model: &RobotModel,
    q: &[f64],
    qdot: &[f64],
    armature: &[f64],
) -> Result<DVector<f64>> {
    let n = model.dof();
    check_len("joint positions", n, q.len())?;
    check_len("joint velocities", n, qdot.len())?;
    check_len("armature", n, armature.len())?;
    let rows: Vec<usize> = (0..n).collect();
    Ok(coriolis_rows(model, q, qdot, &rows))
}

fn check_params(model: &RobotModel, params: &GravityParams) -> Result<()> {
    check_len(
        "plant parameters",
        PARAMS_PER_LINK * model.dof(),
        params.as_slice().len(),
    )
}

/// Joint accelerations under applied torque. Locked joints get zero.
pub fn forward_dynamics(
    model: &RobotModel,
    joint: &JointState,
    tau: &DVector<f64>,
    params_plant: &GravityParams,
    config: &SimConfig,
) -> Result<DVector<f64>> {
    let n = model.dof();
    joint.check(n)?;
    check_len("applied torque", n, tau.len())?;
    check_params(model, params_plant)?;
    config.validate(n)?;
    accelerations(model, &joint.q, &joint.qdot, tau, params_plant, config)
}

fn accelerations(
    model: &RobotModel,
    q: &[f64],
    qdot: &[f64],
    tau: &DVector<f64>,
    params_plant: &GravityParams,
    config: &SimConfig,
) -> Result<DVector<f64>> {
    let n = model.dof();
    let free = config.free_joints(n);
    let mut qdd = DVector::zeros(n);
    if free.is_empty() {
        return Ok(qdd);
    }
    let frames = frames_unchecked(model, q);
    let gravity = torque_from_frames(model, &frames, params_plant);
    let coriolis = coriolis_rows(model, q, qdot, &free);
    let mut m = link_mass_matrix(model, q);
    for (j, a) in config.armature.iter().enumerate() {
        m[(j, j)] += a;
    }

    let rhs = DVector::from_iterator(
        free.len(),
        free.iter()
            .map(|&k| tau[k] - coriolis[k] - gravity[k] - config.viscous_friction[k] * qdot[k]),
    );
    let m_free = m.select_rows(&free).select_columns(&free);
    let chol = m_free
        .cholesky()
        .ok_or_else(|| Error::SingularMassMatrix { q: q.to_vec() })?;
    let sol = chol.solve(&rhs);
    for (idx, &k) in free.iter().enumerate() {
        qdd[k] = sol[idx];
    }
    Ok(qdd)
}

fn check_finite_state(joint: &JointState) -> Result<()> {
    joint.check(joint.q.len())
}

/// Advances the plant by one `config.dt` with `tau` held constant over the step.
pub fn step(
    state: &PlantState,
    tau: &DVector<f64>,
    model: &RobotModel,
    params_plant: &GravityParams,
    config: &SimConfig,
) -> Result<PlantState> {
    let n = model.dof();
    state.joint.check(n)?;
    check_len("applied torque", n, tau.len())?;
    if let Some(j) = tau.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "applied torque",
            joint: j,
        });
    }
    let dt = config.dt;
    let q = &state.joint.q;
    let qd = &state.joint.qdot;
    let accel = |q: &[f64], qd: &[f64]| accelerations(model, q, qd, tau, params_plant, config);

    let (q_next, qd_next) = match config.integrator {
        Integrator::SemiImplicitEuler => {
            let qdd = accel(q, qd)?;
            let qd_next: Vec<f64> = qd.iter().zip(qdd.iter()).map(|(v, a)| v + dt * a).collect();
            let q_next: Vec<f64> = q.iter().zip(&qd_next).map(|(p, v)| p + dt * v).collect();
            (q_next, qd_next)
        }
        Integrator::Rk4 => {
            let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> {
                x.iter().zip(k).map(|(a, b)| a + h * b).collect()
            };
            let k1q = qd.clone();
            let k1v: Vec<f64> = accel(q, qd)?.iter().copied().collect();
            let q2 = axpy(q, &k1q, dt / 2.0);
            let v2 = axpy(qd, &k1v, dt / 2.0);
            let k2v: Vec<f64> = accel(&q2, &v2)?.iter().copied().collect();
            let q3 = axpy(q, &v2, dt / 2.0);
            let v3 = axpy(qd, &k2v, dt / 2.0);
            let k3v: Vec<f64> = accel(&q3, &v3)?.iter().copied().collect();
            let q4 = axpy(q, &v3, dt);
            let v4 = axpy(qd, &k3v, dt);
            let k4v: Vec<f64> = accel(&q4, &v4)?.iter().copied().collect();
            let q_next = (0..n)
                .map(|j| q[j] + dt / 6.0 * (k1q[j] + 2.0 * v2[j] + 2.0 * v3[j] + v4[j]))
                .collect();
            let qd_next = (0..n)
                .map(|j| qd[j] + dt / 6.0 * (k1v[j] + 2.0 * k2v[j] + 2.0 * k3v[j] + k4v[j]))
                .collect();
            (q_next, qd_next)
        }
    };
    let next = PlantState {
        t: state.t + dt,
        joint: JointState::new(q_next, qd_next),
    };
    check_finite_state(&next.joint)?;
    Ok(next)
}

/// Kinetic plus gravitational potential energy.
pub fn total_energy(
    model: &RobotModel,
    joint: &JointState,
    params: &GravityParams,
    armature: &[f64],
) -> Result<f64> {
    joint.check(model.dof())?;
    check_params(model, params)?;
    let m = mass_matrix(model, &joint.q, armature)?;
    let v = DVector::from_column_slice(&joint.qdot);
    let frames = frames_unchecked(model, &joint.q);
    Ok(0.5 * v.dot(&(m * &v)) + potential_from_frames(model, &frames, params))
}

/// Produces joint torques from measured state once per control period.
pub trait TorqueController {
    fn torque(&mut self, t: f64, measured: &JointState, dt: f64) -> Result<DVector<f64>>;
}

impl<F> TorqueController for F
where
    F: FnMut(f64, &JointState) -> Result<DVector<f64>>,
{
    fn torque(&mut self, t: f64, measured: &JointState, _dt: f64) -> Result<DVector<f64>> {
        self(t, measured)
    }
}

/// Applies no torque at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroTorque;

impl TorqueController for ZeroTorque {
    fn torque(&mut self, _t: f64, measured: &JointState, _dt: f64) -> Result<DVector<f64>> {
        Ok(DVector::zeros(measured.dof()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Uniformly sampled closed-loop trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn dof(&self) -> usize {
        self.rows.first().map_or(0, |r| r.q.len())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn joint_positions(&self, joint: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.q[joint]).collect()
    }

    pub fn joint_torques(&self, joint: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.tau[joint]).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let n = self.dof();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("qd{i}")));
        header.extend((1..=n).map(|i| format!("tau{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = std::iter::once(&row.t)
                .chain(&row.q)
                .chain(&row.qdot)
                .chain(&row.tau)
                .map(|v| crate::io::csv_number(*v))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn from_csv_reader(reader: impl std::io::Read, context: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let cols = rdr.headers().map_err(|e| Error::parse(context, e))?.len();
        if cols < 4 || (cols - 1) % 3 != 0 {
            return Err(Error::parse(
                context,
                format!("expected 1 + 3n columns, found {cols}"),
            ));
        }
        let n = (cols - 1) / 3;
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::parse(context, e))?;
            let v = record
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(format!("{context}, line {}", line + 2), e))?;
            rows.push(LogRow {
                t: v[0],
                q: v[1..1 + n].to_vec(),
                qdot: v[1 + n..1 + 2 * n].to_vec(),
                tau: v[1 + 2 * n..].to_vec(),
            });
        }
        let dt = if rows.len() > 1 {
            rows[1].t - rows[0].t
        } else {
            0.0
        };
        Ok(Self { dt, rows })
    }
}

/// Runs the closed loop for `config.steps()` steps. The log holds one row per
/// control instant from `t = 0` through `t = duration`.
pub fn simulate(
    model: &RobotModel,
    params_plant: &GravityParams,
    controller: &mut dyn TorqueController,
    config: &SimConfig,
    q0: &[f64],
    qdot0: &[f64],
) -> Result<TrajectoryLog> {
    let n = model.dof();
    config.validate(n)?;
    check_params(model, params_plant)?;
    let mut qdot0 = qdot0.to_vec();
    check_len("initial velocities", n, qdot0.len())?;
    for (j, v) in qdot0.iter_mut().enumerate() {
        if config.is_locked(j) {
            *v = 0.0;
        }
    }
    let mut state = PlantState::new(q0.to_vec(), qdot0);
    state.joint.check(n)?;

    let steps = config.steps();
    let mut rows = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * config.dt;
        state.t = t;
        let wrap = |e: Error| Error::Simulation {
            t,
            source: Box::new(e),
        };
        let tau = controller
            .torque(t, &state.joint, config.dt)
            .map_err(wrap)?;
        check_len("controller torque", n, tau.len()).map_err(wrap)?;
        rows.push(LogRow {
            t,
            q: state.joint.q.clone(),
            qdot: state.joint.qdot.clone(),
            tau: tau.iter().copied().collect(),
        });
        if k < steps {
            state = step(&state, &tau, model, params_plant, config).map_err(wrap)?;
        }
    }
    Ok(TrajectoryLog {
        dt: config.dt,
        rows,
    })
}
