//! Denavit-Hartenberg forward kinematics for serial revolute chains.
//!
//! Frames follow the standard (distal) convention: the transform from frame
//! `i-1` to frame `i` is `RotZ(theta) * TransZ(d) * TransX(a) * RotX(alpha)`.
//! The joint variable enters through the affine map `theta = sign * q + offset`,
//! which covers joints whose positive direction is flipped relative to the
//! frame assignment.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a DH table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    /// Either `-1` or `+1`.
    pub sign: i8,
    pub theta_offset: f64,
    pub d: f64,
    pub alpha: f64,
    pub a: f64,
}

impl DhRow {
    pub fn new(sign: i8, theta_offset: f64, d: f64, alpha: f64, a: f64) -> Self {
        Self {
            sign,
            theta_offset,
            d,
            alpha,
            a,
        }
    }

    /// A row with `theta = q` and no offset.
    pub fn revolute(d: f64, alpha: f64, a: f64) -> Self {
        Self::new(1, 0.0, d, alpha, a)
    }

    #[inline]
    pub fn sign_f64(&self) -> f64 {
        f64::from(self.sign)
    }

    fn validate(&self, joint: usize) -> Result<()> {
        if self.sign != 1 && self.sign != -1 {
            return Err(Error::InvalidModel(format!(
                "joints[{joint}].sign must be -1 or +1, got {}",
                self.sign
            )));
        }
        if !self.theta_offset.is_finite() || self.theta_offset.abs() > 2.0 * PI {
            return Err(Error::InvalidModel(format!(
                "joints[{joint}].theta_offset must lie in [-2pi, 2pi], got {}",
                self.theta_offset
            )));
        }
        for (key, v) in [("d", self.d), ("alpha", self.alpha), ("a", self.a)] {
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "joints[{joint}].{key} is not finite"
                )));
            }
        }
        Ok(())
    }
}

/// Mass and centre of mass of one link, the COM expressed in the link's own frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkInertia {
    pub mass: f64,
    pub com: [f64; 3],
}

impl LinkInertia {
    pub fn new(mass: f64, com: [f64; 3]) -> Self {
        Self { mass, com }
    }

    pub fn point(mass: f64) -> Self {
        Self::new(mass, [0.0; 3])
    }

    pub fn com_vector(&self) -> Vector3<f64> {
        Vector3::from(self.com)
    }
}

/// Rigid transform stored as rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// `self * other`.
    #[inline]
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Local z axis expressed in the parent frame.
    #[inline]
    pub fn z_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// `max |R^T R - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

impl std::ops::Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

/// Joint positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl JointState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Self {
        Self { q, qdot }
    }

    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self::new(q, vec![0.0; n])
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn check(&self, n: usize) -> Result<()> {
        check_len("joint positions", n, self.q.len())?;
        check_len("joint velocities", n, self.qdot.len())?;
        if let Some(j) = self.q.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "joint position",
                joint: j,
            });
        }
        if let Some(j) = self.qdot.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "joint velocity",
                joint: j,
            });
        }
        Ok(())
    }
}

/// A serial revolute manipulator: geometry, link inertial data and gravity.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub dh: Vec<DhRow>,
    pub links: Vec<LinkInertia>,
    /// Gravitational acceleration in the base frame (m/s^2).
    pub gravity: Vector3<f64>,
    pub joint_limits: Option<Vec<(f64, f64)>>,
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        dh: Vec<DhRow>,
        links: Vec<LinkInertia>,
        gravity: Vector3<f64>,
        joint_limits: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        let model = Self {
            name: name.into(),
            dh,
            links,
            gravity,
            joint_limits,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dof(&self) -> usize {
        self.dh.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dh.len();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one joint".into()));
        }
        if self.links.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} joints but {} links",
                n,
                self.links.len()
            )));
        }
        for (i, row) in self.dh.iter().enumerate() {
            row.validate(i)?;
        }
        for (i, link) in self.links.iter().enumerate() {
            if !link.mass.is_finite() || link.mass < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "links[{i}].mass must be finite and non-negative, got {}",
                    link.mass
                )));
            }
            if link.com.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidModel(format!("links[{i}].com is not finite")));
            }
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidModel("gravity is not finite".into()));
        }
        if let Some(limits) = &self.joint_limits {
            if limits.len() != n {
                return Err(Error::InvalidModel(format!(
                    "{} joint limits for {} joints",
                    limits.len(),
                    n
                )));
            }
            for (i, &(lo, hi)) in limits.iter().enumerate() {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "joints[{i}] limits must satisfy lo < hi, got ({lo}, {hi})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sampling interval for joint `i`: its limits, or `[-pi, pi]` without limits.
    pub fn sampling_range(&self, i: usize) -> (f64, f64) {
        match &self.joint_limits {
            Some(limits) => limits[i],
            None => (-PI, PI),
        }
    }

    /// Same geometry and gravity with different link inertial data.
    pub fn with_links(&self, links: Vec<LinkInertia>) -> Result<Self> {
        let mut m = self.clone();
        m.links = links;
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(what, expected, got))
    }
}

#[inline]
pub fn dh_theta(row: &DhRow, qi: f64) -> f64 {
    row.sign_f64() * qi + row.theta_offset
}

pub fn dh_transform(row: &DhRow, qi: f64) -> Transform {
    let (st, ct) = dh_theta(row, qi).sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    Transform {
        rotation: Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca),
        translation: Vector3::new(row.a * ct, row.a * st, row.d),
    }
}

/// Base-frame pose of every link frame; element `i` is the frame of link `i + 1`.
pub fn forward_kinematics(model: &RobotModel, q: &[f64]) -> Result<Vec<Transform>> {
    check_len("joint positions", model.dof(), q.len())?;
    Ok(frames_unchecked(model, q))
}

pub(crate) fn frames_unchecked(model: &RobotModel, q: &[f64]) -> Vec<Transform> {
    let mut frames = Vec::with_capacity(q.len());
    let mut current = Transform::identity();
    for (row, &qi) in model.dh.iter().zip(q) {
        current = current.compose(&dh_transform(row, qi));
        frames.push(current);
    }
    frames
}

/// Base-frame position of each link's centre of mass.
pub fn com_positions(model: &RobotModel, q: &[f64]) -> Result<Vec<Vector3<f64>>> {
    let frames = forward_kinematics(model, q)?;
    Ok(frames
        .iter()
        .zip(&model.links)
        .map(|(f, l)| f.apply(&l.com_vector()))
        .collect())
}

/// Origin and z axis of the frame each joint rotates about (frame `k-1` for joint `k`).
#[inline]
pub(crate) fn joint_axis(frames: &[Transform], k: usize) -> (Vector3<f64>, Vector3<f64>) {
    if k == 0 {
        (Vector3::zeros(), Vector3::z())
    } else {
        (frames[k - 1].translation, frames[k - 1].z_axis())
    }
}

pub(crate) fn point_jacobian(
    model: &RobotModel,
    frames: &[Transform],
    link: usize,
    point: &Vector3<f64>,
) -> DMatrix<f64> {
    let n = model.dof();
    let mut jac = DMatrix::zeros(3, n);
    for k in 0..=link {
        let (origin, z) = joint_axis(frames, k);
        // d theta / d q = sign
        let col = z.cross(&(point - origin)) * model.dh[k].sign_f64();
        jac.fixed_view_mut::<3, 1>(0, k).copy_from(&col);
    }
    jac
}

/// Linear-velocity Jacobian (3 x n) of the COM of `link` (zero-based).
///
/// Columns of joints distal to the link are zero.
pub fn com_jacobian(model: &RobotModel, q: &[f64], link: usize) -> Result<DMatrix<f64>> {
    if link >= model.dof() {
        return Err(Error::IndexOutOfRange {
            index: link,
            len: model.dof(),
        });
    }
    let frames = forward_kinematics(model, q)?;
    let p = frames[link].apply(&model.links[link].com_vector());
    Ok(point_jacobian(model, &frames, link, &p))
}
