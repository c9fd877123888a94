//! Gravity-feedforward PID joint control, gain tuning and trajectory metrics.
//!
//! The control law is
//! `tau = G_hat(q_m) + Kp (q_d - q_m) + Kv (qd_d - qd_m) + Ki * integral(q_d - q_m)`
//! with diagonal gains, a clamped integral and an optional per-joint mask that
//! forces selected joints to zero torque.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gravity::{gravity_torque, GravityParams};
use crate::kinematics::{check_len, JointState, RobotModel};
use crate::plant::{simulate, SimConfig, TorqueController, TrajectoryLog};

pub const DEFAULT_WINDUP_LIMIT: f64 = 1.0;

/// Diagonal PID gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub kv: Vec<f64>,
}

impl Gains {
    pub fn zeros(n: usize) -> Self {
        Self::uniform(n, 0.0, 0.0, 0.0)
    }

    pub fn uniform(n: usize, kp: f64, ki: f64, kv: f64) -> Self {
        Self {
            kp: vec![kp; n],
            ki: vec![ki; n],
            kv: vec![kv; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("kp", n, self.kp.len())?;
        check_len("ki", n, self.ki.len())?;
        check_len("kv", n, self.kv.len())?;
        if self
            .kp
            .iter()
            .chain(&self.ki)
            .chain(&self.kv)
            .any(|g| !(*g >= 0.0) || !g.is_finite())
        {
            return Err(Error::InvalidArgument(
                "gains must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Accumulated position error (rad s).
    pub integral: Vec<f64>,
    pub target_q: Vec<f64>,
    pub target_qdot: Vec<f64>,
    /// Joints forced to output exactly zero torque.
    pub zero_mask: Vec<bool>,
}

impl ControllerState {
    /// Regulation to `target_q` with zero target velocity and no mask.
    pub fn regulate(target_q: Vec<f64>) -> Self {
        let n = target_q.len();
        Self {
            integral: vec![0.0; n],
            target_q,
            target_qdot: vec![0.0; n],
            zero_mask: vec![false; n],
        }
    }

    pub fn with_zero_mask(mut self, mask: Vec<bool>) -> Self {
        self.zero_mask = mask;
        self
    }

    fn check(&self, n: usize) -> Result<()> {
        check_len("integral", n, self.integral.len())?;
        check_len("target positions", n, self.target_q.len())?;
        check_len("target velocities", n, self.target_qdot.len())?;
        check_len("zero mask", n, self.zero_mask.len())
    }
}

/// Gravity feedforward plus PID feedback.
#[derive(Debug, Clone)]
pub struct GravityPid {
    pub model: RobotModel,
    /// Parameters used for the feedforward term.
    pub params_hat: GravityParams,
    pub gains: Gains,
    /// Bound on `|integral|` per joint (rad s).
    pub windup_limit: f64,
    pub torque_limit: Option<Vec<f64>>,
}

impl GravityPid {
    pub fn new(model: RobotModel, params_hat: GravityParams, gains: Gains) -> Self {
        Self {
            model,
            params_hat,
            gains,
            windup_limit: DEFAULT_WINDUP_LIMIT,
            torque_limit: None,
        }
    }

    pub fn control_torque(
        &self,
        state: &ControllerState,
        measured: &JointState,
        dt: f64,
    ) -> Result<(DVector<f64>, ControllerState)> {
        let n = self.model.dof();
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        measured.check(n)?;
        state.check(n)?;
        self.gains.validate(n)?;

        let feedforward = gravity_torque(&self.model, &measured.q, &self.params_hat)?;
        let mut next = state.clone();
        let mut tau = DVector::zeros(n);
        for j in 0..n {
            if state.zero_mask[j] {
                continue;
            }
            let e = state.target_q[j] - measured.q[j];
            let edot = state.target_qdot[j] - measured.qdot[j];
            next.integral[j] =
                (state.integral[j] + e * dt).clamp(-self.windup_limit, self.windup_limit);
            let mut t = feedforward[j]
                + self.gains.kp[j] * e
                + self.gains.kv[j] * edot
                + self.gains.ki[j] * next.integral[j];
            if let Some(limit) = &self.torque_limit {
                t = t.clamp(-limit[j], limit[j]);
            }
            tau[j] = t;
        }
        Ok((tau, next))
    }

    pub fn into_controller(self, state: ControllerState) -> GravityPidController {
        GravityPidController { law: self, state }
    }
}

/// A [`GravityPid`] together with its evolving state.
#[derive(Debug, Clone)]
pub struct GravityPidController {
    pub law: GravityPid,
    pub state: ControllerState,
}

impl TorqueController for GravityPidController {
    fn torque(&mut self, _t: f64, measured: &JointState, dt: f64) -> Result<DVector<f64>> {
        let (tau, next) = self.law.control_torque(&self.state, measured, dt)?;
        self.state = next;
        Ok(tau)
    }
}

fn release_index(log: &TrajectoryLog, release_t: f64) -> Result<usize> {
    let (first, last) = match (log.rows.first(), log.rows.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(Error::InvalidArgument("trajectory log is empty".into())),
    };
    let slack = 1e-9 * log.dt.max(f64::EPSILON);
    if release_t < first - slack || release_t > last + slack {
        return Err(Error::InvalidArgument(format!(
            "release time {release_t} outside log range [{first}, {last}]"
        )));
    }
    Ok(log
        .rows
        .iter()
        .position(|r| r.t >= release_t - slack)
        .unwrap_or(log.rows.len() - 1))
}

/// Per-joint maximum `|q(t) - q(release_t)|` over `t >= release_t`.
pub fn drift_metric(log: &TrajectoryLog, release_t: f64) -> Result<Vec<f64>> {
    let start = release_index(log, release_t)?;
    let reference = &log.rows[start].q;
    let mut drift = vec![0.0; reference.len()];
    for row in &log.rows[start..] {
        for (d, (q, q0)) in drift.iter_mut().zip(row.q.iter().zip(reference)) {
            *d = f64::max(*d, (q - q0).abs());
        }
    }
    Ok(drift)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Oscillation {
    Oscillatory {
        /// Half peak-to-peak (rad).
        amplitude: f64,
        /// From the mean zero-crossing interval (Hz).
        frequency: f64,
    },
    NotOscillatory,
}

impl Oscillation {
    pub fn is_oscillatory(&self) -> bool {
        matches!(self, Oscillation::Oscillatory { .. })
    }
}

/// Zero crossings of `x - mean(x)`, linearly interpolated in time.
fn mean_crossings(t: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let mut crossings = Vec::new();
    for i in 1..x.len() {
        let a = x[i - 1] - mean;
        let b = x[i] - mean;
        if (a < 0.0) != (b < 0.0) {
            let frac = if b == a { 0.0 } else { a / (a - b) };
            crossings.push(t[i - 1] + frac * (t[i] - t[i - 1]));
        }
    }
    (mean, crossings)
}

/// Amplitude and frequency of a sampled signal.
pub fn signal_oscillation(t: &[f64], x: &[f64]) -> Oscillation {
    let (_, crossings) = mean_crossings(t, x);
    if crossings.len() < 3 {
        return Oscillation::NotOscillatory;
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let half_period =
        (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    Oscillation::Oscillatory {
        amplitude: 0.5 * (max - min),
        frequency: 1.0 / (2.0 * half_period),
    }
}

/// Oscillation of one joint over the time window `[t0, t1]`.
pub fn oscillation_metrics(
    log: &TrajectoryLog,
    joint: usize,
    window: (f64, f64),
) -> Result<Oscillation> {
    if joint >= log.dof() {
        return Err(Error::IndexOutOfRange {
            index: joint,
            len: log.dof(),
        });
    }
    if !(window.0 < window.1) {
        return Err(Error::InvalidArgument(format!("empty window {window:?}")));
    }
    let (t, x): (Vec<f64>, Vec<f64>) = log
        .rows
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| (r.t, r.q[joint]))
        .unzip();
    Ok(signal_oscillation(&t, &x))
}

/// Geometric-mean amplitude ratio over one full period, from the peaks of
/// successive half cycles. `None` with fewer than four complete half cycles.
pub fn amplitude_ratio_per_period(t: &[f64], x: &[f64]) -> Option<f64> {
    let (mean, crossings) = mean_crossings(t, x);
    if crossings.len() < 5 {
        return None;
    }
    let mut peaks = Vec::with_capacity(crossings.len() - 1);
    let mut idx = 0;
    for w in crossings.windows(2) {
        while idx < t.len() && t[idx] < w[0] {
            idx += 1;
        }
        let mut peak: f64 = 0.0;
        while idx < t.len() && t[idx] <= w[1] {
            peak = peak.max((x[idx] - mean).abs());
            idx += 1;
        }
        peaks.push(peak);
    }
    // the first half cycle carries the initial transient
    let peaks = &peaks[1..];
    if peaks.len() < 3 || peaks.contains(&0.0) {
        return None;
    }
    let log_sum: f64 = peaks.windows(3).map(|w| (w[2] / w[0]).ln()).sum();
    Some((log_sum / (peaks.len() - 2) as f64).exp())
}

/// Closed-loop behaviour of one joint under a trial gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Response {
    /// Amplitude shrinks by more than the band per period, or no oscillation at all.
    Decaying,
    Sustained {
        ratio: f64,
        period: f64,
    },
    Growing {
        ratio: f64,
    },
    /// Left the neighbourhood of the target.
    Escaped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    /// Regulation target for every joint.
    pub target: Vec<f64>,
    /// Initial displacement of the tuned joint from its target (rad).
    pub offset: f64,
    /// Bisection bracket for the critical proportional gain.
    pub kp_bracket: (f64, f64),
    /// Relative width at which bisection stops.
    pub kp_rel_tol: f64,
    /// Allowed amplitude change per period for a sustained oscillation.
    pub sustain_band: f64,
    /// Deviation from the target treated as escape (rad).
    pub escape_bound: f64,
    /// Amplitude ratio per period that ends the damping stage.
    pub kv_target_ratio: f64,
    /// Max `|q - q_d|` over the last fifth of the window that ends the integral stage.
    pub offset_tol: f64,
    pub max_iter: usize,
    /// Joints to tune; the others keep zero gains. Empty tunes every joint.
    pub joints: Vec<usize>,
}

impl TuneOptions {
    pub fn new(target: Vec<f64>) -> Self {
        Self {
            target,
            offset: 0.05,
            kp_bracket: (1e-2, 1e4),
            kp_rel_tol: 1e-3,
            sustain_band: 0.05,
            escape_bound: 0.5,
            kv_target_ratio: 0.5,
            offset_tol: 1e-3,
            max_iter: 60,
            joints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalGain {
    pub kp: f64,
    /// Oscillation period at the critical gain (s).
    pub period: f64,
    pub amplitude_ratio: f64,
}

/// Plant and controller description shared by the tuning stages.
#[derive(Debug, Clone, Copy)]
pub struct TuningPlant<'a> {
    pub model: &'a RobotModel,
    pub params_plant: &'a GravityParams,
    pub params_hat: &'a GravityParams,
    pub config: &'a SimConfig,
}

impl TuningPlant<'_> {
    fn run_joint(
        &self,
        joint: usize,
        kp: f64,
        kv: f64,
        ki: f64,
        opts: &TuneOptions,
    ) -> Result<TrajectoryLog> {
        let n = self.model.dof();
        let mut gains = Gains::zeros(n);
        gains.kp[joint] = kp;
        gains.kv[joint] = kv;
        gains.ki[joint] = ki;
        let law = GravityPid::new(self.model.clone(), self.params_hat.clone(), gains);
        let mut ctl = law.into_controller(ControllerState::regulate(opts.target.clone()));
        let mut q0 = opts.target.clone();
        q0[joint] += opts.offset;
        let config = self.config.clone().only_free(joint);
        simulate(
            self.model,
            self.params_plant,
            &mut ctl,
            &config,
            &q0,
            &vec![0.0; n],
        )
    }

    fn classify(&self, joint: usize, kp: f64, kv: f64, opts: &TuneOptions) -> Result<Response> {
        let log = match self.run_joint(joint, kp, kv, 0.0, opts) {
            Ok(log) => log,
            Err(Error::Simulation { .. }) => return Ok(Response::Escaped),
            Err(e) => return Err(e),
        };
        let t = log.times();
        let x = log.joint_positions(joint);
        let target = opts.target[joint];
        if x.iter().any(|v| (v - target).abs() > opts.escape_bound) {
            return Ok(Response::Escaped);
        }
        Ok(match amplitude_ratio_per_period(&t, &x) {
            None => Response::Decaying,
            Some(r) if r < 1.0 - opts.sustain_band => Response::Decaying,
            Some(r) if r > 1.0 + opts.sustain_band => Response::Growing { ratio: r },
            Some(r) => match signal_oscillation(&t, &x) {
                Oscillation::Oscillatory { frequency, .. } => Response::Sustained {
                    ratio: r,
                    period: 1.0 / frequency,
                },
                Oscillation::NotOscillatory => Response::Decaying,
            },
        })
    }
}

/// Smallest proportional gain (others locked, `ki = kv = 0`) at which `joint`
/// settles into a constant-amplitude oscillation about its target.
pub fn tune_kp_oscillation(
    plant: &TuningPlant<'_>,
    joint: usize,
    opts: &TuneOptions,
) -> Result<CriticalGain> {
    let n = plant.model.dof();
    if joint >= n {
        return Err(Error::IndexOutOfRange {
            index: joint,
            len: n,
        });
    }
    check_len("tuning target", n, opts.target.len())?;
    plant.config.validate(n)?;
    let (mut lo, mut hi) = opts.kp_bracket;
    if !(0.0 < lo && lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "invalid kp bracket ({lo}, {hi})"
        )));
    }
    let below = |r: &Response| matches!(r, Response::Decaying | Response::Escaped);
    let bracket_err = |lo_r: &Response, hi_r: &Response| {
        Error::Tuning(format!(
            "no oscillatory regime for joint {} in kp bracket [{}, {}] (low end: {:?}, high end: {:?})",
            joint + 1,
            opts.kp_bracket.0,
            opts.kp_bracket.1,
            lo_r,
            hi_r
        ))
    };

    let lo_resp = plant.classify(joint, lo, 0.0, opts)?;
    if let Response::Sustained { ratio, period } = lo_resp {
        return Ok(CriticalGain {
            kp: lo,
            period,
            amplitude_ratio: ratio,
        });
    }
    let mut hi_resp = plant.classify(joint, hi, 0.0, opts)?;
    if below(&hi_resp) || !below(&lo_resp) {
        return Err(bracket_err(&lo_resp, &hi_resp));
    }
    for _ in 0..opts.max_iter {
        if hi - lo <= opts.kp_rel_tol * hi {
            break;
        }
        // geometric midpoint: the bracket spans decades
        let mid = (lo * hi).sqrt();
        let r = plant.classify(joint, mid, 0.0, opts)?;
        if below(&r) {
            lo = mid;
        } else {
            hi = mid;
            hi_resp = r;
        }
    }
    match hi_resp {
        Response::Sustained { ratio, period } => Ok(CriticalGain {
            kp: hi,
            period,
            amplitude_ratio: ratio,
        }),
        other => Err(bracket_err(&lo_resp, &other)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedGains {
    pub gains: Gains,
    /// One entry per tuned joint, in tuning order.
    pub critical: Vec<CriticalGain>,
}

/// Full per-joint tuning sequence: critical `kp` by bisection, then `kv`
/// raised until the oscillation amplitude drops to `kv_target_ratio` per
/// period, then `ki` raised until the residual offset is within `offset_tol`.
pub fn tune_gains(plant: &TuningPlant<'_>, opts: &TuneOptions) -> Result<TunedGains> {
    let n = plant.model.dof();
    let mut gains = Gains::zeros(n);
    let joints: Vec<usize> = if opts.joints.is_empty() {
        (0..n).collect()
    } else {
        opts.joints.clone()
    };
    if let Some(&bad) = joints.iter().find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let mut critical = Vec::with_capacity(joints.len());
    for j in joints {
        let crit = tune_kp_oscillation(plant, j, opts)?;
        let kp = crit.kp;

        let mut kv = 1e-3 * kp * crit.period;
        let mut settled = false;
        for _ in 0..opts.max_iter {
            match plant.classify(j, kp, kv, opts)? {
                Response::Decaying => {
                    let log = plant.run_joint(j, kp, kv, 0.0, opts)?;
                    let ratio = amplitude_ratio_per_period(&log.times(), &log.joint_positions(j));
                    if ratio.is_none_or(|r| r <= opts.kv_target_ratio) {
                        settled = true;
                        break;
                    }
                }
                Response::Escaped | Response::Growing { .. } => {
                    return Err(Error::Tuning(format!(
                        "joint {} lost stability while raising kv to {kv}",
                        j + 1
                    )))
                }
                Response::Sustained { .. } => {}
            }
            kv *= 1.5;
        }
        if !settled {
            return Err(Error::Tuning(format!(
                "joint {}: kv stage did not converge",
                j + 1
            )));
        }

        let ki = tune_ki(plant, j, kp, kv, crit.period, opts)?;
        gains.kp[j] = kp;
        gains.kv[j] = kv;
        gains.ki[j] = ki;
        critical.push(crit);
    }
    Ok(TunedGains { gains, critical })
}

fn final_offset(log: &TrajectoryLog, joint: usize, target: f64) -> f64 {
    let start = log.rows.len() * 4 / 5;
    log.rows[start..]
        .iter()
        .map(|r| (r.q[joint] - target).abs())
        .fold(0.0, f64::max)
}

fn tune_ki(
    plant: &TuningPlant<'_>,
    joint: usize,
    kp: f64,
    kv: f64,
    period: f64,
    opts: &TuneOptions,
) -> Result<f64> {
    let target = opts.target[joint];
    let log = plant.run_joint(joint, kp, kv, 0.0, opts)?;
    if final_offset(&log, joint, target) <= opts.offset_tol {
        return Ok(0.0);
    }
    let mut ki = 0.01 * kp / period;
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..opts.max_iter {
        let log = match plant.run_joint(joint, kp, kv, ki, opts) {
            Ok(log) => log,
            Err(Error::Simulation { .. }) => break,
            Err(e) => return Err(e),
        };
        let x = log.joint_positions(joint);
        if x.iter().any(|v| (v - target).abs() > opts.escape_bound) {
            break;
        }
        if amplitude_ratio_per_period(&log.times(), &x).is_some_and(|r| r >= 1.0) {
            break;
        }
        let offset = final_offset(&log, joint, target);
        if best.is_none_or(|(_, b)| offset < b) {
            best = Some((ki, offset));
        }
        if offset <= opts.offset_tol {
            return Ok(ki);
        }
        ki *= 2.0;
    }
    match best {
        Some((ki, offset)) => Err(Error::Tuning(format!(
            "joint {}: best ki {ki} leaves offset {offset:.3e} rad above {:.3e}",
            joint + 1,
            opts.offset_tol
        ))),
        None => Err(Error::Tuning(format!(
            "joint {}: no stable ki found",
            joint + 1
        ))),
    }
}
