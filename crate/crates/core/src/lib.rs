//! Gravity compensation for serial manipulators: DH kinematics, gravity
//! torque models and their linear regressor, least-squares parameter
//! identification, a rigid-body plant simulator and a gravity-feedforward
//! PID controller.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod gravity;
pub mod identification;
pub mod io;
pub mod kinematics;
pub mod linalg;
pub mod plant;

pub use controller::{
    drift_metric, oscillation_metrics, tune_gains, tune_kp_oscillation, ControllerState,
    CriticalGain, Gains, GravityPid, GravityPidController, Oscillation, TuneOptions, TunedGains,
    TuningPlant,
};
pub use error::{Error, Result};
pub use gravity::{
    base_reduction, gravity_regressor, gravity_torque, potential_energy, BaseParamMap,
    GravityParams, PARAMS_PER_LINK,
};
pub use identification::{identify, synth_dataset, Dataset, IdentReport, IdentifyOptions, Sample};
pub use kinematics::{forward_kinematics, DhRow, JointState, LinkInertia, RobotModel, Transform};
pub use plant::{simulate, Integrator, SimConfig, TorqueController, TrajectoryLog};
