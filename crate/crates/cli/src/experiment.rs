//! Experiment file: robot, plant and controller parameters, gains and simulation settings.

use std::path::{Path, PathBuf};

use gravcomp::controller::{ControllerState, Gains, GravityPid, DEFAULT_WINDUP_LIMIT};
use gravcomp::io::{load_params, load_robot, params_from_json, read_to_string};
use gravcomp::plant::{Integrator, SimConfig, DEFAULT_ARMATURE};
use gravcomp::{Error, GravityParams, RobotModel};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ParamSource {
    Inline(Vec<f64>),
    File(PathBuf),
}

/// Either a flag per joint or a list of 1-based joint numbers.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ZeroMask {
    Flags(Vec<bool>),
    Joints(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PerJoint {
    All(f64),
    Each(Vec<f64>),
}

impl PerJoint {
    fn expand(&self, n: usize, what: &'static str) -> Result<Vec<f64>, Failure> {
        match self {
            PerJoint::All(v) => Ok(vec![*v; n]),
            PerJoint::Each(v) if v.len() == n => Ok(v.clone()),
            PerJoint::Each(v) => Err(Error::Dimension {
                what,
                expected: n,
                got: v.len(),
            }
            .into()),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub integrator: Option<Integrator>,
    pub armature: Option<PerJoint>,
    pub viscous: Option<PerJoint>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub q: Vec<f64>,
    pub qdot: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub q: Vec<f64>,
    pub qdot: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub robot: PathBuf,
    pub plant_params: Option<ParamSource>,
    pub controller_params: Option<ParamSource>,
    pub gains: Option<Gains>,
    pub zero_mask: Option<ZeroMask>,
    #[serde(default)]
    pub sim: SimSection,
    pub initial: InitialSection,
    pub target: Option<TargetSection>,
    pub windup: Option<f64>,
    pub torque_limit: Option<PerJoint>,
    pub release_t: Option<f64>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: RobotModel,
    pub params_plant: GravityParams,
    pub params_hat: GravityParams,
    pub law: GravityPid,
    pub state: ControllerState,
    pub config: SimConfig,
    pub q0: Vec<f64>,
    pub qdot0: Vec<f64>,
    pub release_t: f64,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_source(
    source: &Option<ParamSource>,
    base: &Path,
    fallback: &RobotModel,
    context: &str,
) -> Result<GravityParams, Failure> {
    let params = match source {
        None => GravityParams::from_model(fallback),
        Some(ParamSource::Inline(v)) => {
            params_from_json(&serde_json::Value::from(v.clone()), context)?
        }
        Some(ParamSource::File(p)) => load_params(&resolve(base, p))?,
    };
    if params.n_links() != fallback.dof() {
        return Err(Error::Dimension {
            what: "gravity parameters (links)",
            expected: fallback.dof(),
            got: params.n_links(),
        }
        .into());
    }
    Ok(params)
}

fn check_len(what: &'static str, n: usize, v: &[f64]) -> Result<(), Failure> {
    if v.len() != n {
        return Err(Error::Dimension {
            what,
            expected: n,
            got: v.len(),
        }
        .into());
    }
    Ok(())
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let context = path.display().to_string();
        let text = read_to_string(path)?;
        let file: ExperimentFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: context.clone(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let model = load_robot(&resolve(base, &file.robot))?;
        let n = model.dof();

        let params_plant = load_source(&file.plant_params, base, &model, &context)?;
        let params_hat = load_source(&file.controller_params, base, &model, &context)?;
        // the plant's link masses come from its own parameter vector
        let plant_model = model.with_links(params_plant.to_links())?;

        let gains = file.gains.unwrap_or_else(|| Gains::zeros(n));
        gains.validate(n)?;

        let mask = match file.zero_mask {
            None => vec![false; n],
            Some(ZeroMask::Flags(flags)) => {
                if flags.len() != n {
                    return Err(Error::Dimension {
                        what: "zero_mask",
                        expected: n,
                        got: flags.len(),
                    }
                    .into());
                }
                flags
            }
            Some(ZeroMask::Joints(joints)) => {
                let mut flags = vec![false; n];
                for j in joints {
                    if j == 0 || j > n {
                        return Err(Error::Parse {
                            context: context.clone(),
                            message: format!("zero_mask joint {j} is not in 1..={n}"),
                        }
                        .into());
                    }
                    flags[j - 1] = true;
                }
                flags
            }
        };

        let mut config = SimConfig::new(n);
        if let Some(dt) = file.sim.dt {
            config.dt = dt;
        }
        if let Some(duration) = file.sim.duration {
            config.duration = duration;
        }
        if let Some(integrator) = file.sim.integrator {
            config.integrator = integrator;
        }
        config.armature = match &file.sim.armature {
            Some(a) => a.expand(n, "sim.armature")?,
            None => vec![DEFAULT_ARMATURE; n],
        };
        if let Some(v) = &file.sim.viscous {
            config.viscous_friction = v.expand(n, "sim.viscous")?;
        }
        config.validate(n)?;

        check_len("initial.q", n, &file.initial.q)?;
        let qdot0 = file.initial.qdot.unwrap_or_else(|| vec![0.0; n]);
        check_len("initial.qdot", n, &qdot0)?;
        let (target_q, target_qdot) = match file.target {
            Some(t) => {
                let qd = t.qdot.unwrap_or_else(|| vec![0.0; n]);
                (t.q, qd)
            }
            None => (file.initial.q.clone(), vec![0.0; n]),
        };
        check_len("target.q", n, &target_q)?;
        check_len("target.qdot", n, &target_qdot)?;

        let mut law = GravityPid::new(model.clone(), params_hat.clone(), gains);
        law.windup_limit = file.windup.unwrap_or(DEFAULT_WINDUP_LIMIT);
        if !(law.windup_limit >= 0.0) {
            return Err(Error::InvalidArgument("windup must be non-negative".into()).into());
        }
        law.torque_limit = file
            .torque_limit
            .as_ref()
            .map(|t| t.expand(n, "torque_limit"))
            .transpose()?;

        let mut state = ControllerState::regulate(target_q).with_zero_mask(mask);
        state.target_qdot = target_qdot;

        let release_t = file.release_t.unwrap_or(0.0);
        Ok(Self {
            model: plant_model,
            params_plant,
            params_hat,
            law,
            state,
            config,
            q0: file.initial.q,
            qdot0,
            release_t,
        })
    }
}
