//! File formats: robot description JSON, parameter files, atomic writes.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gravity::GravityParams;
use crate::kinematics::{DhRow, LinkInertia, RobotModel};

/// Writes to a temporary file in the target directory, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Shortest round-trip decimal form, with negative zero written as `0`.
pub fn csv_number(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub sign: i8,
    pub theta_offset: f64,
    pub d: f64,
    pub alpha: f64,
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub mass: f64,
    pub com: [f64; 3],
}

/// On-disk robot description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotDescription {
    pub name: String,
    pub gravity: [f64; 3],
    pub joints: Vec<JointEntry>,
    pub links: Vec<LinkEntry>,
    /// Free-form notes; ignored by the loader.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl RobotDescription {
    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(context, e))
    }

    pub fn into_model(self) -> Result<RobotModel> {
        if self.joints.len() != self.links.len() {
            return Err(Error::InvalidModel(format!(
                "'joints' has {} entries but 'links' has {}",
                self.joints.len(),
                self.links.len()
            )));
        }
        let any_limits = self
            .joints
            .iter()
            .any(|j| j.limit_lo.is_some() || j.limit_hi.is_some());
        let limits = if any_limits {
            let mut v = Vec::with_capacity(self.joints.len());
            for (i, j) in self.joints.iter().enumerate() {
                match (j.limit_lo, j.limit_hi) {
                    (Some(lo), Some(hi)) => v.push((lo, hi)),
                    _ => {
                        return Err(Error::InvalidModel(format!(
                            "joints[{i}] needs both limit_lo and limit_hi when any joint has limits"
                        )))
                    }
                }
            }
            Some(v)
        } else {
            None
        };
        RobotModel::new(
            self.name,
            self.joints
                .iter()
                .map(|j| DhRow::new(j.sign, j.theta_offset, j.d, j.alpha, j.a))
                .collect(),
            self.links
                .iter()
                .map(|l| LinkInertia::new(l.mass, l.com))
                .collect(),
            Vector3::from(self.gravity),
            limits,
        )
    }

    pub fn from_model(model: &RobotModel) -> Self {
        Self {
            name: model.name.clone(),
            gravity: model.gravity.into(),
            joints: model
                .dh
                .iter()
                .enumerate()
                .map(|(i, r)| JointEntry {
                    sign: r.sign,
                    theta_offset: r.theta_offset,
                    d: r.d,
                    alpha: r.alpha,
                    a: r.a,
                    limit_lo: model.joint_limits.as_ref().map(|l| l[i].0),
                    limit_hi: model.joint_limits.as_ref().map(|l| l[i].1),
                })
                .collect(),
            links: model
                .links
                .iter()
                .map(|l| LinkEntry {
                    mass: l.mass,
                    com: l.com,
                })
                .collect(),
            notes: None,
        }
    }
}

pub fn load_robot(path: &Path) -> Result<RobotModel> {
    let text = read_to_string(path)?;
    RobotDescription::from_json(&text, &path.display().to_string())?.into_model()
}

/// Parameters given as a bare JSON array, or an object with a `params_full`
/// (identification report) or `params` key.
pub fn params_from_json(value: &serde_json::Value, context: &str) -> Result<GravityParams> {
    let array = match value {
        serde_json::Value::Array(_) => value,
        serde_json::Value::Object(map) => map
            .get("params_full")
            .or_else(|| map.get("params"))
            .ok_or_else(|| Error::parse(context, "expected 'params_full' or 'params' key"))?,
        _ => return Err(Error::parse(context, "expected an array or object")),
    };
    let values: Vec<f64> =
        serde_json::from_value(array.clone()).map_err(|e| Error::parse(context, e))?;
    GravityParams::new(values).map_err(|e| Error::parse(context, e))
}

pub fn load_params(path: &Path) -> Result<GravityParams> {
    let context = path.display().to_string();
    let text = read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::parse(&context, e))?;
    params_from_json(&value, &context)
}
