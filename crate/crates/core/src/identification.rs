//! Least-squares identification of gravity parameters from static
//! (pose, holding torque) samples.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gravity::{
    gravity_regressor, gravity_torque, sample_poses, stacked_regressor, BaseParamMap,
    GravityParams, DEFAULT_RANK_TOL, PARAMS_PER_LINK,
};
use crate::io::write_atomic;
use crate::kinematics::{check_len, RobotModel};
use crate::linalg::{normal_equations, svd_least_squares};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub q: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Ordered (pose, torque) samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: Option<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self {
            samples,
            meta: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Joint count shared by all samples, checked.
    pub fn dof(&self) -> Result<usize> {
        let first = self.samples.first().ok_or(Error::EmptyDataset)?;
        let n = first.q.len();
        for s in &self.samples {
            check_len("sample positions", n, s.q.len())?;
            check_len("sample torques", n, s.tau.len())?;
            if s.q.iter().chain(&s.tau).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "dataset contains non-finite values".into(),
                ));
            }
        }
        Ok(n)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let n = self.dof()?;
        let mut out = String::new();
        let header: Vec<String> = (1..=n)
            .map(|i| format!("q{i}"))
            .chain((1..=n).map(|i| format!("tau{i}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for s in &self.samples {
            let row: Vec<String> =
                s.q.iter()
                    .chain(&s.tau)
                    .map(|v| crate::io::csv_number(*v))
                    .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string()?.as_bytes())
    }

    /// Parses the `q1..qn,tau1..taun` format. A header-only file yields an empty dataset.
    pub fn from_csv_reader(reader: impl std::io::Read, context: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::parse(context, e))?.clone();
        let cols = headers.len();
        if cols == 0 || cols % 2 != 0 {
            return Err(Error::parse(
                context,
                format!("expected 2n columns, found {cols}"),
            ));
        }
        let n = cols / 2;
        for (i, h) in headers.iter().enumerate() {
            let expected = if i < n {
                format!("q{}", i + 1)
            } else {
                format!("tau{}", i - n + 1)
            };
            if h.trim() != expected {
                return Err(Error::parse(
                    context,
                    format!("column {} should be '{expected}', found '{h}'", i + 1),
                ));
            }
        }
        let mut samples = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::parse(context, e))?;
            let values = record
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(format!("{context}, line {}", line + 2), e))?;
            samples.push(Sample {
                q: values[..n].to_vec(),
                tau: values[n..].to_vec(),
            });
        }
        Ok(Self::new(samples))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut data = Self::from_csv_reader(file, &path.display().to_string())?;
        data.meta = Some(path.display().to_string());
        Ok(data)
    }
}

/// Stacked regressor and torque vector over a dataset.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub regressor: DMatrix<f64>,
    pub torques: DVector<f64>,
    /// Rows per sample.
    pub dof: usize,
}

impl StackedSystem {
    pub fn new(regressor: DMatrix<f64>, torques: DVector<f64>, dof: usize) -> Result<Self> {
        check_len("stacked torques", regressor.nrows(), torques.len())?;
        if dof == 0 || !regressor.nrows().is_multiple_of(dof) {
            return Err(Error::InvalidArgument(format!(
                "{} rows is not a multiple of {dof} joints",
                regressor.nrows()
            )));
        }
        Ok(Self {
            regressor,
            torques,
            dof,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.regressor.nrows() / self.dof
    }
}

pub fn stack(model: &RobotModel, data: &Dataset) -> Result<StackedSystem> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.dof()?;
    check_len("dataset joints", model.dof(), n)?;
    let poses: Vec<Vec<f64>> = data.samples.iter().map(|s| s.q.clone()).collect();
    let regressor = stacked_regressor(model, &poses)?;
    let torques = DVector::from_iterator(
        n * data.len(),
        data.samples.iter().flat_map(|s| s.tau.iter().copied()),
    );
    StackedSystem::new(regressor, torques, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    Svd,
    NormalEquations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative singular-value cutoff.
    pub tol: f64,
    pub method: SolveMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            method: SolveMethod::Svd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentReport {
    /// Minimum-norm full parameter vector.
    pub params_full: GravityParams,
    /// Identifiable combinations, one per entry of `base_columns`.
    pub params_base: Vec<f64>,
    pub base_columns: Vec<usize>,
    pub residual_rms: f64,
    pub per_joint_rms: Vec<f64>,
    pub condition_number: f64,
    pub rank: usize,
    pub n_samples: usize,
    /// RMS prediction error on held-out samples, when a split was requested.
    pub holdout_rms: Option<f64>,
    pub method: SolveMethod,
}

impl IdentReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse("identification report", e))?;
        write_atomic(path, format!("{text}\n").as_bytes())
    }
}

fn residual_stats(system: &StackedSystem, params: &DVector<f64>) -> (f64, Vec<f64>) {
    let residual = &system.regressor * params - &system.torques;
    let rows = residual.len().max(1) as f64;
    let rms = residual.norm() / rows.sqrt();
    let samples = system.n_samples().max(1) as f64;
    let per_joint = (0..system.dof)
        .map(|j| {
            let ss: f64 = residual
                .iter()
                .skip(j)
                .step_by(system.dof)
                .map(|r| r * r)
                .sum();
            (ss / samples).sqrt()
        })
        .collect();
    (rms, per_joint)
}

/// Least-squares fit of the stacked system.
pub fn solve(system: &StackedSystem, opts: &SolveOptions) -> Result<IdentReport> {
    let svd = svd_least_squares(&system.regressor, &system.torques, opts.tol);
    let params = match opts.method {
        SolveMethod::Svd => svd.x.clone(),
        SolveMethod::NormalEquations => normal_equations(&system.regressor, &system.torques)
            .ok_or(Error::SingularNormalEquations)?,
    };
    let (residual_rms, per_joint_rms) = residual_stats(system, &params);

    let cols = system.regressor.ncols();
    let base = BaseParamMap::from_regressor(&system.regressor, DEFAULT_RANK_TOL);
    let params_full = if cols.is_multiple_of(PARAMS_PER_LINK) && cols > 0 {
        GravityParams::from_dvector(&params)?
    } else {
        return Err(Error::InvalidArgument(format!(
            "{cols} regressor columns is not a multiple of {PARAMS_PER_LINK}"
        )));
    };

    Ok(IdentReport {
        params_base: base.base_params(&params_full),
        base_columns: base.independent_columns,
        params_full,
        residual_rms,
        per_joint_rms,
        condition_number: svd.condition_number(),
        rank: svd.rank,
        n_samples: system.n_samples(),
        holdout_rms: None,
        method: opts.method,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifyOptions {
    pub solve: SolveOptions,
    /// Fraction of samples held out for validation (every k-th sample).
    pub holdout_fraction: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            holdout_fraction: 0.2,
        }
    }
}

/// Fits all samples, then reports a held-out error from a separate fit on the
/// remaining samples. The returned parameters always use every sample.
pub fn identify(model: &RobotModel, data: &Dataset, opts: &IdentifyOptions) -> Result<IdentReport> {
    let system = stack(model, data)?;
    let mut report = solve(&system, &opts.solve)?;

    if opts.holdout_fraction > 0.0 && opts.holdout_fraction < 1.0 {
        let every = (1.0 / opts.holdout_fraction).round().max(2.0) as usize;
        let (held, train): (Vec<_>, Vec<_>) = data
            .samples
            .iter()
            .enumerate()
            .partition(|(i, _)| i % every == every - 1);
        if !held.is_empty() && !train.is_empty() {
            let train = Dataset::new(train.into_iter().map(|(_, s)| s.clone()).collect());
            let held = Dataset::new(held.into_iter().map(|(_, s)| s.clone()).collect());
            let fit = solve(&stack(model, &train)?, &opts.solve)?;
            let held_system = stack(model, &held)?;
            let (rms, _) = residual_stats(&held_system, &fit.params_full.to_dvector());
            report.holdout_rms = Some(rms);
        }
    }
    Ok(report)
}

/// Synthetic dataset: uniform poses and exact holding torques plus i.i.d.
/// Gaussian noise of standard deviation `noise_std` on each joint.
pub fn synth_dataset(
    model: &RobotModel,
    params_true: &GravityParams,
    n_poses: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_poses < 1 {
        return Err(Error::InvalidArgument("n_poses must be at least 1".into()));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise_std must be finite and non-negative, got {noise_std}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = sample_poses(model, n_poses, &mut rng);
    let torques = poses
        .par_iter()
        .map(|q| gravity_torque(model, q, params_true))
        .collect::<Result<Vec<_>>>()?;
    let noise = Normal::new(0.0, noise_std).expect("validated std");
    let samples = poses
        .into_iter()
        .zip(torques)
        .map(|(q, tau)| {
            let tau = tau
                .iter()
                .map(|t| {
                    if noise_std > 0.0 {
                        t + noise.sample(&mut rng)
                    } else {
                        *t
                    }
                })
                .collect();
            Sample { q, tau }
        })
        .collect();
    Ok(Dataset {
        samples,
        meta: Some(format!(
            "synthetic: {n_poses} poses, noise_std {noise_std}, seed {seed}"
        )),
    })
}

/// Holding torque predicted by an identification result.
pub fn predict(model: &RobotModel, report: &IdentReport, q: &[f64]) -> Result<DVector<f64>> {
    check_len(
        "report parameters",
        PARAMS_PER_LINK * model.dof(),
        report.params_full.as_slice().len(),
    )?;
    Ok(gravity_regressor(model, q)? * report.params_full.to_dvector())
}
