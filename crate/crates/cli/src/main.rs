//! `gravcomp` command-line front end.
//!
//! Exit codes: 0 ok, 2 parse/invalid input, 3 dimension mismatch or empty
//! dataset, 4 I/O, 5 degenerate regressor, 6 simulation divergence,
//! 7 tuning failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod experiment;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gravcomp::controller::{
    drift_metric, oscillation_metrics, tune_gains, Oscillation, TuneOptions, TuningPlant,
};
use gravcomp::gravity::{base_reduction, param_name};
use gravcomp::identification::{
    identify, synth_dataset, Dataset, IdentifyOptions, SolveMethod, SolveOptions,
};
use gravcomp::io::{load_params, load_robot, write_atomic};
use gravcomp::kinematics::forward_kinematics;
use gravcomp::plant::simulate;
use gravcomp::{Error, GravityParams};

use experiment::Experiment;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match (&e, e.root()) {
            (Error::Simulation { .. }, _) => 6,
            (_, Error::Io { .. }) => 4,
            (_, Error::Dimension { .. } | Error::EmptyDataset | Error::IndexOutOfRange { .. }) => 3,
            (_, Error::Tuning(_)) => 7,
            (_, Error::SingularNormalEquations) => 5,
            _ => 2,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(
    name = "gravcomp",
    version,
    about = "Manipulator gravity modelling, identification and control"
)]
struct Cli {
    /// Worker threads for regressor and dataset assembly (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print frame origins and orientations for a joint configuration.
    Fk {
        #[arg(long)]
        robot: PathBuf,
        /// Comma-separated joint angles (rad).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        q: Vec<f64>,
    },
    /// Write a synthetic dataset of holding torques.
    Synth {
        #[arg(long)]
        robot: PathBuf,
        /// Parameter file (JSON array or identification report); defaults to the robot's links.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        poses: usize,
        /// Standard deviation of additive torque noise (N m).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit gravity parameters to a dataset.
    Identify {
        #[arg(long)]
        robot: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Report output (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Relative singular-value cutoff.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Method::Svd)]
        method: Method,
        /// Fraction of samples held out for validation.
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
    },
    /// Run a closed-loop experiment and write its trajectory.
    Simulate {
        #[arg(long)]
        experiment: PathBuf,
        /// Trajectory output (CSV).
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune PID gains for an experiment's plant and controller parameters.
    Tune {
        #[arg(long)]
        experiment: PathBuf,
        /// Gains output (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated 1-based joints to tune (default: all unmasked joints).
        #[arg(long, value_delimiter = ',')]
        joints: Vec<usize>,
    },
    /// Report the identifiable parameter structure of a robot.
    Rank {
        #[arg(long)]
        robot: PathBuf,
        #[arg(long, default_value_t = 500)]
        poses: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative pivot threshold for the rank decision.
        #[arg(long, default_value_t = gravcomp::gravity::DEFAULT_RANK_TOL)]
        tol: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Svd,
    Normal,
}

/// Nine significant digits, without a negative zero.
fn sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    if rounded == 0.0 {
        return "0".into();
    }
    let mag = rounded.abs();
    if (1e-4..1e9).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn cmd_fk(robot: &Path, q: &[f64]) -> CmdResult {
    let model = load_robot(robot)?;
    let frames = forward_kinematics(&model, q)?;
    let mut out = String::new();
    for (k, f) in frames.iter().enumerate() {
        let o = f.translation;
        let _ = writeln!(out, "frame {}", k + 1);
        let _ = writeln!(out, "  origin {} {} {}", sig9(o.x), sig9(o.y), sig9(o.z));
        for r in 0..3 {
            let row = f.rotation.row(r);
            let _ = writeln!(
                out,
                "  rot    {} {} {}",
                sig9(row[0]),
                sig9(row[1]),
                sig9(row[2])
            );
        }
    }
    print!("{out}");
    Ok(())
}

fn cmd_synth(
    robot: &Path,
    params: Option<&Path>,
    poses: usize,
    noise: f64,
    seed: u64,
    out: &Path,
) -> CmdResult {
    let model = load_robot(robot)?;
    let params = match params {
        Some(p) => load_params(p)?,
        None => GravityParams::from_model(&model),
    };
    let data = synth_dataset(&model, &params, poses, noise, seed)?;
    data.write_csv(out)?;
    println!("wrote {} samples to {}", data.len(), out.display());
    Ok(())
}

fn cmd_identify(
    robot: &Path,
    dataset: &Path,
    out: &Path,
    tol: f64,
    method: Method,
    holdout: f64,
) -> CmdResult {
    let model = load_robot(robot)?;
    let data = Dataset::read_csv(dataset)?;
    if data.is_empty() {
        return Err(Failure::new(
            3,
            format!("{}: no samples", dataset.display()),
        ));
    }
    let opts = IdentifyOptions {
        solve: SolveOptions {
            tol,
            method: match method {
                Method::Svd => SolveMethod::Svd,
                Method::Normal => SolveMethod::NormalEquations,
            },
        },
        holdout_fraction: holdout,
    };
    let report = identify(&model, &data, &opts)?;
    if report.rank == 0 {
        return Err(Failure::new(
            5,
            "regressor has rank 0: the dataset carries no gravity information (zero gravity or degenerate geometry)",
        ));
    }
    report.write_json(out)?;
    println!("samples        {}", report.n_samples);
    println!("rank           {}", report.rank);
    println!("condition      {}", sig9(report.condition_number));
    println!("residual_rms   {}", sig9(report.residual_rms));
    if let Some(h) = report.holdout_rms {
        println!("holdout_rms    {}", sig9(h));
    }
    let per_joint: Vec<String> = report.per_joint_rms.iter().map(|v| sig9(*v)).collect();
    println!("per_joint_rms  {}", per_joint.join(" "));
    Ok(())
}

#[allow(clippy::needless_range_loop)]
fn cmd_simulate(experiment: &Path, out: &Path) -> CmdResult {
    let exp = Experiment::load(experiment)?;
    let mut ctl = exp.law.clone().into_controller(exp.state.clone());
    let log = simulate(
        &exp.model,
        &exp.params_plant,
        &mut ctl,
        &exp.config,
        &exp.q0,
        &exp.qdot0,
    )?;
    log.write_csv(out)?;

    let drift = drift_metric(&log, exp.release_t)?;
    let t_end = log.rows.last().map_or(0.0, |r| r.t);
    let window = (0.5 * t_end, t_end);
    let last = log.rows.last().expect("log has at least one row");
    println!("joint drift_rad final_error_rad amplitude_rad frequency_hz");
    for j in 0..log.dof() {
        let err = (last.q[j] - exp.state.target_q[j]).abs();
        let (amp, freq) = if window.0 < window.1 {
            match oscillation_metrics(&log, j, window)? {
                Oscillation::Oscillatory {
                    amplitude,
                    frequency,
                } => (sig9(amplitude), sig9(frequency)),
                Oscillation::NotOscillatory => ("-".into(), "-".into()),
            }
        } else {
            ("-".into(), "-".into())
        };
        println!(
            "{} {} {} {} {}",
            j + 1,
            sig9(drift[j]),
            sig9(err),
            amp,
            freq
        );
    }
    Ok(())
}

fn cmd_tune(experiment: &Path, out: &Path, joints: &[usize]) -> CmdResult {
    let exp = Experiment::load(experiment)?;
    let n = exp.model.dof();
    let mut opts = TuneOptions::new(exp.state.target_q.clone());
    opts.joints = if joints.is_empty() {
        (0..n).filter(|&j| !exp.state.zero_mask[j]).collect()
    } else {
        let mut v = Vec::with_capacity(joints.len());
        for &j in joints {
            if j == 0 || j > n {
                return Err(Failure::new(3, format!("joint {j} is not in 1..={n}")));
            }
            v.push(j - 1);
        }
        v
    };
    let plant = TuningPlant {
        model: &exp.model,
        params_plant: &exp.params_plant,
        params_hat: &exp.params_hat,
        config: &exp.config,
    };
    let tuned = tune_gains(&plant, &opts)?;
    let text = serde_json::to_string_pretty(&tuned)
        .map_err(|e| Failure::new(2, format!("serialising gains: {e}")))?;
    write_atomic(out, format!("{text}\n").as_bytes())?;
    println!("joint kp ki kv critical_period_s");
    for (j, crit) in opts.joints.iter().zip(&tuned.critical) {
        println!(
            "{} {} {} {} {}",
            j + 1,
            sig9(tuned.gains.kp[*j]),
            sig9(tuned.gains.ki[*j]),
            sig9(tuned.gains.kv[*j]),
            sig9(crit.period)
        );
    }
    Ok(())
}

fn cmd_rank(robot: &Path, poses: usize, seed: u64, tol: f64) -> CmdResult {
    let model = load_robot(robot)?;
    let map = base_reduction(&model, poses, seed, tol)?;
    println!("rank {}", map.rank);
    let idx: Vec<String> = map
        .independent_columns
        .iter()
        .map(|c| c.to_string())
        .collect();
    println!("pivots {}", idx.join(" "));
    let names: Vec<String> = map
        .independent_columns
        .iter()
        .map(|&c| param_name(c))
        .collect();
    println!("names {}", names.join(" "));
    println!("condition {}", sig9(map.condition_number));
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Fk { robot, q } => cmd_fk(&robot, &q),
        Command::Synth {
            robot,
            params,
            poses,
            noise,
            seed,
            out,
        } => cmd_synth(&robot, params.as_deref(), poses, noise, seed, &out),
        Command::Identify {
            robot,
            dataset,
            out,
            tol,
            method,
            holdout,
        } => cmd_identify(&robot, &dataset, &out, tol, method, holdout),
        Command::Simulate { experiment, out } => cmd_simulate(&experiment, &out),
        Command::Tune {
            experiment,
            out,
            joints,
        } => cmd_tune(&experiment, &out, &joints),
        Command::Rank {
            robot,
            poses,
            seed,
            tol,
        } => cmd_rank(&robot, poses, seed, tol),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let result = match builder.build() {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(Failure::new(2, format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
