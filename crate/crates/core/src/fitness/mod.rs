//! Candidate evaluation: validity probing, losses and parameter fitting.

mod loss;
mod optimize;
mod probe;

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loss::{chamfer_l2, dssim, mse, ssim, trajectory_chamfer, visual_loss};
pub use optimize::{
    downsample_indices, finite_diff_grad, optimize_from, optimize_params, Adam, Gradient, OptimizeOptions,
    ParamTransform,
};
pub use probe::{probe_battery, probe_validity, ProbeCheck, ValidityReport, PROBATION_SUBSTEPS};

use crate::dsl::{ParamVector, TypedLaw};
use crate::mpm::{run_sim, ParticleState, RecordOptions, SimConfig, SimError, Trajectory};
use crate::render::{render_splats, Camera, Frame, RenderError};
use crate::scene::{SceneError, SceneSpec};

/// Loss assigned to any candidate that cannot be simulated.
pub const FAILURE_SENTINEL: f64 = 1e9;

pub fn is_failure(loss: f64) -> bool {
    !loss.is_finite() || loss >= FAILURE_SENTINEL
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitnessError {
    #[error("empty point set")]
    EmptySet,
    #[error("image sizes differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("observation structure mismatch: {0}")]
    StructureMismatch(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Chamfer,
    Visual,
    Mixed,
}

impl LossMode {
    pub fn needs_frames(self) -> bool {
        self != LossMode::Chamfer
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "chamfer" => Ok(LossMode::Chamfer),
            "visual" => Ok(LossMode::Visual),
            "mixed" => Ok(LossMode::Mixed),
            _ => Err(format!("unknown loss mode `{s}` (chamfer, visual, mixed)")),
        }
    }
}

pub const DEFAULT_LAMBDA: f64 = 0.8;

/// Everything a candidate is scored against.
#[derive(Debug, Clone)]
pub struct SceneObservation {
    pub initial: Vec<ParticleState<f64>>,
    pub config: SimConfig,
    pub gt_trajectory: Trajectory<f64>,
    /// Indexed `[view][frame]`.
    pub gt_frames: Option<Vec<Vec<Frame>>>,
    pub cameras: Vec<Camera>,
    pub loss_mode: LossMode,
    pub lambda: f64,
}

/// Renders every recorded frame of `traj` from each camera.
pub fn render_views(
    traj: &Trajectory<f64>,
    initial: &[ParticleState<f64>],
    cameras: &[Camera],
) -> Result<Vec<Vec<Frame>>, FitnessError> {
    let covs = traj
        .covariance
        .as_ref()
        .ok_or_else(|| FitnessError::StructureMismatch("trajectory has no covariances".into()))?;
    let opacity: Vec<f64> = initial.iter().map(|p| p.opacity).collect();
    let colors: Vec<_> = initial.iter().map(|p| p.color).collect();
    cameras
        .iter()
        .map(|cam| {
            traj.frames
                .iter()
                .zip(covs)
                .map(|(x, c)| Ok(render_splats(x, c, &opacity, &colors, cam)?.0))
                .collect()
        })
        .collect()
}

impl SceneObservation {
    pub fn from_trajectory(
        initial: Vec<ParticleState<f64>>,
        config: SimConfig,
        gt: Trajectory<f64>,
        cameras: Vec<Camera>,
        loss_mode: LossMode,
        lambda: f64,
    ) -> Result<Self, FitnessError> {
        let gt_frames = if loss_mode.needs_frames() && !cameras.is_empty() {
            Some(render_views(&gt, &initial, &cameras)?)
        } else {
            None
        };
        Self::from_parts(initial, config, gt, gt_frames, cameras, loss_mode, lambda)
    }

    /// Builds an observation from already-rendered target frames (`[view][frame]`).
    pub fn from_parts(
        initial: Vec<ParticleState<f64>>,
        config: SimConfig,
        gt: Trajectory<f64>,
        gt_frames: Option<Vec<Vec<Frame>>>,
        cameras: Vec<Camera>,
        loss_mode: LossMode,
        lambda: f64,
    ) -> Result<Self, FitnessError> {
        if loss_mode.needs_frames() {
            let frames = gt_frames
                .as_ref()
                .ok_or_else(|| FitnessError::StructureMismatch("visual loss needs observed frames".into()))?;
            if cameras.is_empty() || frames.len() != cameras.len() {
                return Err(FitnessError::StructureMismatch(format!(
                    "{} cameras but {} observed views",
                    cameras.len(),
                    frames.len()
                )));
            }
            if let Some(v) = frames.iter().find(|v| v.len() != config.frames + 1) {
                return Err(FitnessError::StructureMismatch(format!(
                    "observed view has {} frames, config expects {}",
                    v.len(),
                    config.frames + 1
                )));
            }
        }
        if initial.len() != gt.particle_count() {
            return Err(FitnessError::StructureMismatch(format!(
                "{} seeded particles but the observation tracks {}",
                initial.len(),
                gt.particle_count()
            )));
        }
        if gt.frame_count() != config.frames + 1 {
            return Err(FitnessError::StructureMismatch(format!(
                "observation has {} frames, config expects {}",
                gt.frame_count(),
                config.frames + 1
            )));
        }
        Ok(SceneObservation { initial, config, gt_trajectory: gt, gt_frames, cameras, loss_mode, lambda })
    }

    /// Generates the ground truth of a scene with its hidden reference law.
    pub fn from_scene(spec: &SceneSpec, loss_mode: LossMode, lambda: f64) -> Result<Self, SceneError> {
        let record = RecordOptions { deformation: false, covariance: loss_mode.needs_frames() };
        let gt = spec.generate::<f64>(record)?;
        Self::from_trajectory(spec.particles()?, spec.config.clone(), gt, spec.cameras.clone(), loss_mode, lambda)
            .map_err(|e| SceneError::Format(e.to_string()))
    }

    /// Keeps only the first `frames` simulated frames.
    pub fn truncated(&self, frames: usize) -> Self {
        let frames = frames.min(self.config.frames);
        let keep = 0..frames + 1;
        SceneObservation {
            initial: self.initial.clone(),
            config: SimConfig { frames, ..self.config.clone() },
            gt_trajectory: self.gt_trajectory.slice(keep.clone()),
            gt_frames: self
                .gt_frames
                .as_ref()
                .map(|v| v.iter().map(|f| f[keep.clone()].to_vec()).collect()),
            cameras: self.cameras.clone(),
            loss_mode: self.loss_mode,
            lambda: self.lambda,
        }
    }

    /// Identifies the observation for checkpoint compatibility.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.config.digest().as_bytes());
        h.update(serde_json::to_string(&(self.loss_mode, self.lambda, &self.cameras)).unwrap_or_default().as_bytes());
        for p in &self.initial {
            for v in p.x.0.iter().chain(&p.v.0) {
                h.update(v.to_le_bytes());
            }
        }
        for frame in &self.gt_trajectory.frames {
            for x in frame {
                for v in x.0 {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn record_options(&self) -> RecordOptions {
        RecordOptions { deformation: false, covariance: self.loss_mode.needs_frames() }
    }

    pub fn simulate(&self, law: &TypedLaw, theta: &[f64]) -> Result<Trajectory<f64>, SimError> {
        run_sim(&self.initial, law, theta, &self.config, self.record_options())
    }
}

/// Scores a simulated trajectory under the observation's loss mode.
pub fn total_loss(pred: &Trajectory<f64>, obs: &SceneObservation) -> Result<f64, FitnessError> {
    let chamfer = || trajectory_chamfer(&pred.frames, &obs.gt_trajectory.frames);
    let visual = || -> Result<f64, FitnessError> {
        let gt = obs
            .gt_frames
            .as_ref()
            .ok_or_else(|| FitnessError::StructureMismatch("no observed frames".into()))?;
        visual_loss(&render_views(pred, &obs.initial, &obs.cameras)?, gt, obs.lambda)
    };
    match obs.loss_mode {
        LossMode::Chamfer => chamfer(),
        LossMode::Visual => visual(),
        LossMode::Mixed => Ok(chamfer()? + visual()?),
    }
}

/// Simulates and scores; failures map to the sentinel with a reason.
pub fn evaluate_loss(law: &TypedLaw, theta: &[f64], obs: &SceneObservation) -> (f64, Option<String>) {
    let result = obs
        .simulate(law, theta)
        .map_err(FitnessError::from)
        .and_then(|t| total_loss(&t, obs));
    match result {
        Ok(l) if l.is_finite() => (l, None),
        Ok(l) => (FAILURE_SENTINEL, Some(format!("loss evaluated to {l}"))),
        Err(e) => (FAILURE_SENTINEL, Some(e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub loss_curve: Vec<(usize, f64)>,
    pub theta_init: ParamVector,
    pub theta_final: ParamVector,
    pub theta_trajectory: Vec<(usize, Vec<f64>)>,
    pub failure: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Seconds; not part of any digest.
    #[serde(default)]
    pub wall_time: f64,
}

impl Feedback {
    /// Plain-text rendering for prompts.
    pub fn summary(&self, param_names: &[String]) -> String {
        let mut s = String::new();
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "failure: {f}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        if !self.loss_curve.is_empty() {
            let pts: Vec<String> = self.loss_curve.iter().map(|(i, l)| format!("{i}:{l:.4e}")).collect();
            let _ = writeln!(s, "loss curve: {}", pts.join(" "));
        }
        let fmt = |p: &ParamVector| {
            param_names
                .iter()
                .zip(&p.values)
                .map(|(n, v)| format!("{n}={v:.4e}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        if !param_names.is_empty() {
            let _ = writeln!(s, "parameters: {} -> {}", fmt(&self.theta_init), fmt(&self.theta_final));
        }
        s
    }

    pub fn write_loss_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iteration,loss")?;
        for (i, l) in &self.loss_curve {
            writeln!(w, "{i},{l:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitted {
    pub theta_star: ParamVector,
    pub fitness: f64,
    pub feedback: Feedback,
}

impl Fitted {
    pub fn failed(theta: ParamVector, reason: String, warnings: Vec<String>) -> Self {
        Fitted {
            theta_star: theta.clone(),
            fitness: FAILURE_SENTINEL,
            feedback: Feedback {
                loss_curve: Vec::new(),
                theta_init: theta.clone(),
                theta_final: theta,
                theta_trajectory: Vec::new(),
                failure: Some(reason),
                warnings,
                wall_time: 0.0,
            },
        }
    }

    pub fn is_failure(&self) -> bool {
        is_failure(self.fitness)
    }
}

#[cfg(test)]
mod tests;
