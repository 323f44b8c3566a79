//! MLS-MPM on the unit cube with quadratic B-splines.

mod io;
mod seed;
mod sim;
mod trajectory;


use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::EvalError;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

pub use io::{read_meta, read_vltj, write_meta, write_vltj, VltjError};
pub use seed::{seed_particles, Geometry, SeedError, Shape};
pub use sim::{run_sim, update_covariance, RecordOptions, Simulator};
pub use trajectory::{Trajectory, TrajectoryMeta};

/// Speed above which a run is declared unstable (m/s).
pub const V_MAX: f64 = 50.0;
/// Smallest admissible det(F).
pub const MIN_DET_F: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState<T> {
    pub x: Vec3<T>,
    pub v: Vec3<T>,
    pub f: Mat3<T>,
    pub c: Mat3<T>,
    pub mass: T,
    pub volume0: T,
    pub color: Vec3<T>,
    pub opacity: T,
    /// Splat covariance (m²).
    pub cov: Mat3<T>,
}

impl<T: Real> ParticleState<T> {
    pub fn momentum(&self) -> Vec3<T> {
        self.v * self.mass
    }

    pub fn kinetic_energy(&self) -> T {
        T::lit(0.5) * self.mass * self.v.norm_squared()
    }
}

pub fn total_mass<T: Real>(ps: &[ParticleState<T>]) -> T {
    ps.iter().map(|p| p.mass).sum()
}

pub fn total_momentum<T: Real>(ps: &[ParticleState<T>]) -> Vec3<T> {
    ps.iter().fold(Vec3::zero(), |acc, p| acc + p.momentum())
}

pub fn kinetic_energy<T: Real>(ps: &[ParticleState<T>]) -> T {
    ps.iter().map(|p| p.kinetic_energy()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    StickyWalls,
    SlipWalls,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub kind: BoundaryKind,
    /// Width of the boundary layer in grid cells.
    pub margin: usize,
    /// Use slip on the floor (y = 0 face) regardless of `kind`.
    #[serde(default)]
    pub slip_floor: bool,
}

impl Default for Boundary {
    fn default() -> Self {
        Boundary { kind: BoundaryKind::StickyWalls, margin: 3, slip_floor: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub substeps_per_frame: usize,
    pub frames: usize,
    pub gravity: [f64; 3],
    pub boundary: Boundary,
    pub resolution: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 2e-4,
            substeps_per_frame: 20,
            frames: 30,
            gravity: [0.0, -9.8, 0.0],
            boundary: Boundary::default(),
            resolution: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid simulation config: {0}")]
pub struct ConfigError(pub String);

impl SimConfig {
    pub fn dx(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.resolution < 8 {
            return err(format!("resolution {} below 8", self.resolution));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return err(format!("dt must be positive, got {}", self.dt));
        }
        if self.dt > self.dx() / V_MAX {
            return err(format!(
                "dt {} violates CFL bound dx / v_max = {}",
                self.dt,
                self.dx() / V_MAX
            ));
        }
        if self.substeps_per_frame == 0 {
            return err("substeps_per_frame must be at least 1".into());
        }
        if 2 * self.boundary.margin >= self.resolution {
            return err(format!("boundary margin {} too wide", self.boundary.margin));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return err("gravity must be finite".into());
        }
        Ok(())
    }

    pub fn total_substeps(&self) -> usize {
        self.frames * self.substeps_per_frame
    }

    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Background grid with `resolution + 1` nodes per axis.
#[derive(Debug, Clone)]
pub struct GridField<T> {
    pub resolution: usize,
    pub dx: T,
    pub inv_dx: T,
    pub mass: Vec<T>,
    /// Momentum after p2g, velocity after `grid_step`.
    pub mv: Vec<Vec3<T>>,
    active: Option<([usize; 3], [usize; 3])>,
}

impl<T: Real> GridField<T> {
    pub fn new(resolution: usize) -> Self {
        let n = resolution + 1;
        GridField {
            resolution,
            dx: T::one() / T::lit(resolution as f64),
            inv_dx: T::lit(resolution as f64),
            mass: vec![T::zero(); n * n * n],
            mv: vec![Vec3::zero(); n * n * n],
            active: None,
        }
    }

    #[inline]
    pub fn nodes_per_axis(&self) -> usize {
        self.resolution + 1
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes_per_axis();
        (i * n + j) * n + k
    }

    /// Inclusive index box touched since the last clear.
    pub fn active_box(&self) -> Option<([usize; 3], [usize; 3])> {
        self.active
    }

    pub(crate) fn touch(&mut self, base: [usize; 3]) {
        let hi = [base[0] + 2, base[1] + 2, base[2] + 2];
        self.active = Some(match self.active {
            None => (base, hi),
            Some((l, h)) => (
                [l[0].min(base[0]), l[1].min(base[1]), l[2].min(base[2])],
                [h[0].max(hi[0]), h[1].max(hi[1]), h[2].max(hi[2])],
            ),
        });
    }

    pub fn clear(&mut self) {
        if let Some((lo, hi)) = self.active.take() {
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    let a = self.index(i, j, lo[2]);
                    let b = self.index(i, j, hi[2]);
                    self.mass[a..=b].fill(T::zero());
                    self.mv[a..=b].fill(Vec3::zero());
                }
            }
        }
    }

    pub fn total_mass(&self) -> T {
        self.mass.iter().copied().sum()
    }

    pub fn total_momentum(&self) -> Vec3<T> {
        self.mv.iter().fold(Vec3::zero(), |a, &b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureKind {
    NonFinite { quantity: &'static str },
    VelocityExplosion { speed: f64 },
    DegenerateF { det: f64 },
    Eval(EvalError),
}

/// Diagnostic for an aborted simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct SimulationFailure {
    pub step: usize,
    pub particle: Option<usize>,
    pub kind: FailureKind,
}

impl fmt::Display for SimulationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FailureKind::NonFinite { quantity } => write!(f, "non-finite {quantity} at step {}", self.step)?,
            FailureKind::VelocityExplosion { speed } => {
                write!(f, "velocity explosion at step {} (|v| = {speed:.3e} m/s)", self.step)?
            }
            FailureKind::DegenerateF { det } => write!(f, "degenerate deformation at step {} (det F = {det:.3e})", self.step)?,
            FailureKind::Eval(e) => write!(f, "law evaluation failed at step {}: {e}", self.step)?,
        }
        if let Some(p) = self.particle {
            write!(f, " on particle {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Failure(#[from] SimulationFailure),
}
