use serde::{Deserialize, Serialize};

use super::{ParticleState, RecordOptions};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    #[serde(default)]
    pub scene: String,
    #[serde(default)]
    pub scene_digest: String,
    pub config_digest: String,
    pub law_digest: String,
    #[serde(default)]
    pub seed: u64,
}

/// Per-frame particle snapshots; frame 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub frames: Vec<Vec<Vec3<T>>>,
    pub deformation: Option<Vec<Vec<Mat3<T>>>>,
    pub covariance: Option<Vec<Vec<Mat3<T>>>>,
    pub meta: TrajectoryMeta,
}

impl<T: Real> Trajectory<T> {
    pub fn new(meta: TrajectoryMeta, record: RecordOptions) -> Self {
        Trajectory {
            frames: Vec::new(),
            deformation: record.deformation.then(Vec::new),
            covariance: record.covariance.then(Vec::new),
            meta,
        }
    }

    pub fn push(&mut self, ps: &[ParticleState<T>]) {
        self.frames.push(ps.iter().map(|p| p.x).collect());
        if let Some(d) = &mut self.deformation {
            d.push(ps.iter().map(|p| p.f).collect());
        }
        if let Some(c) = &mut self.covariance {
            c.push(ps.iter().map(|p| p.cov).collect());
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn particle_count(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Keeps frames in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Trajectory {
            frames: self.frames[range.clone()].to_vec(),
            deformation: self.deformation.as_ref().map(|d| d[range.clone()].to_vec()),
            covariance: self.covariance.as_ref().map(|c| c[range].to_vec()),
            meta: self.meta.clone(),
        }
    }

    pub fn cast<U: Real>(&self) -> Trajectory<U> {
        let cm = |fr: &Vec<Vec<Mat3<T>>>| fr.iter().map(|f| f.iter().map(Mat3::cast).collect()).collect();
        Trajectory {
            frames: self.frames.iter().map(|f| f.iter().map(Vec3::cast).collect()).collect(),
            deformation: self.deformation.as_ref().map(cm),
            covariance: self.covariance.as_ref().map(cm),
            meta: self.meta.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.frames.iter().flatten().all(Vec3::is_finite)
    }
}
