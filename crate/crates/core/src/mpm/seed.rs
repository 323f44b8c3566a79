use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ParticleState;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Cube,
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub shape: Shape,
    pub center: [f64; 3],
    /// Edge length of the cube or diameter of the sphere (m).
    pub extent: f64,
    pub spacing: f64,
    #[serde(default = "default_color")]
    pub color: [f64; 3],
    #[serde(default = "default_opacity")]
    pub opacity: f64,
}

fn default_color() -> [f64; 3] {
    [0.8, 0.5, 0.3]
}

fn default_opacity() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeedError {
    #[error("shape spans [{lo:.4}, {hi:.4}] on axis {axis}, outside the usable domain [{min:.4}, {max:.4}]")]
    ShapeOutOfDomain {
        axis: usize,
        lo: f64,
        hi: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid geometry: {0}")]
    Invalid(String),
}

/// Lattice samples of a cube or sphere with seeded jitter of up to a quarter spacing.
/// `margin` is the width (m) of the boundary layer the shape must stay clear of.
pub fn seed_particles<T: Real>(
    geom: &Geometry,
    density: f64,
    init_velocity: [f64; 3],
    seed: u64,
    margin: f64,
) -> Result<Vec<ParticleState<T>>, SeedError> {
    if !(geom.spacing > 0.0 && geom.extent > 0.0 && density > 0.0) {
        return Err(SeedError::Invalid("extent, spacing and density must be positive".into()));
    }
    if !(0.0..=1.0).contains(&geom.opacity) {
        return Err(SeedError::Invalid("opacity must lie in [0, 1]".into()));
    }
    let half = geom.extent / 2.0;
    for axis in 0..3 {
        let (lo, hi) = (geom.center[axis] - half, geom.center[axis] + half);
        if lo < margin || hi > 1.0 - margin {
            return Err(SeedError::ShapeOutOfDomain { axis, lo, hi, min: margin, max: 1.0 - margin });
        }
    }
    let n = (geom.extent / geom.spacing).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vol = geom.spacing.powi(3);
    let s2 = (geom.spacing / 2.0).powi(2);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = [i, j, k].map(|q| (q as f64 + 0.5) * geom.spacing - half);
                let inside = match geom.shape {
                    Shape::Cube => true,
                    Shape::Sphere => p.iter().map(|c| c * c).sum::<f64>() <= half * half,
                };
                // draw jitter for every lattice point so cube and sphere share a stream
                let jit: [f64; 3] = [0; 3].map(|_| rng.gen_range(-0.25..0.25) * geom.spacing);
                if !inside {
                    continue;
                }
                let x = [0, 1, 2].map(|a| T::lit(geom.center[a] + p[a] + jit[a]));
                out.push(ParticleState {
                    x: Vec3(x),
                    v: Vec3(init_velocity.map(T::lit)),
                    f: Mat3::identity(),
                    c: Mat3::zero(),
                    mass: T::lit(density * vol),
                    volume0: T::lit(vol),
                    color: Vec3(geom.color.map(T::lit)),
                    opacity: T::lit(geom.opacity),
                    cov: Mat3::identity() * T::lit(s2),
                });
            }
        }
    }
    Ok(out)
}
