//! Scene specifications and the bundled synthetic scenes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::{catalog_law, typecheck, ParamVector, TypedLaw};
use crate::mpm::{
    run_sim, seed_particles, Boundary, BoundaryKind, Geometry, ParticleState, RecordOptions, SeedError, Shape,
    SimConfig, SimError, Trajectory,
};
use crate::render::{Axis, Camera};
use crate::scalar::Real;

pub const BUNDLED: [&str; 4] = ["bouncy", "jelly", "plasticine", "sand"];

/// Hidden ground-truth law: a catalog entry plus parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLaw {
    pub law: String,
    #[serde(default)]
    pub theta: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub seed: u64,
    pub density: f64,
    pub velocity: [f64; 3],
    pub geometry: Geometry,
    pub reference: ReferenceLaw,
    pub config: SimConfig,
    #[serde(default)]
    pub cameras: Vec<Camera>,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown scene `{0}`")]
    Unknown(String),
    #[error("reference law `{0}` is not in the catalog")]
    UnknownLaw(String),
    #[error("reference parameter `{0}` is not declared by the law")]
    UnknownParam(String),
    #[error("reference parameters out of bounds: {0}")]
    Theta(String),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("scene file: {0}")]
    Format(String),
}

fn desk_config() -> SimConfig {
    SimConfig {
        dt: 1e-3,
        substeps_per_frame: 20,
        frames: 16,
        gravity: [0.0, -9.8, 0.0],
        boundary: Boundary { kind: BoundaryKind::StickyWalls, margin: 2, slip_floor: false },
        resolution: 16,
    }
}

fn front_camera() -> Camera {
    Camera { axis: Axis::PosZ, width: 32, height: 32, window: [0.0, 0.0, 1.0, 1.0], background: [0.0; 3] }
}

fn theta(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn bundled_scene(name: &str) -> Result<SceneSpec, SceneError> {
    let cube = |center: [f64; 3], color: [f64; 3]| Geometry {
        shape: Shape::Cube,
        center,
        extent: 0.2,
        spacing: 0.04,
        color,
        opacity: 0.9,
    };
    let spec = match name {
        "bouncy" => SceneSpec {
            name: name.into(),
            seed: 11,
            density: 1000.0,
            velocity: [0.0, -2.0, 0.0],
            geometry: Geometry {
                shape: Shape::Sphere,
                center: [0.5, 0.45, 0.5],
                extent: 0.24,
                spacing: 0.04,
                color: [0.9, 0.2, 0.2],
                opacity: 0.9,
            },
            reference: ReferenceLaw { law: "fixed_corotated".into(), theta: theta(&[("mu", 3e4), ("lam", 3e4)]) },
            config: desk_config(),
            cameras: vec![front_camera()],
        },
        "jelly" => SceneSpec {
            name: name.into(),
            seed: 12,
            density: 1000.0,
            velocity: [0.5, -1.5, 0.0],
            geometry: cube([0.45, 0.3, 0.5], [0.3, 0.8, 0.3]),
            reference: ReferenceLaw { law: "neo_hookean".into(), theta: theta(&[("mu", 1e4)]) },
            config: desk_config(),
            cameras: vec![front_camera()],
        },
        "plasticine" => SceneSpec {
            name: name.into(),
            seed: 13,
            density: 1000.0,
            velocity: [0.0, -2.5, 0.0],
            geometry: cube([0.5, 0.4, 0.5], [0.8, 0.6, 0.3]),
            reference: ReferenceLaw {
                law: "von_mises".into(),
                theta: theta(&[("mu", 2e4), ("lam", 2e4), ("yield", 300.0)]),
            },
            config: desk_config(),
            cameras: vec![front_camera()],
        },
        "sand" => SceneSpec {
            name: name.into(),
            seed: 14,
            density: 1500.0,
            velocity: [0.0, -1.0, 0.0],
            geometry: cube([0.5, 0.4, 0.5], [0.85, 0.75, 0.45]),
            reference: ReferenceLaw {
                law: "drucker_prager".into(),
                theta: theta(&[("mu", 2e4), ("lam", 2e4), ("alpha", 0.4)]),
            },
            config: SimConfig {
                boundary: Boundary { kind: BoundaryKind::StickyWalls, margin: 2, slip_floor: true },
                ..desk_config()
            },
            cameras: vec![front_camera()],
        },
        _ => return Err(SceneError::Unknown(name.into())),
    };
    Ok(spec)
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self, SceneError> {
        toml::from_str(text).map_err(|e| SceneError::Format(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("scene spec serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn margin(&self) -> f64 {
        self.config.boundary.margin as f64 * self.config.dx()
    }

    pub fn particles<T: Real>(&self) -> Result<Vec<ParticleState<T>>, SceneError> {
        Ok(seed_particles(&self.geometry, self.density, self.velocity, self.seed, self.margin())?)
    }

    pub fn reference_law(&self) -> Result<TypedLaw, SceneError> {
        let ast = catalog_law(&self.reference.law).ok_or_else(|| SceneError::UnknownLaw(self.reference.law.clone()))?;
        Ok(typecheck(ast).expect("catalog laws typecheck"))
    }

    pub fn reference_theta(&self, law: &TypedLaw) -> Result<ParamVector, SceneError> {
        let mut values = ParamVector::initial(&law.ast).values;
        for (k, v) in &self.reference.theta {
            let i = law.ast.param_index(k).ok_or_else(|| SceneError::UnknownParam(k.clone()))?;
            values[i] = *v;
        }
        ParamVector::new(&law.ast, values).map_err(SceneError::Theta)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.config.validate().map_err(|e| SceneError::Sim(e.into()))?;
        let law = self.reference_law()?;
        self.reference_theta(&law)?;
        self.particles::<f64>()?;
        for c in &self.cameras {
            c.validate().map_err(|e| SceneError::Format(e.to_string()))?;
        }
        Ok(())
    }

    /// Simulates the hidden reference law.
    pub fn generate<T: Real>(&self, record: RecordOptions) -> Result<Trajectory<T>, SceneError> {
        let law = self.reference_law()?;
        let theta = self.reference_theta(&law)?;
        let mut traj = run_sim(&self.particles::<T>()?, &law, theta.as_slice(), &self.config, record)?;
        traj.meta.scene = self.name.clone();
        traj.meta.scene_digest = self.digest();
        traj.meta.seed = self.seed;
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenes_validate_and_round_trip() {
        for name in BUNDLED {
            let s = bundled_scene(name).unwrap();
            s.validate().unwrap();
            let back = SceneSpec::from_toml(&s.to_toml()).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.digest(), s.digest());
        }
        assert!(bundled_scene("nope").is_err());
    }

    #[test]
    fn bundled_scenes_simulate() {
        for name in BUNDLED {
            let s = bundled_scene(name).unwrap();
            let t = s.generate::<f64>(RecordOptions::default()).unwrap();
            assert_eq!(t.frame_count(), s.config.frames + 1);
            assert!(t.is_finite());
            let p0: Vec<_> = s.particles::<f64>().unwrap().iter().map(|p| p.x).collect();
            assert_eq!(t.frames[0], p0);
        }
    }

    #[test]
    fn unknown_reference_param_rejected() {
        let mut s = bundled_scene("jelly").unwrap();
        s.reference.theta.insert("nu".into(), 0.3);
        assert!(matches!(s.validate(), Err(SceneError::UnknownParam(_))));
    }
}
