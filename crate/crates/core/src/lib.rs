pub mod dsl;
pub mod evolution;
pub mod fitness;
pub mod mpm;
pub mod operator;
pub mod render;
pub mod linalg;
pub mod scalar;
pub mod scene;

pub use linalg::{Mat3, Vec3};
pub use scalar::Real;

pub type Vec3f = Vec3<f32>;
pub type Vec3d = Vec3<f64>;
pub type Mat3f = Mat3<f32>;
pub type Mat3d = Mat3<f64>;
pub type ParticleStateF = mpm::ParticleState<f32>;
pub type ParticleStateD = mpm::ParticleState<f64>;
pub type TrajectoryF = mpm::Trajectory<f32>;
pub type TrajectoryD = mpm::Trajectory<f64>;
