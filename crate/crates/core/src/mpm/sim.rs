use super::{
    BoundaryKind, ConfigError, FailureKind, GridField, ParticleState, SimConfig, SimError, SimulationFailure, Trajectory,
    TrajectoryMeta, MIN_DET_F, V_MAX,
};
use crate::dsl::{Evaluator, TypedLaw};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
struct Stencil<T> {
    base: [usize; 3],
    fx: Vec3<T>,
    w: [[T; 3]; 3],
}

fn stencil<T: Real>(x: &Vec3<T>, inv_dx: T) -> Stencil<T> {
    let half = T::lit(0.5);
    let mut base = [0usize; 3];
    let mut fx = Vec3::zero();
    let mut w = [[T::zero(); 3]; 3];
    for a in 0..3 {
        let g = x[a] * inv_dx;
        let b = (g - half).floor();
        base[a] = b.to_usize().unwrap_or(0);
        let f = g - b;
        fx[a] = f;
        let t0 = T::lit(1.5) - f;
        let t1 = f - T::one();
        let t2 = f - half;
        w[a] = [half * t0 * t0, T::lit(0.75) - t1 * t1, half * t2 * t2];
    }
    Stencil { base, fx, w }
}

/// A = F A Fᵀ.
pub fn update_covariance<T: Real>(a: &Mat3<T>, f: &Mat3<T>) -> Mat3<T> {
    let m = *f * *a * f.transpose();
    // symmetrize to keep rounding from drifting
    (m + m.transpose()) * T::lit(0.5)
}

/// One simulation instance: grid, law evaluator and scratch buffers.
pub struct Simulator<'a, T: Real> {
    pub config: SimConfig,
    pub grid: GridField<T>,
    eval: Evaluator<'a, T>,
    theta: Vec<T>,
    stencils: Vec<Stencil<T>>,
    dt: T,
    gravity: Vec3<T>,
    lo: T,
    hi: T,
    step_index: usize,
}

impl<'a, T: Real> Simulator<'a, T> {
    pub fn new(law: &'a TypedLaw, theta: &[f64], config: &SimConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        if theta.len() != law.param_count() {
            return Err(ConfigError(format!(
                "law takes {} parameters, {} given",
                law.param_count(),
                theta.len()
            )));
        }
        let grid = GridField::new(config.resolution);
        let dx = grid.dx;
        Ok(Simulator {
            config: config.clone(),
            grid,
            eval: Evaluator::new(law),
            theta: theta.iter().map(|&t| T::lit(t)).collect(),
            stencils: Vec::new(),
            dt: T::lit(config.dt),
            gravity: Vec3(config.gravity.map(T::lit)),
            lo: dx,
            hi: T::one() - dx,
            step_index: 0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    #[cfg(test)]
    pub(crate) fn set_dt(&mut self, dt: T) {
        self.dt = dt;
    }

    fn fail(&self, particle: Option<usize>, kind: FailureKind) -> SimulationFailure {
        SimulationFailure { step: self.step_index, particle, kind }
    }

    /// Scatters mass, momentum and the fused stress/affine term to the grid.
    pub fn p2g(&mut self, particles: &[ParticleState<T>]) -> Result<(), SimulationFailure> {
        self.grid.clear();
        self.stencils.clear();
        let inv_dx = self.grid.inv_dx;
        let dx = self.grid.dx;
        let k = -self.dt * T::lit(4.0) * inv_dx * inv_dx;
        for (pi, p) in particles.iter().enumerate() {
            let st = stencil(&p.x, inv_dx);
            let tau = self
                .eval
                .elastic(&p.f, &self.theta)
                .map_err(|e| self.fail(Some(pi), FailureKind::Eval(e)))?;
            let affine = tau * (k * p.volume0) + p.c * p.mass;
            let mv = p.v * p.mass;
            self.grid.touch(st.base);
            // affine · dpos split per axis so the inner loop only adds
            let mut ax = [Vec3::zero(); 3];
            let mut ay = [Vec3::zero(); 3];
            let mut az = [Vec3::zero(); 3];
            for o in 0..3 {
                let off = T::lit(o as f64);
                ax[o] = affine.col(0) * ((off - st.fx[0]) * dx);
                ay[o] = affine.col(1) * ((off - st.fx[1]) * dx);
                az[o] = affine.col(2) * ((off - st.fx[2]) * dx);
            }
            let n = self.grid.nodes_per_axis();
            let origin = self.grid.index(st.base[0], st.base[1], st.base[2]);
            for i in 0..3 {
                for j in 0..3 {
                    let wij = st.w[0][i] * st.w[1][j];
                    let row = origin + (i * n + j) * n;
                    let pij = mv + ax[i] + ay[j];
                    for l in 0..3 {
                        let w = wij * st.w[2][l];
                        self.grid.mass[row + l] += w * p.mass;
                        self.grid.mv[row + l] += (pij + az[l]) * w;
                    }
                }
            }
            self.stencils.push(st);
        }
        Ok(())
    }

    /// Momentum to velocity, gravity, then boundary conditions.
    pub fn grid_step(&mut self) {
        let Some((lo, hi)) = self.grid.active_box() else { return };
        let res = self.grid.resolution;
        let b = self.config.boundary;
        let dg = self.gravity * self.dt;
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let idx = self.grid.index(i, j, k);
                    let m = self.grid.mass[idx];
                    if m <= T::zero() {
                        continue;
                    }
                    let mut v = self.grid.mv[idx] / m + dg;
                    let mut stick = false;
                    for (axis, n) in [i, j, k].into_iter().enumerate() {
                        let low = n < b.margin;
                        if low || n > res - b.margin {
                            let slip = b.kind == BoundaryKind::SlipWalls || (axis == 1 && low && b.slip_floor);
                            if slip {
                                v[axis] = T::zero();
                            } else {
                                stick = true;
                            }
                        }
                    }
                    if stick {
                        v = Vec3::zero();
                    }
                    self.grid.mv[idx] = v;
                }
            }
        }
    }

    /// Gathers velocity and affine matrix, advects, and forms the trial F.
    pub fn g2p(&mut self, particles: &mut [ParticleState<T>]) -> Result<(), SimulationFailure> {
        let inv_dx = self.grid.inv_dx;
        let four_inv_dx = T::lit(4.0) * inv_dx;
        let vmax = T::lit(V_MAX);
        for (pi, (p, st)) in particles.iter_mut().zip(&self.stencils).enumerate() {
            let mut v = Vec3::zero();
            let mut c = [[T::zero(); 3]; 3];
            let d = [0, 1, 2].map(|a| [0, 1, 2].map(|o| T::lit(o as f64) - st.fx[a]));
            let n = self.grid.nodes_per_axis();
            let origin = self.grid.index(st.base[0], st.base[1], st.base[2]);
            for i in 0..3 {
                for j in 0..3 {
                    let wij = st.w[0][i] * st.w[1][j];
                    let row = origin + (i * n + j) * n;
                    for l in 0..3 {
                        let w = wij * st.w[2][l];
                        let gw = self.grid.mv[row + l] * w;
                        v += gw;
                        let dp = [d[0][i], d[1][j], d[2][l]];
                        for r in 0..3 {
                            for q in 0..3 {
                                c[r][q] += gw[r] * dp[q];
                            }
                        }
                    }
                }
            }
            let c = Mat3(c) * four_inv_dx;
            if !(v.is_finite() && c.is_finite()) {
                return Err(SimulationFailure {
                    step: self.step_index,
                    particle: Some(pi),
                    kind: FailureKind::NonFinite { quantity: "velocity" },
                });
            }
            let speed = v.norm();
            if speed > vmax {
                return Err(SimulationFailure {
                    step: self.step_index,
                    particle: Some(pi),
                    kind: FailureKind::VelocityExplosion { speed: speed.to_f64_lossy() },
                });
            }
            p.v = v;
            p.c = c;
            let x = p.x + v * self.dt;
            p.x = x.map(|q| q.max(self.lo).min(self.hi));
            p.f = (Mat3::identity() + c * self.dt) * p.f;
        }
        Ok(())
    }

    pub fn apply_plasticity(&mut self, particles: &mut [ParticleState<T>]) -> Result<(), SimulationFailure> {
        let min_det = T::lit(MIN_DET_F);
        for (pi, p) in particles.iter_mut().enumerate() {
            let f = self
                .eval
                .plastic(&p.f, &self.theta)
                .map_err(|e| SimulationFailure { step: self.step_index, particle: Some(pi), kind: FailureKind::Eval(e) })?;
            let det = f.determinant();
            if !(det > min_det) {
                return Err(SimulationFailure {
                    step: self.step_index,
                    particle: Some(pi),
                    kind: FailureKind::DegenerateF { det: det.to_f64_lossy() },
                });
            }
            p.f = f;
        }
        Ok(())
    }

    /// p2g, grid update, g2p, return mapping and splat covariance update.
    pub fn step(&mut self, particles: &mut [ParticleState<T>]) -> Result<(), SimulationFailure> {
        self.p2g(particles)?;
        self.grid_step();
        self.g2p(particles)?;
        self.apply_plasticity(particles)?;
        for p in particles.iter_mut() {
            let fs = Mat3::identity() + p.c * self.dt;
            p.cov = update_covariance(&p.cov, &fs);
        }
        self.step_index += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecordOptions {
    pub deformation: bool,
    pub covariance: bool,
}

/// Runs `config.frames` frames, recording the initial state plus one snapshot per frame.
pub fn run_sim<T: Real>(
    initial: &[ParticleState<T>],
    law: &TypedLaw,
    theta: &[f64],
    config: &SimConfig,
    record: RecordOptions,
) -> Result<Trajectory<T>, SimError> {
    let mut sim = Simulator::new(law, theta, config)?;
    let mut ps = initial.to_vec();
    let mut traj = Trajectory::new(
        TrajectoryMeta {
            config_digest: config.digest(),
            law_digest: law.digest().to_string(),
            ..Default::default()
        },
        record,
    );
    traj.push(&ps);
    for _ in 0..config.frames {
        for _ in 0..config.substeps_per_frame {
            sim.step(&mut ps)?;
        }
        traj.push(&ps);
    }
    Ok(traj)
}
