//! VLTJ binary trajectories and their metadata sidecar.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Trajectory, TrajectoryMeta};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"VLTJ";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VltjError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a trajectory file (bad magic)")]
    BadMagic,
    #[error("unsupported trajectory version {0}")]
    Version(u32),
    #[error("trajectory has inconsistent particle counts")]
    Ragged,
    #[error("trajectory contains non-finite values")]
    NonFinite,
    #[error("metadata: {0}")]
    Meta(String),
}

/// Writes the header, then per frame all positions followed by all F (row-major) if present.
pub fn write_vltj<T: Real, W: Write>(mut w: W, traj: &Trajectory<T>) -> Result<(), VltjError> {
    let n = traj.particle_count();
    if traj.frames.iter().any(|f| f.len() != n) {
        return Err(VltjError::Ragged);
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(traj.frame_count() as u32).to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&[u8::from(traj.deformation.is_some())])?;
    let mut buf = Vec::with_capacity(n * 48);
    for (fi, frame) in traj.frames.iter().enumerate() {
        buf.clear();
        for x in frame {
            for c in x.0 {
                buf.extend_from_slice(&(c.to_f64_lossy() as f32).to_le_bytes());
            }
        }
        if let Some(d) = &traj.deformation {
            for f in &d[fi] {
                for row in f.0 {
                    for c in row {
                        buf.extend_from_slice(&(c.to_f64_lossy() as f32).to_le_bytes());
                    }
                }
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, out: &mut [f32]) -> io::Result<()> {
    let mut b = vec![0u8; out.len() * 4];
    r.read_exact(&mut b)?;
    for (o, c) in out.iter_mut().zip(b.chunks_exact(4)) {
        *o = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
    }
    Ok(())
}

pub fn read_vltj<T: Real, R: Read>(mut r: R) -> Result<Trajectory<T>, VltjError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(VltjError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(VltjError::Version(version));
    }
    let frames = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let has_f = flag[0] != 0;
    let mut traj = Trajectory {
        frames: Vec::with_capacity(frames),
        deformation: has_f.then(Vec::new),
        covariance: None,
        meta: TrajectoryMeta::default(),
    };
    let mut xs = vec![0f32; n * 3];
    let mut fs = vec![0f32; if has_f { n * 9 } else { 0 }];
    for _ in 0..frames {
        read_f32s(&mut r, &mut xs)?;
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(VltjError::NonFinite);
        }
        traj.frames.push(
            xs.chunks_exact(3)
                .map(|c| Vec3([c[0], c[1], c[2]].map(|v| T::lit(v as f64))))
                .collect(),
        );
        if let Some(d) = &mut traj.deformation {
            read_f32s(&mut r, &mut fs)?;
            d.push(
                fs.chunks_exact(9)
                    .map(|c| {
                        let e = |i: usize| T::lit(c[i] as f64);
                        Mat3([[e(0), e(1), e(2)], [e(3), e(4), e(5)], [e(6), e(7), e(8)]])
                    })
                    .collect(),
            );
        }
    }
    Ok(traj)
}

/// `<path>.meta.toml`
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

pub fn write_meta(path: &Path, meta: &TrajectoryMeta, extra: Option<&toml::Table>) -> Result<(), VltjError> {
    let mut table = toml::Table::try_from(meta).map_err(|e| VltjError::Meta(e.to_string()))?;
    if let Some(extra) = extra {
        for (k, v) in extra {
            table.insert(k.clone(), v.clone());
        }
    }
    let text = toml::to_string(&table).map_err(|e| VltjError::Meta(e.to_string()))?;
    fs::write(meta_path(path), text)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<TrajectoryMeta, VltjError> {
    let text = fs::read_to_string(meta_path(path))?;
    toml::from_str(&text).map_err(|e| VltjError::Meta(e.to_string()))
}
