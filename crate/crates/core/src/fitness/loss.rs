use super::FitnessError;
use crate::linalg::Vec3;
use crate::render::Frame;
use crate::scalar::Real;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const WIN: usize = 11;
const SIGMA: f64 = 1.5;

fn sq_dist<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> f64 {
    let mut s = 0.0;
    for k in 0..3 {
        let d = a[k].to_f64_lossy() - b[k].to_f64_lossy();
        s += d * d;
    }
    s
}

fn one_way<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> f64 {
    let mut total = 0.0;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            best = best.min(sq_dist(p, q));
        }
        total += best;
    }
    total / a.len() as f64
}

/// Symmetric mean squared nearest-neighbour distance.
pub fn chamfer_l2<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<f64, FitnessError> {
    if a.is_empty() || b.is_empty() {
        return Err(FitnessError::EmptySet);
    }
    Ok(one_way(a, b) + one_way(b, a))
}

/// Mean of per-frame Chamfer distances.
pub fn trajectory_chamfer<T: Real>(pred: &[Vec<Vec3<T>>], gt: &[Vec<Vec3<T>>]) -> Result<f64, FitnessError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(FitnessError::StructureMismatch(format!(
            "{} predicted frames vs {} observed",
            pred.len(),
            gt.len()
        )));
    }
    let mut s = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        s += chamfer_l2(p, g)?;
    }
    Ok(s / pred.len() as f64)
}

fn gaussian_window() -> [f64; WIN] {
    let mut w = [0.0; WIN];
    let c = (WIN / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

fn check_dims(a: &Frame, b: &Frame) -> Result<(), FitnessError> {
    if a.width != b.width || a.height != b.height {
        return Err(FitnessError::DimensionMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    Ok(())
}

/// SSIM over the valid region of an 11×11 Gaussian window, averaged over channels.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64, FitnessError> {
    check_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < WIN || h < WIN {
        return Err(FitnessError::DimensionMismatch { a: (w, h), b: (WIN, WIN) });
    }
    let g = gaussian_window();
    let px = |f: &Frame, x: usize, y: usize, c: usize| f.pixels[y * w + x][c] as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        for y0 in 0..=h - WIN {
            for x0 in 0..=w - WIN {
                let (mut ma, mut mb) = (0.0, 0.0);
                for j in 0..WIN {
                    for i in 0..WIN {
                        let k = g[i] * g[j];
                        ma += k * px(a, x0 + i, y0 + j, c);
                        mb += k * px(b, x0 + i, y0 + j, c);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for j in 0..WIN {
                    for i in 0..WIN {
                        let k = g[i] * g[j];
                        let da = px(a, x0 + i, y0 + j, c) - ma;
                        let db = px(b, x0 + i, y0 + j, c) - mb;
                        va += k * da * da;
                        vb += k * db * db;
                        cov += k * da * db;
                    }
                }
                total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

pub fn dssim(a: &Frame, b: &Frame) -> Result<f64, FitnessError> {
    Ok((1.0 - ssim(a, b)?) / 2.0)
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64, FitnessError> {
    check_dims(a, b)?;
    let mut s = 0.0;
    for (p, q) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..3 {
            let d = p[c] as f64 - q[c] as f64;
            s += d * d;
        }
    }
    Ok(s / (3 * a.pixels.len()) as f64)
}

/// Mean over views and frames of `lambda·MSE + (1 − lambda)·D-SSIM`.
pub fn visual_loss(pred: &[Vec<Frame>], gt: &[Vec<Frame>], lambda: f64) -> Result<f64, FitnessError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(FitnessError::StructureMismatch(format!("{} predicted views vs {} observed", pred.len(), gt.len())));
    }
    let mut s = 0.0;
    let mut n = 0usize;
    for (pv, gv) in pred.iter().zip(gt) {
        if pv.len() != gv.len() || pv.is_empty() {
            return Err(FitnessError::StructureMismatch(format!(
                "{} predicted frames vs {} observed",
                pv.len(),
                gv.len()
            )));
        }
        for (p, g) in pv.iter().zip(gv) {
            let mut l = 0.0;
            if lambda > 0.0 {
                l += lambda * mse(p, g)?;
            }
            if lambda < 1.0 {
                l += (1.0 - lambda) * dssim(p, g)?;
            }
            s += l;
            n += 1;
        }
    }
    Ok(s / n as f64)
}
