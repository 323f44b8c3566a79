//! Orthographic Gaussian splat rasterizer with front-to-back alpha compositing.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat3, Vec3};
use crate::mpm::ParticleState;
use crate::scalar::Real;

/// Transmittance below which a pixel stops accumulating.
pub const EARLY_STOP_T: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "+x" | "x" => Axis::PosX,
            "-x" => Axis::NegX,
            "+y" | "y" => Axis::PosY,
            "-y" => Axis::NegY,
            "+z" | "z" => Axis::PosZ,
            "-z" => Axis::NegZ,
            _ => return Err(format!("unknown camera axis `{s}`")),
        })
    }
}

struct AxisFrame {
    /// World indices of the image u, v and depth coordinates.
    iu: usize,
    iv: usize,
    id: usize,
    /// +1 or -1: u = su * x[iu] (+1 when mirrored), depth = sd * x[id].
    su: f64,
    sd: f64,
}

impl Axis {
    fn frame(self) -> AxisFrame {
        let (iu, iv, id, neg) = match self {
            Axis::PosX => (2, 1, 0, false),
            Axis::NegX => (2, 1, 0, true),
            Axis::PosY => (0, 2, 1, false),
            Axis::NegY => (0, 2, 1, true),
            Axis::PosZ => (0, 1, 2, false),
            Axis::NegZ => (0, 1, 2, true),
        };
        let s = if neg { -1.0 } else { 1.0 };
        AxisFrame { iu, iv, id, su: s, sd: s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub axis: Axis,
    pub width: usize,
    pub height: usize,
    /// World window `[u0, v0, u1, v1]` in the image plane.
    pub window: [f64; 4],
    pub background: [f32; 3],
}

impl Default for Camera {
    fn default() -> Self {
        Camera { axis: Axis::PosZ, width: 48, height: 48, window: [0.0, 0.0, 1.0, 1.0], background: [0.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("splat inputs disagree in length")]
    Length,
}

impl Camera {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width < 16 || self.height < 16 {
            return Err(RenderError::Camera("image must be at least 16x16".into()));
        }
        let [u0, v0, u1, v1] = self.window;
        if !(0.0 <= u0 && u0 < u1 && u1 <= 1.0 && 0.0 <= v0 && v0 < v1 && v1 <= 1.0) {
            return Err(RenderError::Camera("window must be an increasing sub-range of [0,1]^2".into()));
        }
        Ok(())
    }

    fn px_per_m(&self) -> (f64, f64) {
        let [u0, v0, u1, v1] = self.window;
        (self.width as f64 / (u1 - u0), self.height as f64 / (v1 - v0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<[f32; 3]>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, c: [f32; 3]) -> Self {
        Frame { width, height, pixels: vec![c; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.pixels[y * self.width + x] = self.pixels[y * self.width + self.width - 1 - x];
            }
        }
        out
    }

    /// Binary PPM, maxval 255.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        w.write_all(&bytes)
    }

    /// Reads a binary PPM (P6, maxval 255) as written by `write_ppm`.
    pub fn read_ppm<R: Read>(mut r: R) -> io::Result<Frame> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, format!("PPM: {m}"));
        let mut pos = 0;
        let mut fields = Vec::new();
        while fields.len() < 4 {
            while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
                if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P6" {
            return Err(bad("only binary P6 is supported"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(bad("maxval must be 255"));
        }
        let body = data.get(pos..pos + width * height * 3).ok_or_else(|| bad("truncated pixel data"))?;
        let pixels = body.chunks_exact(3).map(|c| [0, 1, 2].map(|k| c[k] as f32 / 255.0)).collect();
        Ok(Frame { width, height, pixels })
    }

    /// Rounds every channel to the nearest of 256 levels, as a PPM round trip would.
    pub fn quantized(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() / 255.0)).collect(),
        }
    }
}

/// A splat reduced to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedSplat {
    /// Center in pixel coordinates (x right, y down).
    pub center: [f64; 2],
    /// In-plane world covariance (m²), in image-plane axes.
    pub cov2d: [[f64; 2]; 2],
    pub depth: f64,
    pub alpha: f64,
    pub color: [f64; 3],
}

/// Orthographic projection: drop the camera axis.
pub fn project_splat<T: Real>(x: &Vec3<T>, cov: &Mat3<T>, alpha: T, color: &Vec3<T>, cam: &Camera) -> ProjectedSplat {
    let af = cam.axis.frame();
    let [u0, _, _, v1] = cam.window;
    let (sx, sy) = cam.px_per_m();
    let xw = x.0.map(|c| c.to_f64_lossy());
    let u = if af.su < 0.0 { 1.0 - xw[af.iu] } else { xw[af.iu] };
    let v = xw[af.iv];
    let c = |i: usize, j: usize| cov.0[i][j].to_f64_lossy();
    let cuv = af.su * c(af.iu, af.iv);
    ProjectedSplat {
        center: [(u - u0) * sx, (v1 - v) * sy],
        cov2d: [[c(af.iu, af.iu), cuv], [cuv, c(af.iv, af.iv)]],
        depth: af.sd * xw[af.id],
        alpha: alpha.to_f64_lossy(),
        color: color.0.map(|c| c.to_f64_lossy()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompositeOptions {
    pub early_termination: bool,
}

impl Default for CompositeOptions {
    fn default() -> Self {
        CompositeOptions { early_termination: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompositeStats {
    pub singular_skipped: usize,
}

/// Composites splats given in front-to-back order.
pub fn composite(splats: &[ProjectedSplat], cam: &Camera, opts: CompositeOptions) -> (Frame, CompositeStats) {
    let (w, h) = (cam.width, cam.height);
    let (sx, sy) = cam.px_per_m();
    let mut acc = vec![[0.0f64; 3]; w * h];
    let mut trans = vec![1.0f64; w * h];
    let mut stats = CompositeStats::default();
    let stop = if opts.early_termination { EARLY_STOP_T } else { 0.0 };
    for s in splats {
        // pixel-space covariance; v flips sign so the off-diagonal does too
        let a = s.cov2d[0][0] * sx * sx;
        let b = -s.cov2d[0][1] * sx * sy;
        let d = s.cov2d[1][1] * sy * sy;
        let det = a * d - b * b;
        let tr = a + d;
        let lmin = tr / 2.0 - ((a - d) * (a - d) / 4.0 + b * b).sqrt();
        let lmax = tr - lmin;
        if !(det > 0.0 && lmin > 1e-10 * lmax) || !s.alpha.is_finite() {
            stats.singular_skipped += 1;
            continue;
        }
        let (ia, ib, id) = (d / det, -b / det, a / det);
        let rx = 3.0 * a.sqrt();
        let ry = 3.0 * d.sqrt();
        let x0 = ((s.center[0] - rx).floor().max(0.0)) as usize;
        let x1 = ((s.center[0] + rx).ceil().min(w as f64)).max(0.0) as usize;
        let y0 = ((s.center[1] - ry).floor().max(0.0)) as usize;
        let y1 = ((s.center[1] + ry).ceil().min(h as f64)).max(0.0) as usize;
        for py in y0..y1 {
            let dy = py as f64 + 0.5 - s.center[1];
            for px in x0..x1 {
                let i = py * w + px;
                let t = trans[i];
                if t < stop {
                    continue;
                }
                let dx = px as f64 + 0.5 - s.center[0];
                let q = ia * dx * dx + 2.0 * ib * dx * dy + id * dy * dy;
                let sigma = s.alpha * (-0.5 * q).exp();
                for ch in 0..3 {
                    acc[i][ch] += sigma * t * s.color[ch];
                }
                trans[i] = t * (1.0 - sigma);
            }
        }
    }
    let bg = cam.background.map(f64::from);
    let pixels = acc
        .iter()
        .zip(&trans)
        .map(|(c, &t)| [0, 1, 2].map(|ch| ((c[ch] + t * bg[ch]) as f32).clamp(0.0, 1.0)))
        .collect();
    (Frame { width: w, height: h, pixels }, stats)
}

/// Projects, depth-sorts (ties by index) and composites.
pub fn render_splats<T: Real>(
    positions: &[Vec3<T>],
    covs: &[Mat3<T>],
    opacity: &[T],
    colors: &[Vec3<T>],
    cam: &Camera,
) -> Result<(Frame, CompositeStats), RenderError> {
    cam.validate()?;
    let n = positions.len();
    if covs.len() != n || opacity.len() != n || colors.len() != n {
        return Err(RenderError::Length);
    }
    let mut sp: Vec<(usize, ProjectedSplat)> = (0..n)
        .map(|i| (i, project_splat(&positions[i], &covs[i], opacity[i], &colors[i], cam)))
        .collect();
    sp.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
    let splats: Vec<ProjectedSplat> = sp.into_iter().map(|(_, s)| s).collect();
    Ok(composite(&splats, cam, CompositeOptions::default()))
}

pub fn render_frame<T: Real>(particles: &[ParticleState<T>], cam: &Camera) -> Result<Frame, RenderError> {
    let xs: Vec<_> = particles.iter().map(|p| p.x).collect();
    let cs: Vec<_> = particles.iter().map(|p| p.cov).collect();
    let os: Vec<_> = particles.iter().map(|p| p.opacity).collect();
    let col: Vec<_> = particles.iter().map(|p| p.color).collect();
    render_splats(&xs, &cs, &os, &col, cam).map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(axis: Axis, n: usize) -> Camera {
        Camera { axis, width: n, height: n, window: [0.0, 0.0, 1.0, 1.0], background: [0.1, 0.2, 0.3] }
    }

    fn splat_at_pixel(px: f64, py: f64, alpha: f64, color: [f64; 3]) -> ProjectedSplat {
        ProjectedSplat { center: [px, py], cov2d: [[1e-4, 0.0], [0.0, 1e-4]], depth: 0.0, alpha, color }
    }

    #[test]
    fn projection_drops_axis() {
        let c = cam(Axis::PosZ, 32);
        let s2 = 0.01f64 * 0.01;
        let p = project_splat(&Vec3::new(0.25, 0.75, 0.4), &(Mat3::identity() * s2), 0.5, &Vec3::splat(1.0), &c);
        assert_eq!(p.cov2d, [[s2, 0.0], [0.0, s2]]);
        assert_eq!(p.depth, 0.4);
        assert_eq!(p.center, [8.0, 8.0]);
        let a = Mat3::from_rows([2.0, 0.5, 0.3], [0.5, 1.0, -0.2], [0.3, -0.2, 3.0]);
        let p = project_splat(&Vec3::splat(0.5), &a, 1.0, &Vec3::splat(1.0), &c);
        assert_eq!(p.cov2d, [[2.0, 0.5], [0.5, 1.0]]);
    }

    #[test]
    fn projection_marginalizes_rotated_gaussian() {
        // numerically integrate the 3D density along z and fit the second moments
        let r = Mat3::from_rows([0.36, 0.48, -0.8], [-0.8, 0.6, 0.0], [0.48, 0.64, 0.6]);
        let a = r * Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 0.25)) * r.transpose();
        let inv = a.try_inverse().unwrap();
        let (n, h) = (80i32, 0.15);
        let mut m = [[0.0f64; 2]; 2];
        let mut mass = 0.0;
        for i in -n..=n {
            for j in -n..=n {
                for k in -n..=n {
                    let p = Vec3::new(i as f64, j as f64, k as f64) * h;
                    let w = (-0.5 * p.dot(&(inv * p))).exp();
                    mass += w;
                    m[0][0] += w * p[0] * p[0];
                    m[0][1] += w * p[0] * p[1];
                    m[1][1] += w * p[1] * p[1];
                }
            }
        }
        let p = project_splat(&Vec3::splat(0.5), &a, 1.0, &Vec3::splat(1.0), &cam(Axis::PosZ, 32));
        assert!((m[0][0] / mass - p.cov2d[0][0]).abs() < 1e-6);
        assert!((m[0][1] / mass - p.cov2d[0][1]).abs() < 1e-6);
        assert!((m[1][1] / mass - p.cov2d[1][1]).abs() < 1e-6);
    }

    #[test]
    fn empty_is_background() {
        let c = cam(Axis::PosZ, 16);
        let (f, _) = composite(&[], &c, CompositeOptions::default());
        assert!(f.pixels.iter().all(|&p| p == [0.1, 0.2, 0.3]));
    }

    #[test]
    fn opaque_center_takes_splat_color() {
        let c = cam(Axis::PosZ, 16);
        let (f, _) = composite(&[splat_at_pixel(8.5, 4.5, 1.0, [0.9, 0.4, 0.2])], &c, CompositeOptions::default());
        let p = f.get(8, 4);
        for (a, b) in p.iter().zip([0.9, 0.4, 0.2]) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn two_half_splats() {
        let c = cam(Axis::PosZ, 16);
        let (c1, c2) = ([0.9, 0.1, 0.5], [0.2, 0.8, 0.4]);
        let s = [splat_at_pixel(3.5, 3.5, 0.5, c1), splat_at_pixel(3.5, 3.5, 0.5, c2)];
        let (f, _) = composite(&s, &c, CompositeOptions::default());
        let bg = [0.1, 0.2, 0.3];
        for ch in 0..3 {
            let want = 0.5 * c1[ch] + 0.25 * c2[ch] + 0.25 * bg[ch];
            assert!((f.get(3, 3)[ch] as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn weights_and_transmittance_sum_to_one() {
        let mut c = cam(Axis::PosZ, 24);
        let no_stop = CompositeOptions { early_termination: false };
        let splats: Vec<ProjectedSplat> = (0..12)
            .map(|i| ProjectedSplat {
                center: [6.0 + i as f64, 12.0 - 0.5 * i as f64],
                cov2d: [[4e-3, 1e-3 * (i as f64 - 5.0) / 5.0], [1e-3 * (i as f64 - 5.0) / 5.0, 3e-3]],
                depth: i as f64,
                alpha: 0.3 + 0.05 * i as f64,
                color: [1.0; 3],
            })
            .collect();
        c.background = [0.0; 3];
        let (weights, _) = composite(&splats, &c, no_stop);
        let dark: Vec<_> = splats.iter().map(|s| ProjectedSplat { color: [0.0; 3], ..*s }).collect();
        c.background = [1.0; 3];
        let (t, _) = composite(&dark, &c, no_stop);
        for (a, b) in weights.pixels.iter().zip(&t.pixels) {
            assert!((a[0] as f64 + b[0] as f64 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn opaque_stack_converges_monotonically() {
        let c = Camera { background: [0.0; 3], ..cam(Axis::PosZ, 16) };
        let mut prev = 0.0;
        for n in 1..8 {
            let s: Vec<_> = (0..n).map(|_| splat_at_pixel(8.5, 8.5, 0.9, [0.7, 0.7, 0.7])).collect();
            let v = composite(&s, &c, CompositeOptions::default()).0.get(8, 8)[0] as f64;
            assert!(v >= prev - 1e-7);
            prev = v;
        }
        assert!((prev - 0.7).abs() <= 0.7 * EARLY_STOP_T);
    }

    #[test]
    fn singular_splat_skipped() {
        let c = cam(Axis::PosZ, 16);
        let s = ProjectedSplat { cov2d: [[1e-4, 1e-4], [1e-4, 1e-4]], ..splat_at_pixel(8.0, 8.0, 1.0, [1.0; 3]) };
        let (f, stats) = composite(&[s], &c, CompositeOptions::default());
        assert_eq!(stats.singular_skipped, 1);
        assert!(f.pixels.iter().all(|&p| p == [0.1, 0.2, 0.3]));
    }

    fn blob(n: usize, offset: [f64; 3]) -> Vec<ParticleState<f64>> {
        let base = ParticleState {
            x: Vec3::zero(),
            v: Vec3::zero(),
            f: Mat3::identity(),
            c: Mat3::zero(),
            mass: 1.0,
            volume0: 1.0,
            color: Vec3::new(0.9, 0.6, 0.1),
            opacity: 0.8,
            cov: Mat3::identity() * 4e-4,
        };
        (0..n)
            .map(|i| {
                let t = i as f64;
                let mut p = base;
                p.x = Vec3::new(0.4 + 0.02 * (t % 5.0) + offset[0], 0.45 + 0.03 * (t / 5.0).floor() + offset[1], 0.5 + 0.01 * t + offset[2]);
                p
            })
            .collect()
    }

    #[test]
    fn render_is_deterministic_and_in_range() {
        let ps = blob(20, [0.0; 3]);
        let c = cam(Axis::PosZ, 32);
        let a = render_frame(&ps, &c).unwrap();
        let b = render_frame(&ps, &c).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn in_plane_translation_shifts_image() {
        let c = Camera { background: [0.0; 3], ..cam(Axis::PosZ, 40) };
        let a = render_frame(&blob(15, [0.0; 3]), &c).unwrap();
        // 3 px right, 2 px up
        let b = render_frame(&blob(15, [3.0 / 40.0, 2.0 / 40.0, 0.0]), &c).unwrap();
        let mut best = (f64::NEG_INFINITY, 0i32, 0i32);
        for sy in -5i32..=5 {
            for sx in -5i32..=5 {
                let mut acc = 0.0;
                for y in 0..40i32 {
                    for x in 0..40i32 {
                        let (x2, y2) = (x + sx, y + sy);
                        if (0..40).contains(&x2) && (0..40).contains(&y2) {
                            acc += a.get(x as usize, y as usize)[0] as f64 * b.get(x2 as usize, y2 as usize)[0] as f64;
                        }
                    }
                }
                if acc > best.0 {
                    best = (acc, sx, sy);
                }
            }
        }
        assert_eq!((best.1, best.2), (3, -2));
    }

    #[test]
    fn mirrored_scene_flips_horizontally() {
        let ps = blob(15, [0.0; 3]);
        let mirrored: Vec<_> = ps
            .iter()
            .map(|p| {
                let mut q = *p;
                q.x[2] = 1.0 - p.x[2];
                q
            })
            .collect();
        let a = render_frame(&ps, &cam(Axis::PosZ, 32)).unwrap();
        let b = render_frame(&mirrored, &cam(Axis::NegZ, 32)).unwrap();
        assert_eq!(a, b.flip_horizontal());
    }

    #[test]
    fn ppm_round_trip() {
        let f = Frame { width: 3, height: 2, pixels: (0..6).map(|i| [i as f32 / 5.0, 0.5, 1.0]).collect() };
        let mut buf = b"".to_vec();
        f.write_ppm(&mut buf).unwrap();
        let back = Frame::read_ppm(&buf[..]).unwrap();
        assert_eq!(back, f.quantized());
        let commented = [b"P6\n# note\n3 2\n255\n".as_slice(), &buf[11..]].concat();
        assert_eq!(Frame::read_ppm(&commented[..]).unwrap(), back);
        assert!(Frame::read_ppm(&b"P3\n1 1\n255\n0 0 0"[..]).is_err());
        assert!(Frame::read_ppm(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn ppm_header() {
        let f = Frame::filled(16, 16, [1.0, 0.0, 0.5]);
        let mut out = Vec::new();
        f.write_ppm(&mut out).unwrap();
        assert!(out.starts_with(b"P6\n16 16\n255\n"));
        assert_eq!(out.len(), 13 + 16 * 16 * 3);
        assert_eq!(&out[13..16], &[255, 0, 128]);
    }
}
