//! Fixed-size 3-vectors and 3×3 matrices, plus a rotation-consistent SVD.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("non-finite input matrix")]
    NonFiniteInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3([T::zero(); 3])
    }

    #[inline]
    pub fn splat(v: T) -> Self {
        Vec3([v; 3])
    }

    #[inline]
    pub fn x(&self) -> T {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> T {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> T {
        self.0[2]
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Vec3([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn sum(&self) -> T {
        self.0[0] + self.0[1] + self.0[2]
    }

    #[inline]
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Vec3([f(self.0[0]), f(self.0[1]), f(self.0[2])])
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Vec3<U> {
        Vec3(self.0.map(|v| U::lit(v.to_f64_lossy())))
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        self.map(|v| v / s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Real> Mat3<T> {
    #[inline]
    pub fn zero() -> Self {
        Mat3([[T::zero(); 3]; 3])
    }

    #[inline]
    pub fn identity() -> Self {
        Self::from_diagonal(&Vec3::splat(T::one()))
    }

    #[inline]
    pub fn from_diagonal(d: &Vec3<T>) -> Self {
        let z = T::zero();
        Mat3([[d[0], z, z], [z, d[1], z], [z, z, d[2]]])
    }

    #[inline]
    pub fn from_rows(r0: [T; 3], r1: [T; 3], r2: [T; 3]) -> Self {
        Mat3([r0, r1, r2])
    }

    #[inline]
    pub fn from_cols(c0: &Vec3<T>, c1: &Vec3<T>, c2: &Vec3<T>) -> Self {
        Mat3([
            [c0[0], c1[0], c2[0]],
            [c0[1], c1[1], c2[1]],
            [c0[2], c1[2], c2[2]],
        ])
    }

    #[inline]
    pub fn outer(a: &Vec3<T>, b: &Vec3<T>) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = a[i] * b[j];
            }
        }
        m
    }

    #[inline]
    pub fn col(&self, j: usize) -> Vec3<T> {
        Vec3([self.0[0][j], self.0[1][j], self.0[2][j]])
    }

    #[inline]
    pub fn row(&self, i: usize) -> Vec3<T> {
        Vec3(self.0[i])
    }

    #[inline]
    pub fn diagonal(&self) -> Vec3<T> {
        Vec3([self.0[0][0], self.0[1][1], self.0[2][2]])
    }

    #[inline]
    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    #[inline]
    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    #[inline]
    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate; `None` when the determinant is zero or the
    /// matrix is numerically singular relative to its scale.
    pub fn try_inverse(&self) -> Option<Self> {
        let m = &self.0;
        let det = self.determinant();
        let scale = self.max_abs();
        if !det.is_finite() || det == T::zero() || det.abs() <= T::epsilon() * scale * scale * scale {
            return None;
        }
        let inv_det = T::one() / det;
        let cof = Mat3([
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ]);
        Some(cof.scale(inv_det))
    }

    #[inline]
    pub fn frobenius_norm(&self) -> T {
        self.0.iter().flatten().map(|&v| v * v).sum::<T>().sqrt()
    }

    #[inline]
    pub fn max_abs(&self) -> T {
        self.0
            .iter()
            .flatten()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    #[inline]
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Mat3(self.0.map(|r| r.map(&f)))
    }

    /// `M - (tr M / 3) I`
    pub fn deviatoric(&self) -> Self {
        let p = self.trace() / T::lit(3.0);
        *self - Self::identity().scale(p)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        Mat3(self.0.map(|r| r.map(|v| U::lit(v.to_f64_lossy()))))
    }
}

impl<T> Index<(usize, usize)> for Mat3<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.0[i][j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat3<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.0[i][j]
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] += o.0[i][j];
            }
        }
        r
    }
}

impl<T: Real> AddAssign for Mat3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] -= o.0[i][j];
            }
        }
        r
    }
}

impl<T: Real> Neg for Mat3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let a = &self.0;
        let b = &o.0;
        let mut r = [[T::zero(); 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, out) in row.iter_mut().enumerate() {
                *out = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Mat3(r)
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    #[inline]
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        let a = &self.0;
        Vec3([
            a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
            a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
            a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
        ])
    }
}

impl<T: Real> Mul<T> for Mat3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Real> Div<T> for Mat3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        self.map(|v| v / s)
    }
}

/// `M = U · diag(S) · Vᵀ` with `det U = det V = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd3<T> {
    pub u: Mat3<T>,
    pub s: Vec3<T>,
    pub v: Mat3<T>,
}

impl<T: Real> Svd3<T> {
    pub fn reconstruct(&self) -> Mat3<T> {
        self.u * Mat3::from_diagonal(&self.s) * self.v.transpose()
    }

    /// Rotation factor `U Vᵀ` of the polar decomposition.
    pub fn rotation(&self) -> Mat3<T> {
        self.u * self.v.transpose()
    }
}

/// Rotation-consistent singular value decomposition of a 3×3 matrix.
///
/// One-sided Jacobi orthogonalization of the columns. Singular values are
/// sorted by descending magnitude; when `det M < 0` the sign deficit lands on
/// the last (smallest) singular value so both factors stay proper rotations.
pub fn svd3<T: Real>(m: &Mat3<T>) -> Result<Svd3<T>, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    let mut a = [m.col(0), m.col(1), m.col(2)];
    let mut v = [
        Vec3::new(T::one(), T::zero(), T::zero()),
        Vec3::new(T::zero(), T::one(), T::zero()),
        Vec3::new(T::zero(), T::zero(), T::one()),
    ];
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let alpha = a[p].norm_squared();
            let beta = a[q].norm_squared();
            let gamma = a[p].dot(&a[q]);
            if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (gamma + gamma);
            let za = zeta.abs();
            let root = if za > T::lit(1e150) { za } else { (T::one() + za * za).sqrt() };
            let t = zeta.signum() / (za + root);
            let c = T::one() / (T::one() + t * t).sqrt();
            let s = c * t;
            let (ap, aq) = (a[p], a[q]);
            a[p] = ap * c - aq * s;
            a[q] = ap * s + aq * c;
            let (vp, vq) = (v[p], v[q]);
            v[p] = vp * c - vq * s;
            v[q] = vp * s + vq * c;
        }
        if !rotated {
            break;
        }
    }

    let sigma = [a[0].norm(), a[1].norm(), a[2].norm()];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(std::cmp::Ordering::Equal));

    let smax = sigma[order[0]];
    let tol = smax * eps * T::lit(16.0);
    let mut s = Vec3::new(sigma[order[0]], sigma[order[1]], sigma[order[2]]);
    let mut vcols = [v[order[0]], v[order[1]], v[order[2]]];
    let mut ucols = [Vec3::zero(); 3];
    let mut rank = 0;
    for k in 0..3 {
        if s[k] > tol && s[k] > T::zero() {
            ucols[k] = a[order[k]] / s[k];
            rank += 1;
        } else {
            break;
        }
    }
    match rank {
        3 => {}
        2 => ucols[2] = unit(ucols[0].cross(&ucols[1])),
        1 => {
            ucols[1] = any_orthogonal(&ucols[0]);
            ucols[2] = unit(ucols[0].cross(&ucols[1]));
        }
        _ => {
            ucols = [
                Vec3::new(T::one(), T::zero(), T::zero()),
                Vec3::new(T::zero(), T::one(), T::zero()),
                Vec3::new(T::zero(), T::zero(), T::one()),
            ];
        }
    }

    let mut vm = Mat3::from_cols(&vcols[0], &vcols[1], &vcols[2]);
    if vm.determinant() < T::zero() {
        vcols[2] = -vcols[2];
        ucols[2] = -ucols[2];
        vm = Mat3::from_cols(&vcols[0], &vcols[1], &vcols[2]);
    }
    let mut um = Mat3::from_cols(&ucols[0], &ucols[1], &ucols[2]);
    if um.determinant() < T::zero() {
        ucols[2] = -ucols[2];
        s[2] = -s[2];
        um = Mat3::from_cols(&ucols[0], &ucols[1], &ucols[2]);
    }
    Ok(Svd3 { u: um, s, v: vm })
}

fn unit<T: Real>(v: Vec3<T>) -> Vec3<T> {
    let n = v.norm();
    if n > T::zero() {
        v / n
    } else {
        v
    }
}

fn any_orthogonal<T: Real>(u: &Vec3<T>) -> Vec3<T> {
    let mut k = 0;
    for i in 1..3 {
        if u[i].abs() < u[k].abs() {
            k = i;
        }
    }
    let mut e = Vec3::zero();
    e[k] = T::one();
    unit(e - *u * u.dot(&e))
}
