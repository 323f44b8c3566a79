//! Closed-form material models coded directly on arrays, independent of the interpreter.

pub type M = [[f64; 3]; 3];

pub fn mul(a: &M, b: &M) -> M {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                o[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    o
}

pub fn tr(a: &M) -> M {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = a[j][i];
        }
    }
    o
}

pub fn det(a: &M) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn inv(a: &M) -> M {
    let d = det(a);
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            o[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d;
        }
    }
    o
}

fn lin(a: &M, sa: f64, b: &M, sb: f64) -> M {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = sa * a[i][j] + sb * b[i][j];
        }
    }
    o
}

pub fn eye() -> M {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// Rotation factor of the polar decomposition by Newton iteration.
pub fn polar_rotation(f: &M) -> M {
    let mut x = *f;
    for _ in 0..100 {
        let next = lin(&x, 0.5, &tr(&inv(&x)), 0.5);
        let mut d = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                d += (next[i][j] - x[i][j]).powi(2);
            }
        }
        x = next;
        if d < 1e-30 {
            break;
        }
    }
    x
}

/// Eigen decomposition of a symmetric matrix by cyclic Jacobi; eigenvectors are columns.
pub fn sym_eigen(a: &M) -> ([f64; 3], M) {
    let mut a = *a;
    let mut q = eye();
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-36 {
            break;
        }
        for (p, r) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][r].abs() < 1e-300 {
                continue;
            }
            let theta = (a[r][r] - a[p][p]) / (2.0 * a[p][r]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut g = eye();
            g[p][p] = c;
            g[r][r] = c;
            g[p][r] = s;
            g[r][p] = -s;
            a = mul(&tr(&g), &mul(&a, &g));
            q = mul(&q, &g);
        }
    }
    ([a[0][0], a[1][1], a[2][2]], q)
}

/// Left singular vectors, singular values and right singular vectors of F with det F > 0.
pub fn svd_via_eigen(f: &M) -> (M, [f64; 3], M) {
    let (lam, u) = sym_eigen(&mul(f, &tr(f)));
    let s = lam.map(f64::sqrt);
    let ft = tr(f);
    let mut v = [[0.0; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            v[i][k] = (0..3).map(|j| ft[i][j] * u[j][k]).sum::<f64>() / s[k];
        }
    }
    (u, s, v)
}

fn u_diag_vt(u: &M, d: [f64; 3], v: &M) -> M {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| u[i][k] * d[k] * v[j][k]).sum();
        }
    }
    o
}

pub fn fixed_corotated(f: &M, mu: f64, lam: f64) -> M {
    let r = polar_rotation(f);
    let j = det(f);
    let a = mul(&lin(f, 1.0, &r, -1.0), &tr(f));
    lin(&a, 2.0 * mu, &eye(), lam * j * (j - 1.0))
}

pub fn neo_hookean(f: &M, mu: f64, lam: f64) -> M {
    let b = mul(f, &tr(f));
    lin(&lin(&b, 1.0, &eye(), -1.0), mu, &eye(), lam * det(f).ln())
}

pub fn stvk_hencky(f: &M, mu: f64, lam: f64) -> M {
    let (u, s, _) = svd_via_eigen(f);
    let e = s.map(|x| x.max(1e-4).ln());
    let t = e[0] + e[1] + e[2];
    u_diag_vt(&u, e.map(|x| 2.0 * mu * x + lam * t), &u)
}

fn hencky_parts(f: &M) -> (M, M, [f64; 3], [f64; 3], f64) {
    let (u, s, v) = svd_via_eigen(f);
    let e = s.map(|x| x.max(1e-4).ln());
    let m = (e[0] + e[1] + e[2]) / 3.0;
    let d = e.map(|x| x - m);
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    (u, v, e, d, n)
}

pub fn von_mises(f: &M, mu: f64, yield_stress: f64) -> M {
    let (u, v, e, d, n) = hencky_parts(f);
    let dg = n - yield_stress / (2.0 * mu);
    if dg <= 0.0 {
        return *f;
    }
    let eps = [0, 1, 2].map(|k| (e[k] - dg * d[k] / n).exp());
    u_diag_vt(&u, eps, &v)
}

pub fn drucker_prager(f: &M, mu: f64, lam: f64, alpha: f64) -> M {
    let (u, v, e, d, n) = hencky_parts(f);
    let t = e[0] + e[1] + e[2];
    if t >= 0.0 {
        return mul(&u, &tr(&v));
    }
    let dg = n + (3.0 * lam + 2.0 * mu) / (2.0 * mu) * t * alpha;
    if dg <= 0.0 {
        return *f;
    }
    let eps = [0, 1, 2].map(|k| (e[k] - dg * d[k] / n).exp());
    u_diag_vt(&u, eps, &v)
}

/// Uniform random rotation from a normalized quaternion.
pub fn rotation(q: [f64; 4]) -> M {
    let n = (q.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// F = Q1 diag(s) Q2 with stretches in [0.8, 1.25], so det F lies in [0.512, 1.953].
pub fn random_f(rng: &mut impl rand::Rng) -> M {
    let mut quat = || [0; 4].map(|_| rng.gen_range(-1.0..1.0));
    let (q1, q2) = (rotation(quat()), rotation(quat()));
    let s = [0; 3].map(|_| rng.gen_range(0.8..1.25));
    u_diag_vt(&q1, s, &tr(&q2))
}

pub fn rel_err(a: &M, b: &M) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            num += (a[i][j] - b[i][j]).powi(2);
            den += b[i][j].powi(2);
        }
    }
    (num / den.max(1e-300)).sqrt()
}
