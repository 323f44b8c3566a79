use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_loss, is_failure, probe_validity, Feedback, Fitted, SceneObservation};
use crate::dsl::{LawAst, ParamSpec, ParamVector, TypedLaw};

/// Maps each parameter to `[0, 1]` over its bounds, logarithmically for log-scale params.
#[derive(Debug, Clone)]
pub struct ParamTransform {
    specs: Vec<ParamSpec>,
}

impl ParamTransform {
    pub fn new(law: &LawAst) -> Self {
        ParamTransform { specs: law.params.clone() }
    }

    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        self.specs
            .iter()
            .zip(theta)
            .map(|(p, &t)| {
                let u = if p.hi <= p.lo {
                    0.0
                } else if p.log_scale {
                    (t.ln() - p.lo.ln()) / (p.hi.ln() - p.lo.ln())
                } else {
                    (t - p.lo) / (p.hi - p.lo)
                };
                u.clamp(0.0, 1.0)
            })
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.specs
            .iter()
            .zip(u)
            .map(|(p, &u)| {
                let u = u.clamp(0.0, 1.0);
                let t = if p.hi <= p.lo || u == 0.0 {
                    p.lo
                } else if u == 1.0 {
                    p.hi
                } else if p.log_scale {
                    (p.lo.ln() + u * (p.hi.ln() - p.lo.ln())).exp()
                } else {
                    p.lo + u * (p.hi - p.lo)
                };
                t.clamp(p.lo, p.hi)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    /// Coordinates where both probes failed; their component is 0.
    pub degenerate: Vec<bool>,
}

fn usable(v: f64) -> bool {
    !is_failure(v)
}

pub(crate) fn fd_grad<F>(f: &F, x: &[f64], rel_step: f64, f0: Option<f64>, domain: Option<(f64, f64)>) -> Gradient
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|v| (rel_step * v.abs()).max(rel_step * 0.01)).collect();
    let inside = |v: f64| domain.map_or(true, |(lo, hi)| v >= lo && v <= hi);
    let probes: Vec<f64> = (0..2 * n)
        .into_par_iter()
        .map(|k| {
            let i = k / 2;
            let mut y = x.to_vec();
            y[i] += if k % 2 == 0 { steps[i] } else { -steps[i] };
            if inside(y[i]) {
                f(&y)
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut center = f0;
    let mut values = vec![0.0; n];
    let mut degenerate = vec![false; n];
    for i in 0..n {
        let (fp, fm) = (probes[2 * i], probes[2 * i + 1]);
        let h = steps[i];
        values[i] = match (usable(fp), usable(fm)) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) | (false, true) => {
                let c = *center.get_or_insert_with(|| f(x));
                if !usable(c) {
                    degenerate[i] = true;
                    0.0
                } else if usable(fp) {
                    (fp - c) / h
                } else {
                    (c - fm) / h
                }
            }
            (false, false) => {
                degenerate[i] = true;
                0.0
            }
        };
    }
    Gradient { values, degenerate }
}

/// Central differences with one-sided fallback when a probe fails.
pub fn finite_diff_grad<F>(f: F, x: &[f64], rel_step: f64) -> Gradient
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fd_grad(&f, x, rel_step, None, None)
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let b1 = 1.0 - self.beta1.powi(self.t);
        let b2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / b1;
            let vh = self.v[i] / b2;
            x[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub lr: f64,
    pub rel_step: f64,
    pub skip_probe: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { lr: 1e-3, rel_step: 1e-3, skip_probe: false }
    }
}

pub const CURVE_POINTS: usize = 20;

/// Evenly spaced indices (endpoints included) that always contain `must`.
pub fn downsample_indices(n: usize, max: usize, must: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..max)
        .map(|k| ((k as f64) * (n - 1) as f64 / (max - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    if !idx.contains(&must) {
        let j = (1..idx.len() - 1)
            .min_by_key(|&j| idx[j].abs_diff(must))
            .expect("max >= 3");
        idx[j] = must;
        idx.sort_unstable();
    }
    idx
}

/// Fits parameters from the law's declared initial values.
pub fn optimize_params(law: &TypedLaw, obs: &SceneObservation, budget: usize, opts: &OptimizeOptions) -> Fitted {
    optimize_from(law, obs, ParamVector::initial(&law.ast), budget, opts)
}

pub fn optimize_from(
    law: &TypedLaw,
    obs: &SceneObservation,
    theta0: ParamVector,
    budget: usize,
    opts: &OptimizeOptions,
) -> Fitted {
    let started = Instant::now();
    let mut warnings = Vec::new();
    if !opts.skip_probe {
        let report = probe_validity(law, &theta0, obs);
        warnings = report.warnings.clone();
        if !report.passed {
            let mut f = Fitted::failed(theta0, report.describe(), warnings);
            f.feedback.wall_time = started.elapsed().as_secs_f64();
            return f;
        }
    }
    let tf = ParamTransform::new(&law.ast);
    let objective = |u: &[f64]| evaluate_loss(law, &tf.from_unit(u), obs).0;
    let mut u = tf.to_unit(&theta0.values);
    let mut adam = Adam::new(tf.dim(), opts.lr);
    let mut losses: Vec<f64> = Vec::with_capacity(budget + 1);
    let mut thetas: Vec<Vec<f64>> = Vec::with_capacity(budget + 1);
    let mut failure = None;
    let mut theta = theta0.values.clone();
    for it in 0..=budget {
        let (loss, why) = evaluate_loss(law, &theta, obs);
        if let Some(why) = why {
            failure = Some(format!("iteration {it}: {why}"));
            break;
        }
        losses.push(loss);
        thetas.push(theta.clone());
        if it == budget {
            break;
        }
        let g = fd_grad(&objective, &u, opts.rel_step, Some(loss), Some((0.0, 1.0)));
        adam.step(&mut u, &g.values);
        for v in &mut u {
            *v = v.clamp(0.0, 1.0);
        }
        theta = tf.from_unit(&u);
    }
    if losses.is_empty() {
        let mut f = Fitted::failed(theta0, failure.unwrap_or_default(), warnings);
        f.feedback.wall_time = started.elapsed().as_secs_f64();
        return f;
    }
    let best = losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let keep = downsample_indices(losses.len(), CURVE_POINTS, best);
    let theta_star = ParamVector { values: thetas[best].clone() };
    Fitted {
        fitness: losses[best],
        feedback: Feedback {
            loss_curve: keep.iter().map(|&i| (i, losses[i])).collect(),
            theta_init: theta0,
            theta_final: ParamVector { values: thetas.last().unwrap().clone() },
            theta_trajectory: keep.iter().map(|&i| (i, thetas[i].clone())).collect(),
            failure,
            warnings,
            wall_time: started.elapsed().as_secs_f64(),
        },
        theta_star,
    }
}
