use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SceneObservation;
use crate::dsl::{Evaluator, ParamVector, TypedLaw};
use crate::linalg::{Mat3, Vec3};
use crate::mpm::Simulator;

pub const PROBATION_SUBSTEPS: usize = 50;
const REST_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeCheck {
    Battery,
    RestStress,
    Probation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub passed: bool,
    pub failed_check: Option<ProbeCheck>,
    pub message: Option<String>,
    pub warnings: Vec<String>,
}

impl ValidityReport {
    pub fn describe(&self) -> String {
        match (&self.failed_check, &self.message) {
            (None, _) => "valid".into(),
            (Some(c), Some(m)) => format!("invalid ({c:?}): {m}"),
            (Some(c), None) => format!("invalid ({c:?})"),
        }
    }
}

fn quat_rotation(q: [f64; 4]) -> Mat3<f64> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    Mat3([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// Named deformation gradients every candidate must evaluate finitely on.
pub fn probe_battery() -> Vec<(String, Mat3<f64>)> {
    let mut out = vec![("identity".to_string(), Mat3::identity())];
    for axis in 0..3 {
        for (tag, s) in [("stretch", 1.1), ("squeeze", 0.9)] {
            let mut d = Vec3::splat(1.0);
            d[axis] = s;
            out.push((format!("uniaxial {tag} axis {axis}"), Mat3::from_diagonal(&d)));
        }
    }
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        let mut f = Mat3::identity();
        f[(i, j)] = 0.2;
        out.push((format!("simple shear {i}{j}"), f));
    }
    out.push(("uniform 20% compression".into(), Mat3::identity() * 0.8));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let q = [0, 1, 2, 3].map(|_| rng.gen_range(-1.0..1.0));
    out.push(("rotation".into(), quat_rotation(q)));
    let random = loop {
        let mut f = Mat3::identity();
        for r in 0..3 {
            for c in 0..3 {
                f[(r, c)] += rng.gen_range(-0.3..0.3);
            }
        }
        if f.determinant() > 0.1 {
            break f;
        }
    };
    out.push(("random".into(), random));
    out
}

fn fail(check: ProbeCheck, message: String, warnings: Vec<String>) -> ValidityReport {
    ValidityReport { passed: false, failed_check: Some(check), message: Some(message), warnings }
}

/// Battery, rest-stress check (warning only), then a short probation run.
pub fn probe_validity(law: &TypedLaw, theta: &ParamVector, obs: &SceneObservation) -> ValidityReport {
    let mut warnings = Vec::new();
    if theta.values.len() != law.param_count() {
        return fail(
            ProbeCheck::Battery,
            format!("law takes {} parameters, {} given", law.param_count(), theta.values.len()),
            warnings,
        );
    }
    let mut ev = Evaluator::<f64>::new(law);
    for (name, f) in probe_battery() {
        let r = ev.elastic(&f, &theta.values).and_then(|_| ev.plastic(&f, &theta.values));
        match r {
            Err(e) => return fail(ProbeCheck::Battery, format!("at F = {name}: {e}"), warnings),
            Ok(m) if !m.is_finite() => {
                return fail(ProbeCheck::Battery, format!("at F = {name}: non-finite plastic output"), warnings)
            }
            Ok(_) => {}
        }
    }
    let tau = ev.elastic(&Mat3::identity(), &theta.values).expect("identity probe already passed");
    let scale = theta.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let rest = tau.frobenius_norm();
    if rest > REST_TOL * scale {
        warnings.push(format!("stress at rest is {rest:.3e} (expected ~0)"));
    }
    let mut sim = match Simulator::<f64>::new(law, &theta.values, &obs.config) {
        Ok(s) => s,
        Err(e) => return fail(ProbeCheck::Probation, e.to_string(), warnings),
    };
    let mut ps = obs.initial.clone();
    for _ in 0..PROBATION_SUBSTEPS {
        if let Err(e) = sim.step(&mut ps) {
            return fail(ProbeCheck::Probation, e.to_string(), warnings);
        }
    }
    ValidityReport { passed: true, failed_check: None, message: None, warnings }
}
