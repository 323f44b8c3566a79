use proptest::prelude::*;

use super::*;
use crate::dsl::{catalog_law, compile_law, typecheck};
use crate::linalg::Vec3;
use crate::scene::bundled_scene;

fn pts(v: &[[f64; 3]]) -> Vec<Vec3<f64>> {
    v.iter().map(|p| Vec3(*p)).collect()
}

fn jelly(mode: LossMode) -> SceneObservation {
    let mut s = bundled_scene("jelly").unwrap();
    s.config.frames = 4;
    SceneObservation::from_scene(&s, mode, DEFAULT_LAMBDA).unwrap()
}

fn jelly_full() -> SceneObservation {
    SceneObservation::from_scene(&bundled_scene("jelly").unwrap(), LossMode::Chamfer, DEFAULT_LAMBDA).unwrap()
}

fn catalog(name: &str) -> TypedLaw {
    typecheck(catalog_law(name).unwrap()).unwrap()
}

fn noise(seed: u64, n: usize) -> Frame {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Frame { width: n, height: n, pixels: (0..n * n).map(|_| [0, 1, 2].map(|_| rng.gen::<f32>())).collect() }
}

#[test]
fn chamfer_examples() {
    let a = pts(&[[0.0, 0.0, 0.0]]);
    let b = pts(&[[1.0, 0.0, 0.0]]);
    assert_eq!(chamfer_l2(&a, &b).unwrap(), 2.0);
    assert_eq!(chamfer_l2(&a, &a).unwrap(), 0.0);
    assert_eq!(chamfer_l2::<f64>(&[], &b), Err(FitnessError::EmptySet));
}

#[test]
fn dssim_constant_images() {
    let a = Frame::filled(16, 16, [0.2; 3]);
    let b = Frame::filled(16, 16, [0.6; 3]);
    let (x, y) = (0.2f32 as f64, 0.6f32 as f64);
    let c1 = 1e-4;
    let want = (2.0 * x * y + c1) / (x * x + y * y + c1);
    assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-10);
    assert!((dssim(&a, &b).unwrap() - (1.0 - want) / 2.0).abs() < 1e-10);
    assert_eq!(dssim(&a, &a).unwrap(), 0.0);
    let small = Frame::filled(20, 16, [0.0; 3]);
    assert!(matches!(dssim(&a, &small), Err(FitnessError::DimensionMismatch { .. })));
}

#[test]
fn dssim_noise_floor() {
    let d = dssim(&noise(1, 32), &noise(2, 32)).unwrap();
    assert!(d > 0.3, "{d}");
}

#[test]
fn visual_loss_examples() {
    let a = Frame::filled(16, 16, [0.2; 3]);
    let b = Frame::filled(16, 16, [0.6; 3]);
    let pred = vec![vec![a.clone()]];
    let gt = vec![vec![b.clone()]];
    let m = mse(&a, &b).unwrap();
    assert!((visual_loss(&pred, &gt, 1.0).unwrap() - m).abs() < 1e-12);
    let want = 0.5 * m + 0.5 * dssim(&a, &b).unwrap();
    assert!((visual_loss(&pred, &gt, 0.5).unwrap() - want).abs() < 1e-12);
    for l in [0.0, 0.3, 1.0] {
        assert_eq!(visual_loss(&gt, &gt, l).unwrap(), 0.0);
    }
    assert!(matches!(visual_loss(&pred, &[], 0.5), Err(FitnessError::StructureMismatch(_))));
}

#[test]
fn perfect_candidate_scores_zero() {
    for mode in [LossMode::Chamfer, LossMode::Mixed] {
        let obs = jelly(mode);
        let law = catalog("neo_hookean");
        let spec = bundled_scene("jelly").unwrap();
        let theta = spec.reference_theta(&law).unwrap();
        let (l, why) = evaluate_loss(&law, theta.as_slice(), &obs);
        assert!(why.is_none());
        assert!(l.abs() <= 1e-10, "{mode:?} {l}");
    }
}

#[test]
fn chamfer_mode_is_trajectory_mean() {
    let obs = jelly(LossMode::Chamfer);
    let law = catalog("neo_hookean");
    let pred = obs.simulate(&law, &[1e3, 1e3]).unwrap();
    let direct = trajectory_chamfer(&pred.frames, &obs.gt_trajectory.frames).unwrap();
    assert_eq!(total_loss(&pred, &obs).unwrap(), direct);
    assert!(direct > 0.0);
}

#[test]
fn failed_simulation_is_sentinel() {
    let obs = jelly(LossMode::Chamfer);
    let law = compile_law("elastic { return 1000000000.0 * (F - I) }\nplastic { return F }\n").unwrap();
    let (l, why) = evaluate_loss(&law, &[], &obs);
    assert_eq!(l, FAILURE_SENTINEL);
    assert!(why.unwrap().contains("velocity explosion"));
}

#[test]
fn probe_examples() {
    let obs = jelly(LossMode::Chamfer);
    let fc = typecheck(crate::dsl::parse_law(&crate::dsl::catalog::catalog_sources()[0].1).unwrap()).unwrap();
    let r = probe_validity(&fc, &ParamVector::initial(&fc.ast), &obs);
    assert!(r.passed && r.warnings.is_empty(), "{r:?}");

    let bad = compile_law("elastic { return log(det(F) - 1.0) * I }\nplastic { return F }\n").unwrap();
    let r = probe_validity(&bad, &ParamVector { values: vec![] }, &obs);
    assert_eq!(r.failed_check, Some(ProbeCheck::Battery));
    assert!(r.message.unwrap().contains("identity"));

    let stiff = compile_law("elastic { return 1000000000.0 * (F - I) }\nplastic { return F }\n").unwrap();
    let r = probe_validity(&stiff, &ParamVector { values: vec![] }, &obs);
    assert_eq!(r.failed_check, Some(ProbeCheck::Probation));
    assert!(r.message.unwrap().contains("velocity explosion"));

    let prestressed = compile_law("elastic { return 10.0 * I }\nplastic { return F }\n").unwrap();
    let r = probe_validity(&prestressed, &ParamVector { values: vec![] }, &obs);
    assert!(r.passed);
    assert_eq!(r.warnings.len(), 1);
}

#[test]
fn battery_has_positive_determinants() {
    let b = probe_battery();
    assert_eq!(b.len(), 13);
    assert!(b.iter().all(|(_, f)| f.determinant() > 0.0));
}

#[test]
fn zero_budget_returns_initial() {
    let obs = jelly(LossMode::Chamfer);
    let law = catalog("neo_hookean");
    let fit = optimize_params(&law, &obs, 0, &OptimizeOptions::default());
    let init = ParamVector::initial(&law.ast);
    assert_eq!(fit.theta_star, init);
    assert_eq!(fit.fitness, evaluate_loss(&law, init.as_slice(), &obs).0);
    assert_eq!(fit.feedback.loss_curve, vec![(0, fit.fitness)]);
}

#[test]
fn invalid_law_yields_failed_fit() {
    let obs = jelly(LossMode::Chamfer);
    let bad = compile_law("elastic { return log(det(F) - 1.0) * I }\nplastic { return F }\n").unwrap();
    let fit = optimize_params(&bad, &obs, 5, &OptimizeOptions::default());
    assert_eq!(fit.fitness, FAILURE_SENTINEL);
    assert!(fit.feedback.failure.is_some());
    assert!(fit.feedback.loss_curve.is_empty());
}

#[test]
fn short_fit_record_is_consistent() {
    let obs = jelly_full();
    let law = catalog("neo_hookean");
    let fit = optimize_params(&law, &obs, 25, &OptimizeOptions::default());
    let min = fit.feedback.loss_curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    assert_eq!(fit.fitness, min);
    assert!(fit.feedback.loss_curve.len() <= 20);
    for (_, th) in &fit.feedback.theta_trajectory {
        for (p, v) in law.ast.params.iter().zip(th) {
            assert!(p.lo <= *v && *v <= p.hi);
        }
    }
    assert!(fit.fitness < fit.feedback.loss_curve[0].1);
    let again = optimize_params(&law, &obs, 25, &OptimizeOptions::default());
    assert_eq!(again.theta_star, fit.theta_star);
    assert_eq!(again.fitness, fit.fitness);
}

#[test]
fn gradient_sign_matches_modulus_sweep() {
    let obs = jelly_full();
    let law = catalog("neo_hookean");
    let tf = ParamTransform::new(&law.ast);
    let u0 = tf.to_unit(&[2e3, 1e3]);
    let f = |u: &[f64]| evaluate_loss(&law, &tf.from_unit(u), &obs).0;
    let g = finite_diff_grad(f, &u0, 1e-3);
    let h = 0.01;
    let sweep: Vec<f64> = (-2..=2)
        .map(|k| {
            let mut u = u0.clone();
            u[0] += k as f64 * h;
            f(&u)
        })
        .collect();
    let secant = (sweep[4] - sweep[0]) / (4.0 * h);
    assert!(g.values[0].signum() == secant.signum(), "{} vs {secant}", g.values[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_symmetric_nonnegative(
        a in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..20),
        b in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..20),
    ) {
        let (a, b) = (pts(&a), pts(&b));
        let ab = chamfer_l2(&a, &b).unwrap();
        prop_assert_eq!(ab, chamfer_l2(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(chamfer_l2(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dssim_in_unit_range(s1 in 0u64..1000, s2 in 0u64..1000) {
        let (a, b) = (noise(s1, 16), noise(s2, 16));
        let d = dssim(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(dssim(&a, &a).unwrap(), 0.0);
    }
}
