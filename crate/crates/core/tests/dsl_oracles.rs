mod common;

use common::oracles::{self, M};
use lawforge_core::dsl::{catalog_law, typecheck, Evaluator, ParamVector, TypedLaw};
use lawforge_core::linalg::{svd3, Mat3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn law(name: &str) -> TypedLaw {
    typecheck(catalog_law(name).unwrap()).unwrap()
}

fn p(law: &TypedLaw, name: &str) -> f64 {
    law.ast.param(name).unwrap().init
}

#[test]
fn catalog_matches_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fs: Vec<M> = (0..100).map(|_| oracles::random_f(&mut rng)).collect();
    for name in ["fixed_corotated", "neo_hookean", "stvk_hencky", "von_mises", "drucker_prager", "identity_plastic"] {
        let law = law(name);
        let th = ParamVector::initial(&law.ast).values;
        let mut ev = Evaluator::new(&law);
        let mut worst = 0.0f64;
        for f in &fs {
            let fm = Mat3(*f);
            let (got, want) = match name {
                "fixed_corotated" => (ev.elastic(&fm, &th), oracles::fixed_corotated(f, p(&law, "mu"), p(&law, "lam"))),
                "neo_hookean" => (ev.elastic(&fm, &th), oracles::neo_hookean(f, p(&law, "mu"), p(&law, "lam"))),
                "stvk_hencky" => (ev.elastic(&fm, &th), oracles::stvk_hencky(f, p(&law, "mu"), p(&law, "lam"))),
                "von_mises" => (ev.plastic(&fm, &th), oracles::von_mises(f, p(&law, "mu"), p(&law, "yield"))),
                "drucker_prager" => (
                    ev.plastic(&fm, &th),
                    oracles::drucker_prager(f, p(&law, "mu"), p(&law, "lam"), p(&law, "alpha")),
                ),
                _ => (ev.plastic(&fm, &th), *f),
            };
            worst = worst.max(oracles::rel_err(&got.unwrap().0, &want));
        }
        assert!(worst <= 1e-9, "{name}: worst relative error {worst:e}");
    }
}

#[test]
fn svd_squares_match_eigenvalues_of_gram() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let f = oracles::random_f(&mut rng);
        let d = svd3(&Mat3(f)).unwrap();
        let (mut lam, _) = oracles::sym_eigen(&oracles::mul(&oracles::tr(&f), &f));
        lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for k in 0..3 {
            assert!((d.s[k] * d.s[k] - lam[k]).abs() < 1e-10 * lam[0]);
        }
    }
    // reflection: S^2 still matches, sign lands on the smallest value
    let m = Mat3([[-2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    let d = svd3(&m).unwrap();
    let (mut lam, _) = oracles::sym_eigen(&oracles::mul(&oracles::tr(&m.0), &m.0));
    lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for k in 0..3 {
        assert!((d.s[k] * d.s[k] - lam[k]).abs() < 1e-12);
    }
    assert!(d.s[2] < 0.0 && d.s[0] > 0.0 && d.s[1] > 0.0);
    assert!((d.reconstruct() - m).frobenius_norm() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn fixed_corotated_is_objective(
        q in prop::array::uniform4(-1.0f64..1.0),
        g in prop::array::uniform4(-1.0f64..1.0),
        s in prop::array::uniform3(0.8f64..1.25),
        mu in 10.0f64..1e5,
        lam in 10.0f64..1e5,
    ) {
        prop_assume!(q.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        prop_assume!(g.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        let law = law("fixed_corotated");
        let qm = Mat3(oracles::rotation(q));
        let f = Mat3(oracles::rotation(g)) * Mat3::from_diagonal(&lawforge_core::linalg::Vec3(s));
        let mut ev = Evaluator::new(&law);
        let lhs = ev.elastic(&(qm * f), &[mu, lam]).unwrap();
        let rhs = qm * ev.elastic(&f, &[mu, lam]).unwrap() * qm.transpose();
        let scale = rhs.frobenius_norm().max(mu + lam);
        prop_assert!((lhs - rhs).frobenius_norm() <= 1e-8 * scale);
    }
}
