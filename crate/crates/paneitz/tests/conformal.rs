use std::f64::consts::PI;
use std::sync::Arc;

use paneitz::conformal::{
    conformal_q, conformal_q_nodal, conformal_r, induced_metric, maxprinciple_path, quotient,
    total_q,
};
use paneitz::paneitz::{assemble, conformal_operator};
use paneitz::spectral::build_discretization;
use paneitz::{Discretization, Error, Field, ModelManifold, PaneitzOperator, Symmetry};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s5_op(modes: usize) -> PaneitzOperator {
    let d = build_discretization(
        &ModelManifold::sphere(5).unwrap(),
        Symmetry::ZonalOnly,
        modes,
    )
    .unwrap();
    assemble(&d).unwrap()
}

fn product_op(modes: usize) -> PaneitzOperator {
    let d = build_discretization(
        &ModelManifold::product(5, 2.0 * PI).unwrap(),
        Symmetry::CircleOnly,
        modes,
    )
    .unwrap();
    assemble(&d).unwrap()
}

/// 1 + Σ a_k cos(k s + φ_k) with Σ|a_k| < 1/2, returned with its closed form.
fn random_trig(rng: &mut ChaCha8Rng) -> Vec<(f64, f64, f64)> {
    (1..5)
        .map(|k| {
            (
                k as f64,
                rng.random_range(-0.12..0.12),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect()
}

fn eval_trig(terms: &[(f64, f64, f64)], s: f64) -> f64 {
    1.0 + terms
        .iter()
        .map(|(k, a, ph)| a * (k * s + ph).cos())
        .sum::<f64>()
}

fn trig_field(d: &Arc<Discretization>, terms: &[(f64, f64, f64)]) -> Field {
    let t = terms.to_vec();
    Field::from_fn(d, move |x| eval_trig(&t, x[0])).unwrap()
}

#[test]
fn q_examples() {
    let p = s5_op(16);
    let one = Field::constant(p.disc(), 1.0);
    let q = conformal_q(&p, &one).unwrap();
    assert!(
        (q.min_nodal() - 105.0 / 8.0).abs() < 1e-11 && (q.max_nodal() - 105.0 / 8.0).abs() < 1e-11
    );
    let c = 1.3f64;
    let qc = conformal_q(&p, &one.scale(c)).unwrap();
    assert!((qc.max_nodal() - c.powf(-8.0) * 105.0 / 8.0).abs() < 1e-11);
    assert!(matches!(
        conformal_q(&p, &one.scale(-1.0)),
        Err(Error::NonPositiveFactor(_))
    ));
}

#[test]
fn r_examples() {
    let p = product_op(32);
    let one = Field::constant(p.disc(), 1.0);
    let r = conformal_r(&one).unwrap();
    assert!((r.max_nodal() - 12.0).abs() < 1e-11 && (r.min_nodal() - 12.0).abs() < 1e-11);
    let c = 0.8f64;
    let rc = conformal_r(&one.scale(c)).unwrap();
    assert!((rc.max_nodal() - c.powf(-4.0) * 12.0).abs() < 1e-10);
    let u = Field::from_fn(p.disc(), |x| 1.0 + 0.2 * x[0].cos()).unwrap();
    assert!(conformal_r(&u).unwrap().min_nodal() > 0.0);
}

/// R of u^{4/(n-4)} g with u', u'' by central differences of the closed form.
fn r_by_differences(terms: &[(f64, f64, f64)], s: f64) -> f64 {
    let n = 5.0;
    let h = 1e-3;
    let (um, u0, up) = (
        eval_trig(terms, s - h),
        eval_trig(terms, s),
        eval_trig(terms, s + h),
    );
    let (um2, up2) = (eval_trig(terms, s - 2.0 * h), eval_trig(terms, s + 2.0 * h));
    let d1 = (um2 - 8.0 * um + 8.0 * up - up2) / (12.0 * h);
    let d2 = (-um2 + 16.0 * um - 30.0 * u0 + 16.0 * up - up2) / (12.0 * h * h);
    let a = 4.0 * (n - 1.0) / (n - 4.0);
    let b = 8.0 * (n - 1.0) / ((n - 4.0) * (n - 4.0));
    u0.powf(-n / (n - 4.0)) * (-a * d2 - b * d1 * d1 / u0 + 12.0 * u0)
}

#[test]
fn r_matches_finite_differences() {
    let p = product_op(48);
    let d = p.disc();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let terms = random_trig(&mut rng);
        let u = trig_field(d, &terms);
        let r = paneitz::conformal::conformal_r_nodal(&u).unwrap();
        let mut c = [0.0];
        for (i, &ri) in r.iter().enumerate() {
            d.node_coords(i, &mut c);
            let want = r_by_differences(&terms, c[0]);
            assert!(
                (ri - want).abs() < 1e-6 * want.abs().max(1.0),
                "{ri} vs {want}"
            );
        }
    }
}

#[test]
fn quotient_examples() {
    let p = s5_op(16);
    let one = Field::constant(p.disc(), 1.0);
    let q = quotient(&p, &one).unwrap();
    assert!((q.mu - 105.0 / 16.0).abs() < 1e-11);
    let vol = PI.powi(3);
    assert!((q.quotient - 105.0 / 16.0 * vol * vol.powf(-0.2)).abs() < 1e-10 * q.quotient);
    assert!((q.quotient - q.numerator / q.denominator_volume.powf(0.2)).abs() < 1e-12 * q.quotient);
    assert!(matches!(
        quotient(&p, &Field::zero(p.disc())),
        Err(Error::ZeroField)
    ));
}

#[test]
fn quotient_conformal_invariance() {
    let p = product_op(64);
    let d = p.disc().clone();
    let u = Field::from_fn(&d, |x| 1.0 + 0.25 * x[0].cos()).unwrap();
    let phi = Field::from_fn(&d, |x| 1.0 + 0.3 * (2.0 * x[0]).sin()).unwrap();
    let ph = conformal_operator(&p, &u).unwrap();
    let a = quotient(&p, &u.mul(&phi).unwrap()).unwrap().quotient;
    let b = quotient(&ph, &phi).unwrap().quotient;
    assert!((a - b).abs() < 1e-9 * a);
}

#[test]
fn q_through_conformal_operator() {
    let p = product_op(64);
    let d = p.disc().clone();
    let u = Field::from_fn(&d, |x| 1.0 + 0.15 * x[0].cos() - 0.05 * (3.0 * x[0]).sin()).unwrap();
    let ph = conformal_operator(&p, &u).unwrap();
    let direct = conformal_q_nodal(&p, &u).unwrap();
    let via = conformal_q_nodal(&ph, &Field::constant(&d, 1.0)).unwrap();
    let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in direct.iter().zip(&via) {
        assert!((a - b).abs() < 1e-9 * scale, "{:e}", (a - b).abs() / scale);
    }
}

#[test]
fn total_q_identities() {
    for p in [s5_op(24), product_op(48)] {
        let u = Field::from_fn(p.disc(), |x| 1.1 + 0.2 * x[0].cos()).unwrap();
        let t = total_q(&p, &u).unwrap();
        let q = quotient(&p, &u).unwrap();
        assert!((t.total - 2.0 * q.quotient).abs() < 1e-12 * t.total);
        assert!((t.mean - 2.0 * q.mu).abs() < 1e-12 * t.mean);
    }
    let p = s5_op(16);
    let t = total_q(&p, &Field::constant(p.disc(), 1.0)).unwrap();
    let want = PI.powf(-0.6) * 105.0 / 8.0 * PI.powi(3);
    assert!((t.total - want).abs() < 1e-11 * want);
}

#[test]
fn path_examples() {
    let p = product_op(48);
    let d = p.disc().clone();
    let r = maxprinciple_path(&p, &Field::constant(&d, 1.0), 11).unwrap();
    assert_eq!(r.first_failure, None);
    assert_eq!(r.entries.len(), 11);
    assert!(r.q_bound_label.contains("lower bound"));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let g = trig_field(&d, &random_trig(&mut rng));
        let w = g.mul(&g).unwrap();
        let u = p.solve(&w).unwrap();
        let r = maxprinciple_path(&p, &u, 21).unwrap();
        assert_eq!(r.first_failure, None);
        for e in &r.entries {
            assert!(
                e.q_min.unwrap() >= e.q_lower_bound_min - 1e-9 * e.q_lower_bound_min.abs().max(1.0)
            );
        }
    }

    let bad = Field::from_fn(&d, |x| 0.2 + x[0].cos()).unwrap();
    assert!(matches!(
        maxprinciple_path(&p, &bad, 11),
        Err(Error::Precondition(_))
    ));
    let torus = ModelManifold::cubic_torus(5, 1.0).unwrap();
    let dt = build_discretization(&torus, Symmetry::FullTorusFourier, 8).unwrap();
    let pt = assemble(&dt).unwrap();
    assert!(maxprinciple_path(&pt, &Field::constant(&dt, 1.0), 3).is_err());
}

#[test]
fn solutions_with_nonnegative_source_induce_admissible_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for p in [s5_op(48), product_op(48)] {
        for _ in 0..20 {
            let g = trig_field(p.disc(), &random_trig(&mut rng));
            let u = p.solve(&g.mul(&g).unwrap()).unwrap();
            let m = induced_metric(&p, &u).unwrap();
            assert!(m.admissible, "{m:?}");
            assert!(m.min_u > 0.0 && m.r_min > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn quotient_scale_invariant(c in 0.01..100.0f64, seed in any::<u64>()) {
        let p = product_op(32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = trig_field(p.disc(), &random_trig(&mut rng));
        let a = quotient(&p, &u).unwrap().quotient;
        let b = quotient(&p, &u.scale(c)).unwrap().quotient;
        prop_assert!((a - b).abs() < 1e-11 * a);
    }
}
