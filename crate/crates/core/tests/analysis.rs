mod common;

use common::*;
use nalgebra::DMatrix;
use pgh_core::analysis::{self, AssumptionCheck, AssumptionReport};
use pgh_core::norms::NormFamily;
use pgh_core::solver::{self, HomotopyParams};
use pgh_core::{Error, MeasurementOperator, Metric, Vector};
use rand::Rng;

fn op(a: DMatrix<f64>) -> MeasurementOperator {
    MeasurementOperator::new(a).unwrap()
}

/// Sparse-recovery instance: `b = A x0 + z` with `z` uniform on `(-w, w)`.
fn sparse_instance(seed: u64, m: usize, n: usize, k0: usize, w: f64) -> (MeasurementOperator, Vector, Vector) {
    let mut rng = rng(seed);
    let a = gaussian_matrix(&mut rng, m, n, 1.0 / (m as f64).sqrt());
    let mut x0 = Vector::zeros(n);
    for i in rand::seq::index::sample(&mut rng, n, k0) {
        x0[i] = 1.0 + rng.random_range(0.0..1.0);
    }
    let z = Vector::from_fn(m, |_, _| rng.random_range(-w..w));
    (op(a), x0, z)
}

fn report(seed: u64) -> AssumptionReport {
    let (a, x0, z) = sparse_instance(seed, 200, 60, 2, 0.005);
    let fam = NormFamily::unit_l1(60);
    let d = fam
        .dual_norm_value(&a.adjoint_apply(&z, &fam.metric()).unwrap())
        .unwrap();
    let check = AssumptionCheck {
        lambda_tgt: 4.0 * d,
        delta: 0.25,
        r: 2.0,
        gamma_inc: 2.0,
        seed,
        n_samples: 500,
    };
    analysis::check_assumption(&a, &fam.metric(), &fam, &x0, &z, &check).unwrap()
}

#[test]
fn gaussian_rip_estimates_are_near_one() {
    let mut rng = rng(301);
    let (m, n) = (2000, 100);
    let a = op(gaussian_matrix(&mut rng, m, n, 1.0 / (m as f64).sqrt()));
    let fam = NormFamily::unit_l1(n);
    let est = analysis::estimate_rip(&a, &fam.metric(), &fam, 5.0, 2000, 7).unwrap();
    assert!(est.rho_minus_hat >= 0.5 && est.rho_minus_hat <= est.rho_plus_hat);
    assert!(est.rho_plus_hat <= 1.5);
}

#[test]
fn rip_ladder_is_monotone_and_reproducible() {
    let mut rng = rng(302);
    for fam in [
        NormFamily::unit_l1(40),
        NormFamily::l12(4, 10).unwrap(),
        NormFamily::nuclear(5, 8).unwrap(),
    ] {
        let a = op(gaussian_matrix(&mut rng, 30, 40, 0.2));
        let metric = fam.metric();
        let levels = [1.0, 2.0, 3.5, 5.0];
        let est = analysis::estimate_rip_levels(&a, &metric, &fam, &levels, 200, 11).unwrap();
        for w in est.windows(2) {
            assert!(w[1].rho_minus_hat <= w[0].rho_minus_hat);
            assert!(w[1].rho_plus_hat >= w[0].rho_plus_hat);
        }
        let again = analysis::estimate_rip_levels(&a, &metric, &fam, &levels, 200, 11).unwrap();
        assert_eq!(est, again);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let threaded = pool.install(|| analysis::estimate_rip_levels(&a, &metric, &fam, &levels, 200, 11).unwrap());
        assert_eq!(est, threaded);
    }
}

#[test]
fn sampled_directions_are_sandwiched() {
    let mut rng = rng(303);
    for fam in [
        NormFamily::weighted_l1((0..30).map(|i| 0.5 + i as f64 / 20.0).collect()).unwrap(),
        NormFamily::l12(3, 10).unwrap(),
        NormFamily::nuclear(6, 5).unwrap(),
    ] {
        let a = op(gaussian_matrix(&mut rng, 20, 30, 0.3));
        let metric = fam.metric();
        let level = 3;
        let est = analysis::estimate_rip(&a, &metric, &fam, level as f64, 300, 5).unwrap();
        assert!(0.0 <= est.rho_minus_hat && est.rho_minus_hat <= est.rho_plus_hat);
        for i in 0..300 {
            let d = analysis::sample_direction(&fam, level, 5, i);
            assert!(fam.k_default(&d).unwrap() <= level);
            let ad = a.apply(&d).unwrap().norm_squared();
            let u2 = metric.inner(&d, &d).unwrap();
            assert!(est.rho_minus_hat * u2 <= ad * (1.0 + 1e-12));
            assert!(ad <= est.rho_plus_hat * u2 * (1.0 + 1e-12));
        }
    }
}

#[test]
fn report_arithmetic_recomputes() {
    let r = report(304);
    let gamma = (r.lambda_tgt * (1.0 + r.delta) + r.dual_noise) / (r.lambda_tgt * (1.0 - r.delta) - r.dual_noise);
    assert!((r.gamma - gamma).abs() <= 1e-12 * gamma);
    assert_eq!(r.c, 1.0);
    assert_eq!(r.k0, 2);
    let kt = 36.0 * r.r * r.c * r.k0 as f64 * (1.0 + r.gamma) * r.gamma_inc;
    assert!((r.k_tilde - kt).abs() <= 1e-12 * kt);
    assert!((r.level_high - 2.0 * kt).abs() <= 1e-12 * kt);
    assert!((r.level_low - r.c * r.k0 as f64 * (1.0 + r.gamma).powi(2)).abs() <= 1e-12 * r.level_low);
    let kappa = r.kappa.unwrap();
    assert!(kappa >= 1.0);
    assert!((kappa - r.rho_plus_high / r.rho_minus_high).abs() <= 1e-12 * kappa);
    assert_eq!(r.rate.unwrap(), 1.0 - 1.0 / (4.0 * r.gamma_inc * kappa));
    let root = r.rho_minus_high.sqrt() + (r.rho_plus_one * kappa).sqrt();
    let big_c =
        6.0 * r.gamma_inc * kappa * r.delta * r.c * r.k0 as f64 * (1.0 + r.gamma) * root * root / r.rho_minus_low;
    assert!((r.big_c.unwrap() - big_c).abs() <= 1e-12 * big_c);
    assert!(r.verdicts.noise_bound_ok);
    assert!(r.optimistic);
    assert!(r.level_high_sampled <= 60);
}

#[test]
fn noise_above_a_quarter_of_lambda_fails_the_noise_verdict() {
    let (a, x0, z) = sparse_instance(305, 100, 40, 2, 0.01);
    let fam = NormFamily::unit_l1(40);
    let d = fam
        .dual_norm_value(&a.adjoint_apply(&z, &fam.metric()).unwrap())
        .unwrap();
    let check = AssumptionCheck {
        lambda_tgt: 3.0 * d,
        delta: 0.25,
        r: 2.0,
        gamma_inc: 2.0,
        seed: 0,
        n_samples: 50,
    };
    let rep = analysis::check_assumption(&a, &fam.metric(), &fam, &x0, &z, &check).unwrap();
    assert!(!rep.verdicts.noise_bound_ok);
    assert!(!rep.verdicts.all());
}

#[test]
fn assumption_inputs_are_validated() {
    let (a, x0, z) = sparse_instance(306, 30, 20, 1, 0.01);
    let fam = NormFamily::unit_l1(20);
    let base = AssumptionCheck {
        lambda_tgt: 1.0,
        delta: 0.25,
        r: 2.0,
        gamma_inc: 2.0,
        seed: 0,
        n_samples: 10,
    };
    for bad in [
        AssumptionCheck { r: 1.0, ..base },
        AssumptionCheck { delta: 0.3, ..base },
        AssumptionCheck { delta: 0.0, ..base },
        AssumptionCheck {
            lambda_tgt: 0.0,
            ..base
        },
    ] {
        assert!(matches!(
            analysis::check_assumption(&a, &fam.metric(), &fam, &x0, &z, &bad),
            Err(Error::Contract(_))
        ));
    }
}

#[test]
fn rate_and_eta_condition_hand_values() {
    let r = report(307);
    let r2 = r.with_kappa_safety(2.0 / r.kappa.unwrap());
    assert!((r2.kappa.unwrap() - 2.0).abs() <= 1e-15);
    let eta = 0.6;
    let delta_prime = (1.0 + r.delta) * eta - 1.0;
    let b = analysis::iteration_bounds(&r2, delta_prime, eta, 1e-6, 2.0, 0.1).unwrap();
    assert!((b.rate - 0.9375).abs() <= 1e-15);
    assert!((b.eta_condition_lhs - eta).abs() <= 1e-15);
    assert!(b.eta_condition_ok);
    assert_eq!(b.n_stages, 5);
    let c = r2.big_c.unwrap();
    let log_inv = -(0.9375f64).ln();
    assert!((b.per_stage - (c / (r.delta * r.delta)).ln() / log_inv).abs() <= 1e-9 * b.per_stage.abs());
    assert!((b.final_stage - (c * 0.1 / 1e-12).ln() / log_inv).abs() <= 1e-9 * b.final_stage.abs());
    // default parameters violate the condition: (1.2 / 1.25) > 0.6
    let bad = analysis::iteration_bounds(&r2, 0.2, 0.6, 1e-6, 2.0, 0.1).unwrap();
    assert!(!bad.eta_condition_ok);
}

#[test]
fn safety_factor_scales_kappa_and_slows_the_rate() {
    let r = report(308);
    let s = r.with_kappa_safety(2.0);
    assert_eq!(s.kappa.unwrap(), 2.0 * r.kappa.unwrap());
    assert!(s.rate.unwrap() > r.rate.unwrap());
    assert!(s.big_c.unwrap() > r.big_c.unwrap());
}

#[test]
fn bounds_need_a_defined_rate() {
    let mut r = report(309);
    r.kappa = None;
    r.rate = None;
    r.big_c = None;
    assert!(matches!(
        analysis::iteration_bounds(&r, 0.2, 0.6, 1e-6, 2.0, 0.1),
        Err(Error::BoundUndefined(_))
    ));
}

#[test]
fn reference_for_identity_operator_is_soft_threshold() {
    let mut rng = rng(310);
    for _ in 0..20 {
        let b = gaussian_vector(&mut rng, 12);
        let lambda = rng.random_range(0.1..1.5);
        let p = problem(DMatrix::identity(12, 12), b.clone(), Metric::identity(12));
        let fam = NormFamily::unit_l1(12);
        let (val, x) = analysis::reference_optimum(&p, &fam, lambda, 1e-12 * lambda).unwrap();
        let soft = b.map(|v| v.signum() * (v.abs() - lambda).max(0.0));
        let closed = 0.5 * (&soft - &b).norm_squared() + lambda * soft.iter().map(|v| v.abs()).sum::<f64>();
        // separable with unit curvature: coordinate error is bounded by the stopping tolerance
        assert!((&x - &soft).amax() <= 1e-12 * lambda + 1e-14, "{}", (&x - &soft).amax());
        assert!((val - closed).abs() <= 1e-12 * (1.0 + closed));
    }
}

#[test]
fn reference_value_does_not_increase_with_tighter_tolerance() {
    let (a, x0, z) = sparse_instance(311, 40, 80, 4, 0.005);
    let b = a.apply(&x0).unwrap() + z;
    let p = pgh_core::LeastSquaresProblem::new(a, b, Metric::identity(80)).unwrap();
    let fam = NormFamily::unit_l1(80);
    let lambda = 0.02;
    let mut prev = f64::INFINITY;
    for tol in [1e-3, 1e-6, 1e-9, 1e-12 * lambda] {
        let (val, _) = analysis::reference_optimum(&p, &fam, lambda, tol).unwrap();
        assert!(val <= prev);
        prev = val;
    }
    let out = solver::homotopy(&p, &fam, &HomotopyParams::new(lambda, 1e-9)).unwrap();
    let last = out.trace.last().unwrap().objective;
    assert!(last >= prev - 1e-9 * (1.0 + prev.abs()));
}
