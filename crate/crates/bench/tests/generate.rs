use nalgebra::DMatrix;
use pgh_bench::config::CustomFiles;
use pgh_bench::io::{write_matrix, write_vector};
use pgh_bench::runner::prepare;
use pgh_bench::{default_lambda_tgt, gen_problem, BenchError, ExperimentConfig, NormChoice, ProblemKind};
use pgh_core::norms::NormFamily;
use pgh_core::{LeastSquaresProblem, MeasurementOperator, Metric, Vector};

fn small1(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        d1: Some(12),
        d2: Some(9),
        k0: 3,
        m: 150,
        ..ExperimentConfig::problem1_desk(seed, "unused")
    }
}

fn small2(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        d1: Some(4),
        d2: Some(30),
        k0: 5,
        m: 120,
        ..ExperimentConfig::problem2_desk(seed, "unused")
    }
}

#[test]
fn planted_structure_matches_k0() {
    for seed in 0..20 {
        let g = gen_problem(&small1(seed)).unwrap();
        let x0 = g.x0.as_ref().unwrap();
        assert_eq!(g.family.k_of(x0, 1e-10).unwrap(), 3, "seed {seed}");
        let sv = DMatrix::from_column_slice(12, 9, x0.as_slice()).singular_values();
        assert!((sv.max() - 1.0).abs() < 1e-12);

        let g = gen_problem(&small2(seed)).unwrap();
        let x0 = g.x0.as_ref().unwrap();
        assert_eq!(g.family.k_of(x0, 0.0).unwrap(), 5, "seed {seed}");
    }
}

#[test]
fn operators_and_noise_have_the_configured_law() {
    let cfg = small2(3);
    let g = gen_problem(&cfg).unwrap();
    let s = 1.0 / (cfg.m as f64).sqrt();
    assert!(g.problem.op().matrix().iter().all(|&a| a == s || a == -s));
    let z = g.z.as_ref().unwrap();
    assert!(z.iter().all(|v| v.abs() < cfg.noise));
    let b = g.problem.op().apply(g.x0.as_ref().unwrap()).unwrap() + z;
    assert_eq!(&b, g.problem.b());

    let cfg = small1(3);
    let g = gen_problem(&cfg).unwrap();
    let a = g.problem.op().matrix();
    let var = a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
    let want = 1.0 / cfg.m as f64;
    assert!((var / want - 1.0).abs() < 0.05, "variance {var} vs {want}");

    let mut quiet = small1(3);
    quiet.noise = 0.0;
    assert!(gen_problem(&quiet).unwrap().z.unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn generation_is_deterministic_in_the_seed() {
    for cfg in [small1(11), small2(11)] {
        let a = gen_problem(&cfg).unwrap();
        let b = gen_problem(&cfg).unwrap();
        assert_eq!(a.problem.op().matrix(), b.problem.op().matrix());
        assert_eq!(a.problem.b(), b.problem.b());
        assert_eq!(a.x0, b.x0);
        let mut other = cfg.clone();
        other.seed = 12;
        let c = gen_problem(&other).unwrap();
        assert_ne!(a.problem.b(), c.problem.b());
    }
}

#[test]
fn default_target_examples() {
    let one = |z: f64| {
        let problem = LeastSquaresProblem::new(
            MeasurementOperator::identity(1),
            Vector::from_vec(vec![3.0 + z]),
            Metric::identity(1),
        )
        .unwrap();
        default_lambda_tgt(&problem, &NormFamily::unit_l1(1), &Vector::from_vec(vec![z])).unwrap()
    };
    let d = one(0.5);
    assert_eq!(d.lambda_tgt, 2.0);
    assert_eq!(d.lambda0, 3.5);
    assert!(!d.degenerate);
    let d = one(0.0);
    assert_eq!(d.lambda_tgt, 0.0);
    assert!(d.degenerate);

    let mut quiet = small2(1);
    quiet.noise = 0.0;
    assert!(matches!(prepare(&quiet), Err(BenchError::Config(_))));
    quiet.solver.lambda_tgt = Some(0.01);
    assert_eq!(prepare(&quiet).unwrap().lambda_tgt, 0.01);
}

#[test]
fn default_target_lies_below_lambda0_on_the_presets() {
    for cfg in [small1(5), small2(5), ExperimentConfig::problem2_desk(1, "unused")] {
        let p = prepare(&cfg).unwrap();
        let d = p.defaults.unwrap();
        assert_eq!(p.lambda_tgt, d.lambda_tgt);
        assert!((p.lambda0 - d.lambda0).abs() <= 1e-12 * d.lambda0);
        assert!(0.0 < p.lambda_tgt && p.lambda_tgt < p.lambda0);
    }
}

#[test]
fn custom_problems_read_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, -1.0]);
    let b = Vector::from_vec(vec![1.0, 2.0]);
    let w = Vector::from_vec(vec![1.0, 2.0, 0.5]);
    write_matrix(&dir.path().join("a.csv"), &a).unwrap();
    write_vector(&dir.path().join("b.csv"), &b).unwrap();
    write_vector(&dir.path().join("w.csv"), &w).unwrap();
    let mut cfg = ExperimentConfig::problem1_desk(0, dir.path());
    cfg.kind = ProblemKind::Custom;
    cfg.d1 = None;
    cfg.d2 = None;
    cfg.norm = Some(NormChoice::L1);
    cfg.algorithms = vec![pgh_bench::Algorithm::Homotopy];
    cfg.custom = Some(CustomFiles {
        a: dir.path().join("a.csv"),
        b: dir.path().join("b.csv"),
        x0: None,
        z: None,
        weights: Some(dir.path().join("w.csv")),
    });
    let g = gen_problem(&cfg).unwrap();
    assert_eq!(g.problem.op().matrix(), &a);
    assert_eq!(g.problem.metric().diag(), &[1.0, 4.0, 0.25]);
    assert!(g.x0.is_none());
    assert!(matches!(prepare(&cfg), Err(BenchError::Config(_))));

    cfg.custom.as_mut().unwrap().b = dir.path().join("w.csv");
    assert!(matches!(gen_problem(&cfg), Err(BenchError::Config(_))));
}
