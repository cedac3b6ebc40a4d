use nalgebra::DMatrix;
use pgh_bench::config::{CheckConfig, SolverConfig};
use pgh_bench::io::{read_matrix, read_vector, write_matrix, write_vector};
use pgh_bench::{Algorithm, BenchError, ExperimentConfig, NormChoice, ProblemKind};
use pgh_core::Vector;

#[test]
fn presets_validate() {
    for cfg in [
        ExperimentConfig::problem1_desk(1, "out"),
        ExperimentConfig::problem2_desk(1, "out"),
        ExperimentConfig::problem1_full(1, "out"),
        ExperimentConfig::problem2_full(1, "out"),
    ] {
        cfg.validate().unwrap();
    }
    let p1 = ExperimentConfig::problem1_desk(7, "out");
    assert_eq!((p1.d1, p1.d2, p1.k0, p1.m), (Some(60), Some(60), 3, 2500));
    assert_eq!(p1.norm_choice().unwrap(), NormChoice::Nuclear);
    let p2 = ExperimentConfig::problem2_desk(7, "out");
    assert_eq!((p2.d1, p2.d2, p2.k0, p2.m), (Some(10), Some(200), 10, 800));
    assert_eq!(p2.norm_choice().unwrap(), NormChoice::L12);
}

#[test]
fn config_json_round_trip() {
    let mut cfg = ExperimentConfig::problem2_desk(42, "some/dir");
    cfg.solver.lambda_tgt = Some(0.1234567890123);
    cfg.check.r = Some(3.5);
    cfg.parallel = true;
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = ExperimentConfig::from_json(
        r#"{"kind":"problem1","d1":8,"d2":6,"k0":2,"m":100,"noise":0.01,"seed":3,
            "algorithms":["homotopy","pg"],"output_dir":"o"}"#,
    )
    .unwrap();
    assert_eq!(cfg.solver, SolverConfig::default());
    assert_eq!(cfg.check, CheckConfig::default());
    assert_eq!(cfg.algorithms, vec![Algorithm::Homotopy, Algorithm::Pg]);
    assert_eq!(cfg.solver.eta, 0.6);
    assert_eq!(cfg.solver.delta_prime, 0.2);
    assert_eq!(cfg.solver.l_min, 1e-6);
    assert!((cfg.check_delta() - 0.25).abs() < 1e-15);
}

#[test]
fn unknown_keys_are_rejected() {
    let cfg = ExperimentConfig::problem1_desk(1, "out");
    let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    v["learning_rate"] = serde_json::json!(0.1);
    let err = ExperimentConfig::from_json(&v.to_string()).unwrap_err();
    assert!(matches!(err, BenchError::Config(_)));
    assert_eq!(err.exit_code(), 2);

    let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    v["solver"]["etaa"] = serde_json::json!(0.5);
    assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
}

#[test]
fn invalid_values_are_rejected() {
    let base = ExperimentConfig::problem1_desk(1, "out");
    let cases: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
        Box::new(|c| c.algorithms.clear()),
        Box::new(|c| c.k0 = 0),
        Box::new(|c| c.k0 = 61),
        Box::new(|c| c.m = 0),
        Box::new(|c| c.noise = -1.0),
        Box::new(|c| c.solver.eta = 1.0),
        Box::new(|c| c.solver.lambda_tgt = Some(0.0)),
        Box::new(|c| c.solver.epsilon = 0.0),
        Box::new(|c| c.check.kappa_safety = 0.5),
        Box::new(|c| c.check.r = Some(1.0)),
        Box::new(|c| c.check.delta = Some(0.3)),
        Box::new(|c| c.norm = Some(NormChoice::L1)),
        Box::new(|c| c.kind = ProblemKind::Custom),
        Box::new(|c| c.d2 = None),
    ];
    for (i, mutate) in cases.iter().enumerate() {
        let mut cfg = base.clone();
        mutate(&mut cfg);
        let err = cfg.validate().expect_err(&format!("case {i} should fail"));
        assert_eq!(err.exit_code(), 2, "case {i}: {err}");
    }
}

#[test]
fn matrix_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 0.1) * (j as f64 - 1.3) / 7.0);
    let path = dir.path().join("m.csv");
    write_matrix(&path, &m).unwrap();
    assert_eq!(read_matrix(&path).unwrap(), m);

    let v = Vector::from_vec(vec![1.5, -2.0, 1e-300, 3.0e10]);
    let vp = dir.path().join("v.csv");
    write_vector(&vp, &v).unwrap();
    assert_eq!(read_vector(&vp).unwrap(), v);

    let row = dir.path().join("row.csv");
    std::fs::write(&row, "1,3\n1,2,3\n").unwrap();
    assert_eq!(read_vector(&row).unwrap(), Vector::from_vec(vec![1.0, 2.0, 3.0]));
}

#[test]
fn malformed_matrix_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "2,2\n1,2\n3,oops\n").unwrap();
    match read_matrix(&path).unwrap_err() {
        BenchError::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (3, "2")),
        e => panic!("unexpected {e}"),
    }
    std::fs::write(&path, "2,2\n1,2\n").unwrap();
    let err = read_matrix(&path).unwrap_err();
    assert!(matches!(err, BenchError::Parse { .. }));
    assert_eq!(err.exit_code(), 4);
    std::fs::write(&path, "2,2\n1,2\n3\n").unwrap();
    assert!(matches!(
        read_matrix(&path).unwrap_err(),
        BenchError::Parse { row: 3, .. }
    ));
    std::fs::write(&path, "x,2\n").unwrap();
    assert!(matches!(
        read_matrix(&path).unwrap_err(),
        BenchError::Parse { row: 1, .. }
    ));
    let missing = read_matrix(&dir.path().join("nope.csv")).unwrap_err();
    assert!(matches!(missing, BenchError::Io { .. }));
    assert_eq!(missing.exit_code(), 4);
}
