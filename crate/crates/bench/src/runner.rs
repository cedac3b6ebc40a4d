use std::fs;
use std::path::{Path, PathBuf};

use pgh_core::analysis::{self, AssumptionCheck, AssumptionReport, IterationBounds};
use pgh_core::solver::{self, SolveOutput, TraceRecord};
use pgh_core::{Error, Vector};
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{BenchError, Result};
use crate::generate::{self, Generated, LambdaDefaults};

/// Version of the trace CSV columns and the summary layout.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 11] = [
    "stage",
    "iter_stage",
    "iter_global",
    "lambda",
    "objective",
    "gap",
    "stop_quantity",
    "K",
    "M",
    "recovery_err",
    "elapsed_ms",
];

/// Gap thresholds whose first-hit iteration is reported in the summary.
pub const GAP_MILESTONES: [f64; 3] = [1e-6, 1e-8, 1e-10];

/// One CSV row. `gap` is `f(x) + lambda_tgt ||x|| - phi*` regardless of the
/// stage's own `lambda`; `recovery_err` is `||x - x0|| / ||x0||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: usize,
    pub iter_stage: usize,
    pub iter_global: usize,
    pub lambda: f64,
    pub objective: f64,
    pub gap: f64,
    pub stop_quantity: Option<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub recovery_err: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHit {
    pub threshold: f64,
    pub iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: usize,
    pub lambda: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub csv: PathBuf,
    pub status: RunStatus,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_gap: f64,
    pub final_recovery_err: Option<f64>,
    pub final_k: usize,
    /// Largest `K` over the iterates of stage 2 onward (`None` for single-stage runs).
    pub max_k_after_first_stage: Option<usize>,
    pub gap_hits: Vec<GapHit>,
    pub stages: Vec<StageSummary>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub dim: usize,
    pub measurements: usize,
    pub lambda0: f64,
    pub lambda_tgt: f64,
    pub lambda_defaults: Option<LambdaDefaults>,
    pub phi_star: f64,
    pub assumption: Option<AssumptionReport>,
    pub assumption_error: Option<String>,
    pub bounds: Option<IterationBounds>,
    /// Bounds recomputed with `kappa` inflated by `check.kappa_safety`.
    pub bounds_safe: Option<IterationBounds>,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl BenchSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BenchError::config(format!("summary: {e}")))
    }

    pub fn algorithm(&self, alg: Algorithm) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm == alg)
    }
}

/// Everything `check` reports for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutput {
    pub lambda0: f64,
    pub lambda_tgt: f64,
    pub report: AssumptionReport,
    pub bounds: Option<IterationBounds>,
    pub bounds_safe: Option<IterationBounds>,
    pub bounds_error: Option<String>,
}

/// An instance together with the regularization levels it is solved at.
pub struct Prepared {
    pub gen: Generated,
    pub lambda0: f64,
    pub lambda_tgt: f64,
    pub defaults: Option<LambdaDefaults>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let gen = generate::gen_problem(cfg)?;
    let defaults = match &gen.z {
        Some(z) => Some(generate::default_lambda_tgt(&gen.problem, &gen.family, z)?),
        None => None,
    };
    let lambda_tgt = match (cfg.solver.lambda_tgt, defaults) {
        (Some(l), _) => l,
        (None, Some(d)) if !d.degenerate => d.lambda_tgt,
        (None, Some(_)) => {
            return Err(BenchError::config(
                "noise is zero, so lambda_tgt must be given explicitly",
            ))
        }
        (None, None) => return Err(BenchError::config("lambda_tgt must be given when the noise is unknown")),
    };
    let lambda0 = solver::lambda_max(&gen.problem, &gen.family)?;
    Ok(Prepared {
        gen,
        lambda0,
        lambda_tgt,
        defaults,
    })
}

/// The assumption report and bounds, if the truth and noise are known.
pub fn assumption(cfg: &ExperimentConfig, prep: &Prepared) -> Option<Result<CheckOutput>> {
    let (x0, z) = (prep.gen.x0.as_ref()?, prep.gen.z.as_ref()?);
    Some(check_with(cfg, prep, x0, z))
}

fn check_with(cfg: &ExperimentConfig, prep: &Prepared, x0: &Vector, z: &Vector) -> Result<CheckOutput> {
    let fam = &prep.gen.family;
    let check = AssumptionCheck {
        lambda_tgt: prep.lambda_tgt,
        delta: cfg.check_delta(),
        r: cfg.check.r.unwrap_or(2.0 * fam.tangent_ratio_constant()),
        gamma_inc: cfg.solver.gamma_inc,
        seed: cfg.seed,
        n_samples: cfg.check.rip_samples,
    };
    let problem = &prep.gen.problem;
    let report = analysis::check_assumption(problem.op(), problem.metric(), fam, x0, z, &check)?;
    let s = &cfg.solver;
    let bounds_for = |r: &AssumptionReport| {
        analysis::iteration_bounds(r, s.delta_prime, s.eta, s.epsilon, prep.lambda0, prep.lambda_tgt)
    };
    let (bounds, bounds_safe, bounds_error) = match (
        bounds_for(&report),
        bounds_for(&report.with_kappa_safety(cfg.check.kappa_safety)),
    ) {
        (Ok(b), Ok(bs)) => (Some(b), Some(bs), None),
        (Err(e), _) | (_, Err(e)) => (None, None, Some(e.to_string())),
    };
    Ok(CheckOutput {
        lambda0: prep.lambda0,
        lambda_tgt: prep.lambda_tgt,
        report,
        bounds,
        bounds_safe,
        bounds_error,
    })
}

/// Run every configured algorithm, write one trace CSV per algorithm and
/// `summary.json` into `cfg.output_dir`.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchSummary> {
    let prep = prepare(cfg)?;
    let problem = &prep.gen.problem;
    let fam = &prep.gen.family;
    let (phi_star, _) = analysis::reference_optimum(
        problem,
        fam,
        prep.lambda_tgt,
        cfg.reference_tol_factor * prep.lambda_tgt,
    )?;
    let (assumption, assumption_error, bounds, bounds_safe) = match assumption(cfg, &prep) {
        Some(Ok(c)) => (Some(c.report), c.bounds_error, c.bounds, c.bounds_safe),
        Some(Err(BenchError::Core(e @ Error::BoundUndefined(_)))) => (None, Some(e.to_string()), None, None),
        Some(Err(e)) => return Err(e),
        None => (None, None, None, None),
    };

    fs::create_dir_all(&cfg.output_dir).map_err(|e| BenchError::io(&cfg.output_dir, e))?;
    let runs: Vec<Result<(Vec<TraceRow>, RunStatus)>> = if cfg.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .algorithms
                .iter()
                .map(|alg| scope.spawn(|| run_algorithm(cfg, &prep, *alg, phi_star)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver thread panicked"))
                .collect()
        })
    } else {
        cfg.algorithms
            .iter()
            .map(|alg| run_algorithm(cfg, &prep, *alg, phi_star))
            .collect()
    };

    let mut algorithms = Vec::with_capacity(runs.len());
    for (alg, run) in cfg.algorithms.iter().zip(runs) {
        let (rows, status) = run?;
        let file = PathBuf::from(format!("{}.csv", alg.name()));
        write_trace(&cfg.output_dir.join(&file), &rows)?;
        algorithms.push(summarize(*alg, file, status, &rows));
    }
    let summary = BenchSummary {
        schema_version: TRACE_SCHEMA_VERSION,
        config: cfg.clone(),
        dim: problem.dim(),
        measurements: problem.op().rows(),
        lambda0: prep.lambda0,
        lambda_tgt: prep.lambda_tgt,
        lambda_defaults: prep.defaults,
        phi_star,
        assumption,
        assumption_error,
        bounds,
        bounds_safe,
        algorithms,
    };
    let path = cfg.output_dir.join("summary.json");
    fs::write(&path, summary.to_json()).map_err(|e| BenchError::io(&path, e))?;
    Ok(summary)
}

/// Solve one instance with one algorithm and write `<alg>.csv` into
/// `cfg.output_dir`. The assumption check is skipped.
pub fn run_single(cfg: &ExperimentConfig, alg: Algorithm) -> Result<AlgorithmSummary> {
    let prep = prepare(cfg)?;
    let (phi_star, _) = analysis::reference_optimum(
        &prep.gen.problem,
        &prep.gen.family,
        prep.lambda_tgt,
        cfg.reference_tol_factor * prep.lambda_tgt,
    )?;
    let (rows, status) = run_algorithm(cfg, &prep, alg, phi_star)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| BenchError::io(&cfg.output_dir, e))?;
    let file = PathBuf::from(format!("{}.csv", alg.name()));
    write_trace(&cfg.output_dir.join(&file), &rows)?;
    Ok(summarize(alg, file, status, &rows))
}

/// Run one algorithm and convert its trace into rows. Hitting an iteration
/// cap is reported through the status, not as an error.
pub fn run_algorithm(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    alg: Algorithm,
    phi_star: f64,
) -> Result<(Vec<TraceRow>, RunStatus)> {
    let problem = &prep.gen.problem;
    let fam = &prep.gen.family;
    let lambda_tgt = prep.lambda_tgt;
    let params = cfg.solver.params(lambda_tgt);
    let x0 = prep.gen.x0.as_ref();
    let x0_norm = x0.map(|x| x.norm());
    let mut rows = Vec::new();
    let mut observe = |rec: &TraceRecord, x: &Vector| {
        rows.push(row(rec, x, lambda_tgt, phi_star, x0, x0_norm));
    };
    let eps = params.epsilon;
    let out: pgh_core::Result<SolveOutput> = match alg {
        Algorithm::Homotopy => solver::homotopy_with(problem, fam, &params, &mut observe),
        Algorithm::Pg => solver::baseline_pg_with(problem, fam, lambda_tgt, eps, &params, &mut observe),
        Algorithm::Apg => solver::baseline_apg_with(
            problem,
            fam,
            lambda_tgt,
            eps,
            &params,
            cfg.solver.apg_restart,
            &mut observe,
        ),
        Algorithm::Svp => {
            let rank = cfg.svp.rank.unwrap_or(cfg.k0.max(1));
            solver::baseline_svp_with(problem, fam, rank, cfg.svp.step, cfg.svp.iters, &mut observe)
        }
    };
    let status = match out {
        Ok(_) => RunStatus::Converged,
        Err(Error::IterationLimit { .. }) => RunStatus::IterationLimit,
        Err(e) => return Err(e.into()),
    };
    Ok((rows, status))
}

fn row(
    rec: &TraceRecord,
    x: &Vector,
    lambda_tgt: f64,
    phi_star: f64,
    x0: Option<&Vector>,
    x0_norm: Option<f64>,
) -> TraceRow {
    let recovery_err = match (x0, x0_norm) {
        (Some(x0), Some(n)) if n > 0.0 => Some((x - x0).norm() / n),
        (Some(x0), _) => Some((x - x0).norm()),
        _ => None,
    };
    TraceRow {
        stage: rec.stage,
        iter_stage: rec.iter_stage,
        iter_global: rec.iter_global,
        lambda: rec.lambda,
        objective: rec.objective,
        gap: rec.loss + lambda_tgt * rec.norm - phi_star,
        stop_quantity: rec.stop_quantity,
        k: rec.k,
        m: rec.m,
        recovery_err,
        elapsed_ms: rec.elapsed_ms,
    }
}

fn summarize(alg: Algorithm, csv: PathBuf, status: RunStatus, rows: &[TraceRow]) -> AlgorithmSummary {
    let last = rows.last().expect("every trace has its initial row");
    let mut stages: Vec<StageSummary> = Vec::new();
    for r in rows.iter().skip(1) {
        match stages.last_mut() {
            Some(s) if s.stage == r.stage => s.iterations += 1,
            _ => stages.push(StageSummary {
                stage: r.stage,
                lambda: r.lambda,
                iterations: 1,
            }),
        }
    }
    let later: Vec<usize> = rows.iter().filter(|r| r.stage >= 2).map(|r| r.k).collect();
    AlgorithmSummary {
        algorithm: alg,
        csv,
        status,
        iterations: rows.len() - 1,
        final_objective: last.objective,
        final_gap: last.gap,
        final_recovery_err: last.recovery_err,
        final_k: last.k,
        max_k_after_first_stage: later.iter().max().copied(),
        gap_hits: GAP_MILESTONES
            .iter()
            .map(|&t| GapHit {
                threshold: t,
                iteration: first_gap_below(rows, t),
            })
            .collect(),
        stages,
        elapsed_ms: last.elapsed_ms,
    }
}

/// Global iteration of the first row with `gap <= threshold`.
pub fn first_gap_below(rows: &[TraceRow], threshold: f64) -> Option<usize> {
    rows.iter().find(|r| r.gap <= threshold).map(|r| r.iter_global)
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    if rows.is_empty() {
        w.write_record(TRACE_COLUMNS).map_err(|e| csv_io(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_io(path, e))?.clone();
    if headers.iter().ne(TRACE_COLUMNS.iter().copied()) {
        return Err(BenchError::parse(
            path,
            1,
            "header",
            format!("expected columns {}", TRACE_COLUMNS.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<TraceRow>() {
        match rec {
            Ok(r) => rows.push(r),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                let column = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err
                        .field()
                        .and_then(|i| headers.get(i as usize))
                        .unwrap_or("?")
                        .to_string(),
                    _ => "?".to_string(),
                };
                return Err(BenchError::parse(path, line, column, e.to_string()));
            }
        }
    }
    Ok(rows)
}

fn csv_io(path: &Path, e: csv::Error) -> BenchError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => BenchError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        let line = e.position().map_or(0, |p| p.line() as usize);
        BenchError::parse(path, line, "?", e.to_string())
    }
}
