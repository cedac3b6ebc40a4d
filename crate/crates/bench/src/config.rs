use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pgh_core::analysis::{self, DEFAULT_RIP_SAMPLES, REFERENCE_TOL_FACTOR};
use pgh_core::HomotopyParams;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Low-rank matrix sensing with Gaussian measurements.
    Problem1,
    /// Column-sparse matrix with Rademacher measurements.
    Problem2,
    /// Operator, observations and optional truth read from CSV files.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    L1,
    L12,
    Nuclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Homotopy,
    Pg,
    Apg,
    Svp,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Homotopy => "homotopy",
            Algorithm::Pg => "pg",
            Algorithm::Apg => "apg",
            Algorithm::Svp => "svp",
        }
    }
}

/// Solver settings; `lambda_tgt = None` means `4 ||A* z||*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub lambda_tgt: Option<f64>,
    pub epsilon: f64,
    pub eta: f64,
    pub delta_prime: f64,
    pub l_min: f64,
    pub gamma_inc: f64,
    pub gamma_dec: f64,
    pub max_stage_iters: usize,
    pub max_total_iters: usize,
    /// Gradient restart for the accelerated baseline.
    pub apg_restart: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = HomotopyParams::new(1.0, 1e-8);
        SolverConfig {
            lambda_tgt: None,
            epsilon: p.epsilon,
            eta: p.eta,
            delta_prime: p.delta_prime,
            l_min: p.l_min,
            gamma_inc: p.gamma_inc,
            gamma_dec: p.gamma_dec,
            max_stage_iters: p.max_stage_iters,
            max_total_iters: p.max_total_iters,
            apg_restart: false,
        }
    }
}

impl SolverConfig {
    pub fn params(&self, lambda_tgt: f64) -> HomotopyParams {
        HomotopyParams {
            lambda_tgt,
            epsilon: self.epsilon,
            eta: self.eta,
            delta_prime: self.delta_prime,
            l_min: self.l_min,
            gamma_inc: self.gamma_inc,
            gamma_dec: self.gamma_dec,
            max_stage_iters: self.max_stage_iters,
            max_total_iters: self.max_total_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvpConfig {
    /// Target rank; `None` uses `k0`.
    pub rank: Option<usize>,
    pub step: f64,
    pub iters: usize,
}

impl Default for SvpConfig {
    fn default() -> Self {
        SvpConfig {
            rank: None,
            step: 1.0,
            iters: 300,
        }
    }
}

/// Inputs of the assumption check and the bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub rip_samples: usize,
    /// `None` uses `2 c`.
    pub r: Option<f64>,
    /// `None` uses `min(1/4, (1 + delta') / eta - 1)`.
    pub delta: Option<f64>,
    pub kappa_safety: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            rip_samples: DEFAULT_RIP_SAMPLES,
            r: None,
            delta: None,
            kappa_safety: 2.0,
        }
    }
}

/// CSV files of a custom problem, relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFiles {
    pub a: PathBuf,
    pub b: PathBuf,
    #[serde(default)]
    pub x0: Option<PathBuf>,
    #[serde(default)]
    pub z: Option<PathBuf>,
    /// Per-coordinate weights for weighted l1 (unit weights when absent).
    #[serde(default)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ProblemKind,
    /// Matrix shape `d1 x d2` (problem1, problem2, matrix-valued custom runs).
    #[serde(default)]
    pub d1: Option<usize>,
    #[serde(default)]
    pub d2: Option<usize>,
    /// Rank (problem1) or nonzero-column count (problem2).
    #[serde(default)]
    pub k0: usize,
    #[serde(default)]
    pub m: usize,
    /// Half-width `w` of the uniform noise on `(-w, w)`.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to nuclear for problem1 and l12 for problem2.
    #[serde(default)]
    pub norm: Option<NormChoice>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub svp: SvpConfig,
    #[serde(default)]
    pub check: CheckConfig,
    /// The reference optimum is computed to `reference_tol_factor * lambda_tgt`.
    #[serde(default = "default_reference_tol_factor")]
    pub reference_tol_factor: f64,
    #[serde(default)]
    pub custom: Option<CustomFiles>,
    pub output_dir: PathBuf,
    /// Run the algorithms concurrently.
    #[serde(default)]
    pub parallel: bool,
}

fn default_reference_tol_factor() -> f64 {
    REFERENCE_TOL_FACTOR
}

impl ExperimentConfig {
    /// 60 x 60 rank-3 matrix sensing with 2500 Gaussian measurements.
    pub fn problem1_desk(seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            kind: ProblemKind::Problem1,
            d1: Some(60),
            d2: Some(60),
            k0: 3,
            m: 2500,
            noise: 0.005,
            seed,
            norm: None,
            algorithms: vec![Algorithm::Homotopy, Algorithm::Pg, Algorithm::Apg, Algorithm::Svp],
            solver: SolverConfig::default(),
            svp: SvpConfig::default(),
            check: CheckConfig::default(),
            reference_tol_factor: REFERENCE_TOL_FACTOR,
            custom: None,
            output_dir: output_dir.into(),
            parallel: false,
        }
    }

    /// 10 x 200 matrix with 10 nonzero columns and 800 Rademacher measurements.
    pub fn problem2_desk(seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            kind: ProblemKind::Problem2,
            d1: Some(10),
            d2: Some(200),
            k0: 10,
            m: 800,
            algorithms: vec![Algorithm::Homotopy, Algorithm::Pg, Algorithm::Apg],
            ..Self::problem1_desk(seed, output_dir)
        }
    }

    /// Full-scale matrix sensing: 300 x 300, rank 10, 20000 measurements.
    pub fn problem1_full(seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            d1: Some(300),
            d2: Some(300),
            k0: 10,
            m: 20_000,
            ..Self::problem1_desk(seed, output_dir)
        }
    }

    /// Full-scale column-sparse recovery.
    pub fn problem2_full(seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            d1: Some(50),
            d2: Some(1000),
            k0: 50,
            m: 18_000,
            ..Self::problem2_desk(seed, output_dir)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| BenchError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn norm_choice(&self) -> Result<NormChoice> {
        match (self.kind, self.norm) {
            (_, Some(n)) => Ok(n),
            (ProblemKind::Problem1, None) => Ok(NormChoice::Nuclear),
            (ProblemKind::Problem2, None) => Ok(NormChoice::L12),
            (ProblemKind::Custom, None) => Err(BenchError::config("custom problems need an explicit norm")),
        }
    }

    /// `(d1, d2)` for the synthetic kinds.
    pub fn shape(&self) -> Result<(usize, usize)> {
        match (self.d1, self.d2) {
            (Some(d1), Some(d2)) if d1 > 0 && d2 > 0 => Ok((d1, d2)),
            _ => Err(BenchError::config("d1 and d2 must both be given and positive")),
        }
    }

    /// `delta` used by the assumption check.
    pub fn check_delta(&self) -> f64 {
        self.check
            .delta
            .unwrap_or_else(|| analysis::diagnostic_delta(self.solver.delta_prime, self.solver.eta))
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(BenchError::config("algorithms must not be empty"));
        }
        let norm = self.norm_choice()?;
        match self.kind {
            ProblemKind::Problem1 | ProblemKind::Problem2 => {
                let (d1, d2) = self.shape()?;
                if self.m == 0 {
                    return Err(BenchError::config("m must be >= 1"));
                }
                let cap = if self.kind == ProblemKind::Problem1 {
                    d1.min(d2)
                } else {
                    d2
                };
                if self.k0 == 0 || self.k0 > cap {
                    return Err(BenchError::config(format!("k0 = {} must lie in 1..={cap}", self.k0)));
                }
                if self.custom.is_some() {
                    return Err(BenchError::config("custom files are only read for kind = custom"));
                }
            }
            ProblemKind::Custom => {
                if self.custom.is_none() {
                    return Err(BenchError::config("kind = custom needs a custom section"));
                }
                if norm != NormChoice::L1 {
                    self.shape()?;
                }
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(BenchError::config("noise half-width must be >= 0"));
        }
        if self.algorithms.contains(&Algorithm::Svp) && norm != NormChoice::Nuclear {
            return Err(BenchError::config("svp runs only with the nuclear norm"));
        }
        if let Some(l) = self.solver.lambda_tgt {
            if !(l > 0.0 && l.is_finite()) {
                return Err(BenchError::config("lambda_tgt must be > 0"));
            }
        }
        self.solver
            .params(self.solver.lambda_tgt.unwrap_or(1.0))
            .validate()
            .map_err(|e| BenchError::config(e.to_string()))?;
        if !(self.svp.step > 0.0 && self.svp.step.is_finite()) || self.svp.rank == Some(0) {
            return Err(BenchError::config("svp needs step > 0 and rank >= 1"));
        }
        if self.check.rip_samples == 0 {
            return Err(BenchError::config("rip_samples must be >= 1"));
        }
        if !(self.check.kappa_safety >= 1.0) {
            return Err(BenchError::config("kappa_safety must be >= 1"));
        }
        if let Some(r) = self.check.r {
            if !(r > 1.0) {
                return Err(BenchError::config("r must be > 1"));
            }
        }
        let delta = self.check_delta();
        if !(delta > 0.0 && delta <= 0.25) {
            return Err(BenchError::config(format!("delta = {delta} must lie in (0, 1/4]")));
        }
        if !(self.reference_tol_factor > 0.0) {
            return Err(BenchError::config("reference_tol_factor must be > 0"));
        }
        Ok(())
    }
}
