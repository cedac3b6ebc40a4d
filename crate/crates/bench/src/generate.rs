use nalgebra::DMatrix;
use pgh_core::norms::NormFamily;
use pgh_core::{LeastSquaresProblem, MeasurementOperator, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, NormChoice, ProblemKind};
use crate::error::{BenchError, Result};
use crate::io;

/// A problem instance with its norm and, for synthetic runs, the truth and noise.
#[derive(Debug, Clone)]
pub struct Generated {
    pub problem: LeastSquaresProblem,
    pub family: NormFamily,
    pub x0: Option<Vector>,
    pub z: Option<Vector>,
}

/// Build the instance described by `cfg`. Synthetic kinds draw `X0`, then `A`,
/// then `z` from one ChaCha8 stream seeded by `cfg.seed`.
pub fn gen_problem(cfg: &ExperimentConfig) -> Result<Generated> {
    cfg.validate()?;
    match cfg.kind {
        ProblemKind::Problem1 => problem1(cfg),
        ProblemKind::Problem2 => problem2(cfg),
        ProblemKind::Custom => custom(cfg),
    }
}

fn family(cfg: &ExperimentConfig, n: usize) -> Result<NormFamily> {
    Ok(match cfg.norm_choice()? {
        NormChoice::L1 => NormFamily::unit_l1(n),
        NormChoice::L12 => {
            let (d1, d2) = cfg.shape()?;
            NormFamily::l12(d1, d2)?
        }
        NormChoice::Nuclear => {
            let (d1, d2) = cfg.shape()?;
            NormFamily::nuclear(d1, d2)?
        }
    })
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn uniform_noise(rng: &mut ChaCha8Rng, m: usize, w: f64) -> Vector {
    if w == 0.0 {
        return Vector::zeros(m);
    }
    Vector::from_fn(m, |_, _| rng.random_range(-w..w))
}

fn assemble(cfg: &ExperimentConfig, a: DMatrix<f64>, x0: Vector, z: Vector) -> Result<Generated> {
    let n = x0.len();
    let fam = family(cfg, n)?;
    let b = &a * &x0 + &z;
    let problem = LeastSquaresProblem::new(MeasurementOperator::new(a)?, b, fam.metric())?;
    Ok(Generated {
        problem,
        family: fam,
        x0: Some(x0),
        z: Some(z),
    })
}

/// `X0 = G1 G2^T` scaled to unit spectral norm, `A_ij ~ N(0, 1/m)`.
fn problem1(cfg: &ExperimentConfig) -> Result<Generated> {
    let (d1, d2) = cfg.shape()?;
    let (k0, m) = (cfg.k0, cfg.m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g1 = DMatrix::from_fn(d1, k0, |_, _| gauss(&mut rng));
    let g2 = DMatrix::from_fn(d2, k0, |_, _| gauss(&mut rng));
    let x = g1 * g2.transpose();
    let spec = x.singular_values().max();
    let x0 = Vector::from_column_slice((x / spec).as_slice());
    let scale = 1.0 / (m as f64).sqrt();
    let a = DMatrix::from_fn(m, d1 * d2, |_, _| scale * gauss(&mut rng));
    let z = uniform_noise(&mut rng, m, cfg.noise);
    assemble(cfg, a, x0, z)
}

/// `k0` random Gaussian columns, `A_ij = +-1/sqrt(m)` with equal probability.
fn problem2(cfg: &ExperimentConfig) -> Result<Generated> {
    let (d1, d2) = cfg.shape()?;
    let (k0, m) = (cfg.k0, cfg.m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cols: Vec<usize> = rand::seq::index::sample(&mut rng, d2, k0).into_vec();
    cols.sort_unstable();
    let mut x0 = Vector::zeros(d1 * d2);
    for j in cols {
        for i in 0..d1 {
            x0[j * d1 + i] = gauss(&mut rng);
        }
    }
    let scale = 1.0 / (m as f64).sqrt();
    let a = DMatrix::from_fn(m, d1 * d2, |_, _| if rng.random_bool(0.5) { scale } else { -scale });
    let z = uniform_noise(&mut rng, m, cfg.noise);
    assemble(cfg, a, x0, z)
}

fn custom(cfg: &ExperimentConfig) -> Result<Generated> {
    let files = cfg
        .custom
        .as_ref()
        .ok_or_else(|| BenchError::config("kind = custom needs a custom section"))?;
    let a = io::read_matrix(&files.a)?;
    let b = io::read_vector(&files.b)?;
    let (m, n) = a.shape();
    let fam = match (cfg.norm_choice()?, &files.weights) {
        (NormChoice::L1, Some(w)) => NormFamily::weighted_l1(io::read_vector(w)?.iter().cloned().collect())?,
        _ => family(cfg, n)?,
    };
    let expect = |what: &str, got: usize, want: usize| -> Result<()> {
        if got == want {
            Ok(())
        } else {
            Err(BenchError::config(format!("{what} has length {got}, expected {want}")))
        }
    };
    expect("norm dimension", fam.dim(), n)?;
    expect("b", b.len(), m)?;
    let x0 = files.x0.as_deref().map(io::read_vector).transpose()?;
    let z = files.z.as_deref().map(io::read_vector).transpose()?;
    if let Some(x0) = &x0 {
        expect("x0", x0.len(), n)?;
    }
    if let Some(z) = &z {
        expect("z", z.len(), m)?;
    }
    let problem = LeastSquaresProblem::new(MeasurementOperator::new(a)?, b, fam.metric())?;
    Ok(Generated {
        problem,
        family: fam,
        x0,
        z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaDefaults {
    /// `4 ||A* z||*`.
    pub lambda_tgt: f64,
    /// `||A* b||*`, the start of the homotopy path.
    pub lambda0: f64,
    /// True when `z = 0`: the default target is 0 and must be supplied explicitly.
    pub degenerate: bool,
}

pub fn default_lambda_tgt(problem: &LeastSquaresProblem, fam: &NormFamily, z: &Vector) -> Result<LambdaDefaults> {
    let metric = problem.metric();
    let op = problem.op();
    let lambda_tgt = 4.0 * fam.dual_norm_value(&op.adjoint_apply(z, metric)?)?;
    let lambda0 = fam.dual_norm_value(&op.adjoint_apply(problem.b(), metric)?)?;
    Ok(LambdaDefaults {
        lambda_tgt,
        lambda0,
        degenerate: lambda_tgt == 0.0,
    })
}
