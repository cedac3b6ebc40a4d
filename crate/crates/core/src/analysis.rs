//! Restricted-isometry diagnostics, the linear-convergence assumption check,
//! the iteration bounds that follow from it, and a high-accuracy reference
//! optimum for objective-gap measurements.
//!
//! Exact restricted isometry constants are intractable. Everything here uses
//! Monte-Carlo *inner* estimates: `rho_minus_hat >= rho_minus` and
//! `rho_plus_hat <= rho_plus`. Verdicts built on them are optimistic
//! diagnostics, not certificates.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model_space::{LeastSquaresProblem, MeasurementOperator, Metric, Vector};
use crate::norms::{self, NormFamily};
use crate::solver::{self, HomotopyParams};

pub const DEFAULT_RIP_SAMPLES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    /// Requested level; directions are sampled with `K(x) <= max(1, floor(k))`.
    pub k: f64,
    pub rho_minus_hat: f64,
    pub rho_plus_hat: f64,
    pub n_samples: usize,
    pub seed: u64,
}

fn sample_level(fam: &NormFamily, k: f64) -> Result<usize> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::contract(format!("RIP level must be > 0, got {k}")));
    }
    let level = (k.floor() as usize).max(1);
    if level > fam.max_level() {
        return Err(Error::contract(format!(
            "RIP level {level} exceeds the largest attainable K = {}",
            fam.max_level()
        )));
    }
    Ok(level)
}

fn sample_rng(seed: u64, level: usize, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Random direction with `K(x) = level` (almost surely), fully determined by
/// `(seed, level, index)`: Gaussian values on a random support for the
/// separable families, a product of Gaussian factors for nuclear.
pub fn sample_direction(fam: &NormFamily, level: usize, seed: u64, index: u64) -> Vector {
    let mut rng = sample_rng(seed, level, index);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    match fam {
        NormFamily::WeightedL1 { weights } => {
            let n = weights.len();
            let mut x = Vector::zeros(n);
            for i in rand::seq::index::sample(&mut rng, n, level.min(n)) {
                x[i] = gauss(&mut rng);
            }
            x
        }
        NormFamily::L12 { d1, d2 } => {
            let mut x = Vector::zeros(d1 * d2);
            for j in rand::seq::index::sample(&mut rng, *d2, level.min(*d2)) {
                for i in 0..*d1 {
                    x[j * d1 + i] = gauss(&mut rng);
                }
            }
            x
        }
        NormFamily::Nuclear { d1, d2 } => {
            let r = level.min((*d1).min(*d2));
            let g1 = DMatrix::from_fn(*d1, r, |_, _| gauss(&mut rng));
            let g2 = DMatrix::from_fn(*d2, r, |_, _| gauss(&mut rng));
            norms::flatten(&(g1 * g2.transpose()))
        }
    }
}

fn check_rip_inputs(op: &MeasurementOperator, metric: &Metric, fam: &NormFamily, n_samples: usize) -> Result<()> {
    fam.validate()?;
    fam.check_metric(metric)?;
    check_dim("estimate_rip (operator columns)", fam.dim(), op.cols())?;
    if n_samples == 0 {
        return Err(Error::contract("n_samples must be >= 1"));
    }
    Ok(())
}

/// `(min, max)` of `||A x||^2 / ||x||_u^2` over the samples of one level.
fn level_extremes(
    op: &MeasurementOperator,
    metric: &Metric,
    fam: &NormFamily,
    level: usize,
    n_samples: usize,
    seed: u64,
) -> (f64, f64) {
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let x = sample_direction(fam, level, seed, i);
            let r = restricted_ratio(op, metric, &x);
            (r, r)
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        )
}

/// `||A x||^2 / ||x||_u^2`.
pub fn restricted_ratio(op: &MeasurementOperator, metric: &Metric, x: &Vector) -> f64 {
    let ax = op.apply_unchecked(x);
    ax.iter().map(|v| v * v).sum::<f64>() / metric.norm_sq_unchecked(x)
}

/// Monte-Carlo inner estimate of `rho_-(A, k)` and `rho_+(A, k)`.
pub fn estimate_rip(
    op: &MeasurementOperator,
    metric: &Metric,
    fam: &NormFamily,
    k: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RipEstimate> {
    check_rip_inputs(op, metric, fam, n_samples)?;
    let level = sample_level(fam, k)?;
    let (lo, hi) = level_extremes(op, metric, fam, level, n_samples, seed);
    Ok(RipEstimate {
        k,
        rho_minus_hat: lo,
        rho_plus_hat: hi,
        n_samples,
        seed,
    })
}

/// Estimates at several levels where each level also reuses every sample of
/// the lower levels (a direction with `K <= k1` is admissible at `k2 >= k1`).
/// The results are monotone in `k` by construction. Output order follows the
/// input order.
pub fn estimate_rip_levels(
    op: &MeasurementOperator,
    metric: &Metric,
    fam: &NormFamily,
    levels: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<RipEstimate>> {
    check_rip_inputs(op, metric, fam, n_samples)?;
    let mut sampled: Vec<usize> = levels.iter().map(|k| sample_level(fam, *k)).collect::<Result<_>>()?;
    sampled.sort_unstable();
    sampled.dedup();
    let mut cumulative = Vec::with_capacity(sampled.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &level in &sampled {
        let (l, h) = level_extremes(op, metric, fam, level, n_samples, seed);
        lo = lo.min(l);
        hi = hi.max(h);
        cumulative.push((level, lo, hi));
    }
    levels
        .iter()
        .map(|&k| {
            let level = sample_level(fam, k)?;
            let &(_, lo, hi) = cumulative.iter().find(|c| c.0 == level).expect("level was sampled");
            Ok(RipEstimate {
                k,
                rho_minus_hat: lo,
                rho_plus_hat: hi,
                n_samples,
                seed,
            })
        })
        .collect()
}

/// Scalar inputs of the assumption check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub lambda_tgt: f64,
    pub delta: f64,
    pub r: f64,
    pub gamma_inc: f64,
    pub seed: u64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub noise_bound_ok: bool,
    pub rho_ratio_ok: bool,
    pub rho_positive_ok: bool,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.noise_bound_ok && self.rho_ratio_ok && self.rho_positive_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub k0: usize,
    pub c: f64,
    pub delta: f64,
    pub r: f64,
    pub gamma_inc: f64,
    pub lambda_tgt: f64,
    /// `||A* z||*`.
    pub dual_noise: f64,
    pub gamma: f64,
    /// `36 r c k0 (1 + gamma) gamma_inc`.
    pub k_tilde: f64,
    /// `c k0 (1 + gamma)^2`.
    pub level_low: f64,
    /// `2 k_tilde`.
    pub level_high: f64,
    /// Levels actually sampled (capped at the largest attainable `K`, where
    /// the restriction stops binding).
    pub level_low_sampled: usize,
    pub level_high_sampled: usize,
    pub rho_plus_one: f64,
    pub rho_minus_low: f64,
    pub rho_minus_high: f64,
    pub rho_plus_high: f64,
    /// `rho_+(2 k_tilde) / rho_-(2 k_tilde)`; `None` if the lower estimate is 0.
    pub kappa: Option<f64>,
    /// `1 - 1 / (4 gamma_inc kappa)`.
    pub rate: Option<f64>,
    pub big_c: Option<f64>,
    pub verdicts: Verdicts,
    /// Always true: the constants are empirical inner estimates.
    pub optimistic: bool,
    pub n_samples: usize,
    pub seed: u64,
}

impl AssumptionReport {
    /// The same report with `kappa` inflated by `factor` and the rate and `C`
    /// recomputed, to absorb the optimism of the sampled constants.
    pub fn with_kappa_safety(&self, factor: f64) -> AssumptionReport {
        let mut out = self.clone();
        if let Some(kappa) = self.kappa {
            out.set_kappa(kappa * factor);
        }
        out
    }

    fn set_kappa(&mut self, kappa: f64) {
        self.kappa = Some(kappa);
        self.rate = Some(1.0 - 1.0 / (4.0 * self.gamma_inc * kappa));
        let root = self.rho_minus_high.sqrt() + (self.rho_plus_one * kappa).sqrt();
        self.big_c = Some(
            6.0 * self.gamma_inc * kappa * self.delta * self.c * self.k0 as f64 * (1.0 + self.gamma) * root * root
                / self.rho_minus_low,
        );
    }
}

/// `(lambda_tgt (1 + delta) + d) / (lambda_tgt (1 - delta) - d)` with `d = ||A* z||*`.
pub fn gamma_constant(lambda_tgt: f64, delta: f64, dual_noise: f64) -> Result<f64> {
    let den = lambda_tgt * (1.0 - delta) - dual_noise;
    if !(den > 0.0) {
        return Err(Error::BoundUndefined(format!(
            "noise level {dual_noise} leaves no admissible gamma at lambda_tgt = {lambda_tgt}"
        )));
    }
    Ok((lambda_tgt * (1.0 + delta) + dual_noise) / den)
}

/// `k_tilde = 36 r c k0 (1 + gamma) gamma_inc`.
pub fn k_tilde(r: f64, c: f64, k0: usize, gamma: f64, gamma_inc: f64) -> f64 {
    36.0 * r * c * k0 as f64 * (1.0 + gamma) * gamma_inc
}

/// `delta = min(1/4, (1 + delta') / eta - 1)`, the largest admissible `delta`
/// and the one that makes `(1 + delta') / (1 + delta) <= eta` tight when possible.
pub fn diagnostic_delta(delta_prime: f64, eta: f64) -> f64 {
    (0.25_f64).min((1.0 + delta_prime) / eta - 1.0)
}

/// Evaluate the restricted-eigenvalue assumption for `b = A x0 + z` using
/// sampled RIP constants.
pub fn check_assumption(
    op: &MeasurementOperator,
    metric: &Metric,
    fam: &NormFamily,
    x0: &Vector,
    z: &Vector,
    check: &AssumptionCheck,
) -> Result<AssumptionReport> {
    let AssumptionCheck {
        lambda_tgt,
        delta,
        r,
        gamma_inc,
        seed,
        n_samples,
    } = *check;
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::contract(format!("r must be > 1, got {r}")));
    }
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(Error::contract(format!("delta must lie in (0, 1/4], got {delta}")));
    }
    if !(lambda_tgt > 0.0 && lambda_tgt.is_finite()) {
        return Err(Error::contract("lambda_tgt must be > 0"));
    }
    if !(gamma_inc > 1.0) {
        return Err(Error::contract("gamma_inc must be > 1"));
    }
    check_rip_inputs(op, metric, fam, n_samples)?;
    check_dim("check_assumption (z)", op.rows(), z.len())?;

    let k0 = fam.k_default(x0)?;
    let c = fam.tangent_ratio_constant();
    let dual_noise = fam.dual_norm_value(&op.adjoint_apply(z, metric)?)?;
    let gamma = gamma_constant(lambda_tgt, delta, dual_noise)?;
    let kt = k_tilde(r, c, k0, gamma, gamma_inc);
    let level_low = c * k0 as f64 * (1.0 + gamma).powi(2);
    let level_high = 2.0 * kt;

    let cap = fam.max_level() as f64;
    let clamp = |k: f64| k.min(cap).max(1.0);
    let levels = [1.0, clamp(level_low), clamp(level_high)];
    let est = estimate_rip_levels(op, metric, fam, &levels, n_samples, seed)?;
    let (one, low, high) = (&est[0], &est[1], &est[2]);

    let verdicts = Verdicts {
        noise_bound_ok: dual_noise <= lambda_tgt / 4.0,
        rho_ratio_ok: low.rho_minus_hat / high.rho_plus_hat > c / r,
        rho_positive_ok: high.rho_minus_hat > 0.0,
    };
    let mut report = AssumptionReport {
        k0,
        c,
        delta,
        r,
        gamma_inc,
        lambda_tgt,
        dual_noise,
        gamma,
        k_tilde: kt,
        level_low,
        level_high,
        level_low_sampled: clamp(level_low).floor() as usize,
        level_high_sampled: clamp(level_high).floor() as usize,
        rho_plus_one: one.rho_plus_hat,
        rho_minus_low: low.rho_minus_hat,
        rho_minus_high: high.rho_minus_hat,
        rho_plus_high: high.rho_plus_hat,
        kappa: None,
        rate: None,
        big_c: None,
        verdicts,
        optimistic: true,
        n_samples,
        seed,
    };
    if high.rho_minus_hat > 0.0 {
        report.set_kappa(high.rho_plus_hat / high.rho_minus_hat);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationBounds {
    pub rate: f64,
    /// Iteration bound for each intermediate stage: `log(C / delta^2) / log(1/rate)`.
    pub per_stage: f64,
    /// Iteration bound for the final stage: `log(C lambda_tgt / eps^2) / log(1/rate)`.
    pub final_stage: f64,
    pub total: f64,
    /// `9 c k0 lambda_tgt (1 + gamma) eps / rho_-(c (1+gamma)^2 k0)`.
    pub gap_bound: f64,
    pub n_stages: usize,
    /// `(1 + delta') / (1 + delta)`, which must not exceed `eta`.
    pub eta_condition_lhs: f64,
    pub eta_condition_ok: bool,
}

/// Iteration and gap bounds for the homotopy run described by `report`.
pub fn iteration_bounds(
    report: &AssumptionReport,
    delta_prime: f64,
    eta: f64,
    epsilon: f64,
    lambda0: f64,
    lambda_tgt: f64,
) -> Result<IterationBounds> {
    let (Some(rate), Some(big_c)) = (report.rate, report.big_c) else {
        return Err(Error::BoundUndefined(
            "kappa is undefined (rho_minus estimate is 0)".into(),
        ));
    };
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::BoundUndefined(format!("rate {rate} is outside (0, 1)")));
    }
    if !(epsilon > 0.0 && lambda0 > 0.0 && lambda_tgt > 0.0 && eta > 0.0 && eta < 1.0) {
        return Err(Error::contract(
            "iteration_bounds needs positive epsilon, lambdas and eta in (0, 1)",
        ));
    }
    let log_inv = -rate.ln();
    let delta = report.delta;
    let stage_log = (big_c / (delta * delta)).ln();
    let final_log = (big_c * lambda_tgt / (epsilon * epsilon)).ln();
    let eta_condition_lhs = (1.0 + delta_prime) / (1.0 + delta);
    Ok(IterationBounds {
        rate,
        per_stage: stage_log / log_inv,
        final_stage: final_log / log_inv,
        total: (final_log + ((lambda_tgt / lambda0).ln() / eta.ln()) * stage_log) / log_inv,
        gap_bound: 9.0 * report.c * report.k0 as f64 * lambda_tgt * (1.0 + report.gamma) * epsilon
            / report.rho_minus_low,
        n_stages: solver::stage_count(lambda0, lambda_tgt, eta),
        eta_condition_lhs,
        eta_condition_ok: eta_condition_lhs <= eta * (1.0 + 1e-12),
    })
}

/// Default tolerance factor: the reference run stops at `1e-12 * lambda`.
pub const REFERENCE_TOL_FACTOR: f64 = 1e-12;

const REFERENCE_MAX_ITERS: usize = 200_000;

/// Restarted accelerated proximal gradient run until its stopping quantity is
/// at most `tol`. Returns the lowest objective value seen along the run and the
/// final iterate.
pub fn reference_optimum(
    problem: &LeastSquaresProblem,
    fam: &NormFamily,
    lambda: f64,
    tol: f64,
) -> Result<(f64, Vector)> {
    if !(tol > 0.0) {
        return Err(Error::contract("reference tolerance must be > 0"));
    }
    let params = HomotopyParams {
        max_stage_iters: REFERENCE_MAX_ITERS,
        max_total_iters: REFERENCE_MAX_ITERS,
        ..HomotopyParams::new(lambda, tol)
    };
    let mut best = f64::INFINITY;
    let out = solver::baseline_apg_with(problem, fam, lambda, tol, &params, true, &mut |rec, _| {
        best = best.min(rec.objective);
    })?;
    Ok((best, out.x))
}
