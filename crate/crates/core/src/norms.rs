//! Decomposable norms: weighted l1, l1,2 (column groups) and nuclear.
//!
//! Each family fixes the model-space metric it is decomposable under:
//! weighted l1 with weights `w` uses `B = diag(w^2)`, the matrix families use
//! the identity. All vectors passed in are expressed in that geometry, so a
//! "gradient" here is always the metric gradient `A*(Ax - b)`.
//!
//! Matrix variables are `d1 x d2`, flattened column-major.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model_space::{Metric, Vector};

/// Relative singular-value cutoff used when counting rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const SVD_MAX_ITERS: usize = 100_000;
const SVD_CHECK_TOL: f64 = 1e-9;
const SVD_EPS_LADDER: [f64; 4] = [5.0 * f64::EPSILON, 1e-14, 1e-13, 1e-12];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NormFamily {
    /// `sum_i w_i |x_i|`.
    WeightedL1 { weights: Vec<f64> },
    /// Sum of Euclidean norms of the `d2` columns.
    L12 { d1: usize, d2: usize },
    /// Sum of singular values.
    Nuclear { d1: usize, d2: usize },
}

/// `x = sum_i gamma_i a_i` with B-orthonormal extreme points `a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalDecomposition {
    pub coefficients: Vec<f64>,
    pub atoms: Vec<Vector>,
}

impl OrthogonalDecomposition {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn reconstruct(&self, n: usize) -> Vector {
        let mut out = Vector::zeros(n);
        for (g, a) in self.coefficients.iter().zip(&self.atoms) {
            out.axpy(*g, a, 1.0);
        }
        out
    }

    /// `sum_i a_i`, which equals `e_x`.
    pub fn atom_sum(&self, n: usize) -> Vector {
        let mut out = Vector::zeros(n);
        for a in &self.atoms {
            out += a;
        }
        out
    }
}

impl NormFamily {
    pub fn weighted_l1(weights: Vec<f64>) -> Result<Self> {
        let fam = NormFamily::WeightedL1 { weights };
        fam.validate()?;
        Ok(fam)
    }

    pub fn unit_l1(n: usize) -> Self {
        NormFamily::WeightedL1 { weights: vec![1.0; n] }
    }

    pub fn l12(d1: usize, d2: usize) -> Result<Self> {
        let fam = NormFamily::L12 { d1, d2 };
        fam.validate()?;
        Ok(fam)
    }

    pub fn nuclear(d1: usize, d2: usize) -> Result<Self> {
        let fam = NormFamily::Nuclear { d1, d2 };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NormFamily::WeightedL1 { weights } => {
                if weights.is_empty() {
                    return Err(Error::contract("weighted l1 needs at least one weight"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::contract("l1 weights must be positive and finite"));
                }
            }
            NormFamily::L12 { d1, d2 } | NormFamily::Nuclear { d1, d2 } => {
                if *d1 == 0 || *d2 == 0 {
                    return Err(Error::contract("matrix dimensions must be >= 1"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            NormFamily::WeightedL1 { .. } => "weighted_l1",
            NormFamily::L12 { .. } => "l12",
            NormFamily::Nuclear { .. } => "nuclear",
        }
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        match self {
            NormFamily::WeightedL1 { weights } => weights.len(),
            NormFamily::L12 { d1, d2 } | NormFamily::Nuclear { d1, d2 } => d1 * d2,
        }
    }

    /// Largest attainable value of `K`.
    pub fn max_level(&self) -> usize {
        match self {
            NormFamily::WeightedL1 { weights } => weights.len(),
            NormFamily::L12 { d2, .. } => *d2,
            NormFamily::Nuclear { d1, d2 } => (*d1).min(*d2),
        }
    }

    /// The metric under which this norm is decomposable.
    pub fn metric(&self) -> Metric {
        match self {
            NormFamily::WeightedL1 { weights } => {
                Metric::new(weights.iter().map(|w| w * w).collect()).expect("validated weights")
            }
            _ => Metric::identity(self.dim()),
        }
    }

    pub fn check_metric(&self, metric: &Metric) -> Result<()> {
        check_dim("norm family vs metric", self.dim(), metric.dim())?;
        let expected = self.metric();
        let ok = expected
            .diag()
            .iter()
            .zip(metric.diag())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "metric is not the one {} is decomposable under",
                self.name()
            )))
        }
    }

    /// Upper bound on `||x||^2 / (k0 ||x||_u^2)` over the tangent space of a
    /// structured point: 1 for the separable families, 2 for nuclear.
    pub fn tangent_ratio_constant(&self) -> f64 {
        match self {
            NormFamily::Nuclear { .. } => 2.0,
            _ => 1.0,
        }
    }

    /// Whether `omega_upper` returns the exact residual.
    pub fn omega_is_exact(&self) -> bool {
        !matches!(self, NormFamily::Nuclear { .. })
    }

    fn check(&self, what: &'static str, x: &Vector) -> Result<()> {
        check_dim(what, self.dim(), x.len())
    }

    pub fn norm_value(&self, x: &Vector) -> Result<f64> {
        self.check("norm_value", x)?;
        Ok(self.norm_unchecked(x))
    }

    pub(crate) fn norm_unchecked(&self, x: &Vector) -> f64 {
        match self {
            NormFamily::WeightedL1 { weights } => weights.iter().zip(x.iter()).map(|(w, v)| w * v.abs()).sum(),
            NormFamily::L12 { d1, .. } => x.as_slice().chunks(*d1).map(euclid).sum(),
            NormFamily::Nuclear { d1, d2 } => as_matrix(x, *d1, *d2).singular_values_unordered().sum(),
        }
    }

    pub fn dual_norm_value(&self, y: &Vector) -> Result<f64> {
        self.check("dual_norm_value", y)?;
        Ok(self.dual_unchecked(y))
    }

    pub(crate) fn dual_unchecked(&self, y: &Vector) -> f64 {
        match self {
            NormFamily::WeightedL1 { weights } => weights
                .iter()
                .zip(y.iter())
                .map(|(w, v)| w * v.abs())
                .fold(0.0, f64::max),
            NormFamily::L12 { d1, .. } => y.as_slice().chunks(*d1).map(euclid).fold(0.0, f64::max),
            NormFamily::Nuclear { d1, d2 } => as_matrix(y, *d1, *d2)
                .singular_values_unordered()
                .iter()
                .cloned()
                .fold(0.0, f64::max),
        }
    }

    /// `argmin_x tau ||x|| + 1/2 ||x - v||_u^2`.
    pub fn prox(&self, v: &Vector, tau: f64) -> Result<Vector> {
        self.check("prox", v)?;
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::contract(format!("prox threshold must be >= 0, got {tau}")));
        }
        if tau == 0.0 {
            return Ok(v.clone());
        }
        match self {
            NormFamily::WeightedL1 { weights } => Ok(Vector::from_iterator(
                v.len(),
                v.iter().zip(weights).map(|(&vi, &w)| soft_threshold(vi, tau / w)),
            )),
            NormFamily::L12 { d1, .. } => {
                let mut out = v.clone();
                for col in out.as_mut_slice().chunks_mut(*d1) {
                    let nrm = euclid(col);
                    let scale = if nrm > tau { 1.0 - tau / nrm } else { 0.0 };
                    col.iter_mut().for_each(|c| *c *= scale);
                }
                Ok(out)
            }
            NormFamily::Nuclear { d1, d2 } => {
                let svd = thin_svd(as_matrix(v, *d1, *d2))?;
                let shrunk: Vec<f64> = svd.sigma.iter().map(|s| s - tau).take_while(|s| *s > 0.0).collect();
                Ok(flatten(&svd.reconstruct(&shrunk)))
            }
        }
    }

    /// Generalized cardinality `K(x) = ||e_x||_u^2`.
    ///
    /// Exact zero count for the separable families; for nuclear, the number of
    /// singular values above `rank_tol * sigma_max`.
    pub fn k_of(&self, x: &Vector, rank_tol: f64) -> Result<usize> {
        self.check("k_of", x)?;
        if !(rank_tol >= 0.0) {
            return Err(Error::contract("rank_tol must be >= 0"));
        }
        Ok(match self {
            NormFamily::WeightedL1 { .. } => x.iter().filter(|v| **v != 0.0).count(),
            NormFamily::L12 { d1, .. } => x.as_slice().chunks(*d1).filter(|c| c.iter().any(|v| *v != 0.0)).count(),
            NormFamily::Nuclear { d1, d2 } => {
                let sv = as_matrix(x, *d1, *d2).singular_values_unordered();
                count_rank(sv.as_slice(), rank_tol)
            }
        })
    }

    pub fn k_default(&self, x: &Vector) -> Result<usize> {
        self.k_of(x, DEFAULT_RANK_TOL)
    }

    /// The vector `e_x` of the subdifferential `e_x + {v in T_x^perp : ||v||* <= 1}`.
    /// `e_of(0) = 0`.
    pub fn e_of(&self, x: &Vector) -> Result<Vector> {
        self.check("e_of", x)?;
        match self {
            NormFamily::WeightedL1 { weights } => Ok(Vector::from_iterator(
                x.len(),
                x.iter().zip(weights).map(|(&v, &w)| sign(v) / w),
            )),
            NormFamily::L12 { d1, .. } => {
                let mut out = x.clone();
                for col in out.as_mut_slice().chunks_mut(*d1) {
                    let nrm = euclid(col);
                    if nrm > 0.0 {
                        col.iter_mut().for_each(|c| *c /= nrm);
                    }
                }
                Ok(out)
            }
            NormFamily::Nuclear { d1, d2 } => {
                let svd = thin_svd(as_matrix(x, *d1, *d2))?.truncate(DEFAULT_RANK_TOL);
                Ok(flatten(&(&svd.u * svd.v.transpose())))
            }
        }
    }

    /// B-orthogonal projection of `y` onto `T_x`.
    pub fn project_t(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check("project_t (x)", x)?;
        self.check("project_t (y)", y)?;
        match self {
            NormFamily::WeightedL1 { .. } => Ok(Vector::from_iterator(
                y.len(),
                x.iter()
                    .zip(y.iter())
                    .map(|(&xi, &yi)| if xi != 0.0 { yi } else { 0.0 }),
            )),
            NormFamily::L12 { d1, .. } => {
                let mut out = y.clone();
                for (ycol, xcol) in out.as_mut_slice().chunks_mut(*d1).zip(x.as_slice().chunks(*d1)) {
                    if xcol.iter().all(|v| *v == 0.0) {
                        ycol.iter_mut().for_each(|c| *c = 0.0);
                    }
                }
                Ok(out)
            }
            NormFamily::Nuclear { d1, d2 } => {
                let svd = thin_svd(as_matrix(x, *d1, *d2))?.truncate(DEFAULT_RANK_TOL);
                let ym = as_matrix(y, *d1, *d2);
                Ok(flatten(&(&ym - svd.project_perp(&ym))))
            }
        }
    }

    /// B-orthogonal projection of `y` onto `T_x^perp`.
    pub fn project_t_perp(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check("project_t_perp (x)", x)?;
        self.check("project_t_perp (y)", y)?;
        match self {
            NormFamily::Nuclear { d1, d2 } => {
                let svd = thin_svd(as_matrix(x, *d1, *d2))?.truncate(DEFAULT_RANK_TOL);
                Ok(flatten(&svd.project_perp(&as_matrix(y, *d1, *d2))))
            }
            _ => Ok(y - self.project_t(x, y)?),
        }
    }

    pub fn orthogonal_decompose(&self, x: &Vector) -> Result<OrthogonalDecomposition> {
        self.check("orthogonal_decompose", x)?;
        let n = self.dim();
        let mut coefficients = Vec::new();
        let mut atoms = Vec::new();
        match self {
            NormFamily::WeightedL1 { weights } => {
                for (i, (&xi, &w)) in x.iter().zip(weights).enumerate() {
                    if xi != 0.0 {
                        coefficients.push(w * xi.abs());
                        let mut a = Vector::zeros(n);
                        a[i] = sign(xi) / w;
                        atoms.push(a);
                    }
                }
            }
            NormFamily::L12 { d1, .. } => {
                for (j, col) in x.as_slice().chunks(*d1).enumerate() {
                    let nrm = euclid(col);
                    if nrm > 0.0 {
                        coefficients.push(nrm);
                        let mut a = Vector::zeros(n);
                        for (k, c) in col.iter().enumerate() {
                            a[j * d1 + k] = c / nrm;
                        }
                        atoms.push(a);
                    }
                }
            }
            NormFamily::Nuclear { d1, d2 } => {
                let svd = thin_svd(as_matrix(x, *d1, *d2))?.truncate(DEFAULT_RANK_TOL);
                for i in 0..svd.sigma.len() {
                    coefficients.push(svd.sigma[i]);
                    atoms.push(flatten(&(svd.u.column(i) * svd.v.column(i).transpose())));
                }
            }
        }
        Ok(OrthogonalDecomposition { coefficients, atoms })
    }

    /// `max(||g||* - lambda, 0)`: the residual at `x = 0`, where the
    /// subdifferential is the whole dual unit ball.
    pub fn omega_at_zero(&self, g: &Vector, lambda: f64) -> Result<f64> {
        self.check("omega_at_zero", g)?;
        check_lambda(lambda)?;
        Ok((self.dual_unchecked(g) - lambda).max(0.0))
    }

    /// Upper bound on `omega_lambda(x) = min_{xi in d||x||} ||lambda xi + g||*`.
    ///
    /// Exact for weighted l1 and l1,2 (the minimization separates). For the
    /// nuclear norm this evaluates the feasible subgradient
    /// `e_x - P_perp(g) / max(lambda, ||P_perp(g)||*)`.
    pub fn omega_upper(&self, x: &Vector, g: &Vector, lambda: f64) -> Result<f64> {
        self.check("omega_upper (x)", x)?;
        self.check("omega_upper (g)", g)?;
        check_lambda(lambda)?;
        match self {
            NormFamily::WeightedL1 { weights } => Ok(x
                .iter()
                .zip(g.iter())
                .zip(weights)
                .map(|((&xi, &gi), &w)| {
                    if xi != 0.0 {
                        (lambda * sign(xi) + w * gi).abs()
                    } else {
                        (w * gi.abs() - lambda).max(0.0)
                    }
                })
                .fold(0.0, f64::max)),
            NormFamily::L12 { d1, .. } => Ok(x
                .as_slice()
                .chunks(*d1)
                .zip(g.as_slice().chunks(*d1))
                .map(|(xc, gc)| {
                    let xn = euclid(xc);
                    if xn > 0.0 {
                        xc.iter()
                            .zip(gc)
                            .map(|(a, b)| (lambda * a / xn + b).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    } else {
                        (euclid(gc) - lambda).max(0.0)
                    }
                })
                .fold(0.0, f64::max)),
            NormFamily::Nuclear { d1, d2 } => {
                let svd = thin_svd(as_matrix(x, *d1, *d2))?.truncate(DEFAULT_RANK_TOL);
                let gm = as_matrix(g, *d1, *d2);
                let perp = svd.project_perp(&gm);
                let perp_dual = spectral_norm(&perp);
                let scale = lambda / lambda.max(perp_dual);
                let e = &svd.u * svd.v.transpose();
                let residual = e * lambda - perp * scale + gm;
                Ok(spectral_norm(&residual))
            }
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("lambda must be > 0, got {lambda}")))
    }
}

fn euclid(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(crate) fn count_rank(sv: &[f64], rank_tol: f64) -> usize {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rank_tol * smax).count()
}

pub(crate) fn as_matrix(x: &Vector, d1: usize, d2: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(d1, d2, x.as_slice())
}

pub(crate) fn flatten(m: &DMatrix<f64>) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values_unordered().iter().cloned().fold(0.0, f64::max)
}

/// Thin SVD with singular values sorted in decreasing order.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd(m: DMatrix<f64>) -> Result<ThinSvd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("SVD of a matrix with non-finite entries"));
    }
    let scale = m.norm();
    let mt = m.transpose();
    for eps in SVD_EPS_LADDER {
        if let Some(svd) = svd_checked(&m, eps, scale) {
            return Ok(svd);
        }
        if let Some(t) = svd_checked(&mt, eps, scale) {
            return Ok(ThinSvd {
                u: t.v,
                sigma: t.sigma,
                v: t.u,
            });
        }
    }
    Err(Error::numerical("SVD did not converge to an accurate factorization"))
}

fn svd_checked(m: &DMatrix<f64>, eps: f64, scale: f64) -> Option<ThinSvd> {
    let svd = m.clone().try_svd(true, true, eps, SVD_MAX_ITERS)?;
    let out = ThinSvd {
        u: svd.u?,
        sigma: svd.singular_values,
        v: svd.v_t?.transpose(),
    };
    let resid = (out.reconstruct(out.sigma.as_slice()) - m).norm();
    (resid <= SVD_CHECK_TOL * scale.max(f64::MIN_POSITIVE)).then_some(out)
}

impl ThinSvd {
    /// Keep only the components with `sigma_i > rank_tol * sigma_max`.
    pub fn truncate(self, rank_tol: f64) -> ThinSvd {
        let r = count_rank(self.sigma.as_slice(), rank_tol);
        self.keep(r)
    }

    pub fn keep(self, r: usize) -> ThinSvd {
        let r = r.min(self.sigma.len());
        ThinSvd {
            u: self.u.columns(0, r).into_owned(),
            sigma: self.sigma.rows(0, r).into_owned(),
            v: self.v.columns(0, r).into_owned(),
        }
    }

    /// `sum_i s_i u_i v_i^T` over the leading `s.len()` components.
    pub fn reconstruct(&self, s: &[f64]) -> DMatrix<f64> {
        let r = s.len();
        let mut us = self.u.columns(0, r).into_owned();
        for (j, sj) in s.iter().enumerate() {
            us.column_mut(j).scale_mut(*sj);
        }
        us * self.v.columns(0, r).transpose()
    }

    /// `(I - U U^T) Y (I - V V^T)`.
    pub fn project_perp(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let left = y - &self.u * (self.u.transpose() * y);
        &left - (&left * &self.v) * self.v.transpose()
    }
}
