//! Model-space geometry and the least-squares loss.
//!
//! The model space is `R^n` with the inner product `<x, y> = x^T B y` for a
//! diagonal positive `B`. The data space `R^m` always uses the plain dot
//! product. Matrix-shaped variables are flattened column-major.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type Vector = DVector<f64>;

/// Diagonal of the positive definite matrix `B` defining the model-space inner product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Metric {
    diag: Vec<f64>,
}

impl Metric {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::contract("metric must have dimension >= 1"));
        }
        if let Some(i) = diag.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::contract(format!(
                "metric entry {i} is {} (must be positive and finite)",
                diag[i]
            )));
        }
        Ok(Metric { diag })
    }

    pub fn identity(n: usize) -> Self {
        Metric { diag: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_identity(&self) -> bool {
        self.diag.iter().all(|&d| d == 1.0)
    }

    pub fn inner(&self, x: &Vector, y: &Vector) -> Result<f64> {
        check_dim("inner (x)", self.dim(), x.len())?;
        check_dim("inner (y)", self.dim(), y.len())?;
        Ok(self.inner_unchecked(x, y))
    }

    pub fn induced_norm(&self, x: &Vector) -> Result<f64> {
        Ok(self.inner(x, x)?.sqrt())
    }

    pub(crate) fn inner_unchecked(&self, x: &Vector, y: &Vector) -> f64 {
        self.diag
            .iter()
            .zip(x.iter().zip(y.iter()))
            .map(|(d, (a, b))| d * a * b)
            .sum()
    }

    pub(crate) fn norm_sq_unchecked(&self, x: &Vector) -> f64 {
        self.inner_unchecked(x, x)
    }

    /// In-place `v <- B^{-1} v`.
    pub(crate) fn solve_in_place(&self, v: &mut Vector) {
        if self.is_identity() {
            return;
        }
        for (vi, d) in v.iter_mut().zip(&self.diag) {
            *vi /= d;
        }
    }
}

impl TryFrom<Vec<f64>> for Metric {
    type Error = Error;

    fn try_from(diag: Vec<f64>) -> Result<Self> {
        Metric::new(diag)
    }
}

impl From<Metric> for Vec<f64> {
    fn from(m: Metric) -> Self {
        m.diag
    }
}

/// `<x, y>_B`.
pub fn inner(x: &Vector, y: &Vector, metric: &Metric) -> Result<f64> {
    metric.inner(x, y)
}

/// `||x||_u = sqrt(<x, x>_B)`.
pub fn induced_norm(x: &Vector, metric: &Metric) -> Result<f64> {
    metric.induced_norm(x)
}

/// Dense measurement matrix `A` (m x n).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    mat: DMatrix<f64>,
}

impl MeasurementOperator {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() == 0 || mat.ncols() == 0 {
            return Err(Error::contract("measurement operator must be at least 1x1"));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("measurement operator has non-finite entries"));
        }
        Ok(MeasurementOperator { mat })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        check_dim("operator data", rows * cols, data.len())?;
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn identity(n: usize) -> Self {
        MeasurementOperator {
            mat: DMatrix::identity(n, n),
        }
    }

    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// `A x`.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dim("apply", self.cols(), x.len())?;
        Ok(self.apply_unchecked(x))
    }

    /// `A* u = B^{-1} A^T u`, the adjoint with respect to the metric.
    pub fn adjoint_apply(&self, u: &Vector, metric: &Metric) -> Result<Vector> {
        check_dim("adjoint_apply (u)", self.rows(), u.len())?;
        check_dim("adjoint_apply (metric)", self.cols(), metric.dim())?;
        Ok(self.adjoint_unchecked(u, metric))
    }

    pub(crate) fn apply_unchecked(&self, x: &Vector) -> Vector {
        &self.mat * x
    }

    pub(crate) fn adjoint_unchecked(&self, u: &Vector, metric: &Metric) -> Vector {
        let mut out = self.mat.tr_mul(u);
        metric.solve_in_place(&mut out);
        out
    }
}

/// `f(x) = 1/2 ||A x - b||^2` over a metric model space.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresProblem {
    op: MeasurementOperator,
    b: Vector,
    metric: Metric,
}

impl LeastSquaresProblem {
    pub fn new(op: MeasurementOperator, b: Vector, metric: Metric) -> Result<Self> {
        check_dim("problem (b)", op.rows(), b.len())?;
        check_dim("problem (metric)", op.cols(), metric.dim())?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("observation vector has non-finite entries"));
        }
        Ok(LeastSquaresProblem { op, b, metric })
    }

    pub fn op(&self) -> &MeasurementOperator {
        &self.op
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.op.cols()
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim("value", self.dim(), x.len())?;
        let r = self.op.apply_unchecked(x) - &self.b;
        finite(0.5 * r.norm_squared(), "loss")
    }

    /// `(f(x), A*(A x - b))`.
    pub fn value_and_gradient(&self, x: &Vector) -> Result<(f64, Vector)> {
        check_dim("value_and_gradient", self.dim(), x.len())?;
        let r = self.op.apply_unchecked(x) - &self.b;
        let value = finite(0.5 * r.norm_squared(), "loss")?;
        let grad = self.op.adjoint_unchecked(&r, &self.metric);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical("non-finite gradient"));
        }
        Ok((value, grad))
    }

    /// Loss and gradient from a precomputed `A x`.
    pub(crate) fn eval_from_image(&self, ax: &Vector) -> Result<(f64, Vector)> {
        let r = ax - &self.b;
        let value = finite(0.5 * r.norm_squared(), "loss")?;
        let grad = self.op.adjoint_unchecked(&r, &self.metric);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical("non-finite gradient"));
        }
        Ok((value, grad))
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical(format!("non-finite {what}")))
    }
}
