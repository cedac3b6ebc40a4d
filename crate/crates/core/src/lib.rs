//! Proximal-gradient homotopy for least squares regularized by a
//! decomposable norm (weighted l1, l1,2 or nuclear).
//!
//! * [`model_space`]: metric, measurement operator, least-squares loss.
//! * [`norms`]: norm families with dual norm, prox, `K`, `e_x`, tangent
//!   projections, orthogonal decompositions and the optimality residual.
//! * [`solver`]: line search, proximal-gradient stages, homotopy, baselines.
//! * [`analysis`]: sampled RIP constants, assumption report, iteration bounds,
//!   reference optima.

pub mod analysis;
pub mod error;
pub mod model_space;
pub mod norms;
pub mod solver;

pub use error::{Error, Result};
pub use model_space::{LeastSquaresProblem, MeasurementOperator, Metric, Vector};
pub use norms::{NormFamily, OrthogonalDecomposition};
pub use solver::{HomotopyParams, IterateTrace, SolveOutput, TraceRecord};
