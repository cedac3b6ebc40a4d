#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pgh_core::norms::NormFamily;
use pgh_core::{LeastSquaresProblem, MeasurementOperator, Metric, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| scale * gauss(rng))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    DVector::from_fn(n, |_, _| gauss(rng))
}

pub fn problem(a: DMatrix<f64>, b: Vector, metric: Metric) -> LeastSquaresProblem {
    LeastSquaresProblem::new(MeasurementOperator::new(a).unwrap(), b, metric).unwrap()
}

/// A random member of each family, sized small enough for fast property runs.
pub fn families(rng: &mut ChaCha8Rng) -> Vec<NormFamily> {
    let n = rng.random_range(3..9);
    let weights = (0..n).map(|_| rng.random_range(0.3..3.0)).collect();
    vec![
        NormFamily::weighted_l1(weights).unwrap(),
        NormFamily::l12(rng.random_range(1..5), rng.random_range(2..6)).unwrap(),
        NormFamily::nuclear(rng.random_range(2..6), rng.random_range(2..6)).unwrap(),
    ]
}

/// A random point whose `K` is drawn uniformly from `0..=max_level`.
pub fn structured_point(rng: &mut ChaCha8Rng, fam: &NormFamily) -> Vector {
    let level = rng.random_range(0..=fam.max_level());
    match fam {
        NormFamily::WeightedL1 { weights } => {
            let n = weights.len();
            let mut x = Vector::zeros(n);
            for i in rand::seq::index::sample(rng, n, level) {
                x[i] = gauss(rng);
            }
            x
        }
        NormFamily::L12 { d1, d2 } => {
            let mut x = Vector::zeros(d1 * d2);
            for j in rand::seq::index::sample(rng, *d2, level) {
                for i in 0..*d1 {
                    x[j * d1 + i] = gauss(rng);
                }
            }
            x
        }
        NormFamily::Nuclear { d1, d2 } => {
            let g1 = gaussian_matrix(rng, *d1, level, 1.0);
            let g2 = gaussian_matrix(rng, *d2, level, 1.0);
            DVector::from_column_slice((g1 * g2.transpose()).as_slice())
        }
    }
}

/// Exhaustive lasso oracle for unit-weight l1 and the identity metric:
/// enumerate every sign/zero pattern, solve the reduced normal equations
/// `A_S^T A_S x_S = A_S^T b - lambda s_S`, keep sign-consistent solutions that
/// satisfy `|A_i^T (b - A x)| <= lambda` off the support, return the best.
pub fn lasso_oracle(a: &DMatrix<f64>, b: &Vector, lambda: f64) -> Vector {
    let n = a.ncols();
    let mut best: Option<(f64, Vector)> = None;
    let patterns = 3usize.pow(n as u32);
    for code in 0..patterns {
        let mut c = code;
        let signs: Vec<f64> = (0..n)
            .map(|_| {
                let s = [0.0, 1.0, -1.0][c % 3];
                c /= 3;
                s
            })
            .collect();
        let support: Vec<usize> = (0..n).filter(|&i| signs[i] != 0.0).collect();
        let mut x = Vector::zeros(n);
        if !support.is_empty() {
            let a_s = DMatrix::from_fn(a.nrows(), support.len(), |i, j| a[(i, support[j])]);
            let gram = a_s.transpose() * &a_s;
            let rhs = a_s.transpose() * b - DVector::from_fn(support.len(), |j, _| lambda * signs[support[j]]);
            if gram.determinant().abs() < 1e-10 {
                continue;
            }
            let Some(sol) = gram.lu().solve(&rhs) else { continue };
            if support.iter().enumerate().any(|(j, &i)| sol[j] * signs[i] <= 0.0) {
                continue;
            }
            for (j, &i) in support.iter().enumerate() {
                x[i] = sol[j];
            }
        }
        let corr = a.transpose() * (b - a * &x);
        let ok = (0..n).all(|i| {
            if signs[i] == 0.0 {
                corr[i].abs() <= lambda * (1.0 + 1e-9)
            } else {
                (corr[i] - lambda * signs[i]).abs() <= 1e-8 * (1.0 + lambda)
            }
        });
        if !ok {
            continue;
        }
        let obj = 0.5 * (a * &x - b).norm_squared() + lambda * x.iter().map(|v| v.abs()).sum::<f64>();
        if best.as_ref().map_or(true, |(o, _)| obj < *o) {
            best = Some((obj, x));
        }
    }
    best.expect("some sign pattern is optimal").1
}
