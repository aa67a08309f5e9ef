//! Independent oracles shared by the integration suites: Gauss-Hermite
//! quadrature, a hand-rolled Jacobi eigensolver, and the planted-truth
//! experiment configuration.
//!
//! Each integration binary compiles this module separately and uses a
//! different subset of it.
#![allow(dead_code)]

use demand_core::design::TruthParams;
use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of n-point Gauss-Hermite quadrature (weight e^{-x^2}),
/// by Golub-Welsch on the symmetric Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(n, n);
    for i in 1..n {
        let off = (i as f64 / 2.0).sqrt();
        jacobi[(i - 1, i)] = off;
        jacobi[(i, i - 1)] = off;
    }
    let eigen = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eigen.eigenvalues[i];
            let first = eigen.eigenvectors[(0, i)];
            (node, std::f64::consts::PI.sqrt() * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Expectation of `f(eta)` for standard-normal `eta` via 64-node
/// Gauss-Hermite.
pub fn gauss_hermite_normal_expectation(f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_hermite(64);
    let norm = std::f64::consts::PI.sqrt();
    nodes
        .iter()
        .zip(&weights)
        .map(|(x, w)| w * f(std::f64::consts::SQRT_2 * x))
        .sum::<f64>()
        / norm
}

/// Eigenvalues (descending) of a symmetric matrix by the cyclic Jacobi
/// rotation method; fully independent of the library's eigensolver.
pub fn jacobi_eigenvalues(matrix: &DMatrix<f64>) -> Vec<f64> {
    let n = matrix.nrows();
    let mut a = matrix.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[(p, i)];
                    let aqi = a[(q, i)];
                    a[(p, i)] = c * api - s * aqi;
                    a[(q, i)] = s * api + c * aqi;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    values.sort_by(|x, y| y.partial_cmp(x).unwrap());
    values
}

/// The planted-truth experiment: ten products, rank effects, one random
/// coefficient of 1.5 on the first component.
pub fn experiment_truth() -> TruthParams {
    TruthParams {
        n_products: 10,
        alpha_mean: -1.0,
        gamma: Some(-0.1),
        delta: vec![0.0, 0.3, -0.3, 0.2, -0.2, 0.4, -0.4, 0.1, -0.1, 0.5],
        sigma: [("PC1".to_string(), 1.5)].into_iter().collect(),
        pc_dims: 6,
        pc_scores: None,
        price_grid: TruthParams::default_price_grid(),
        persist_epsilon: false,
    }
}

/// A smaller truth for quick checks: five products, two random
/// coefficients.
pub fn small_truth() -> TruthParams {
    TruthParams {
        n_products: 5,
        alpha_mean: -0.9,
        gamma: Some(-0.08),
        delta: vec![0.0, 0.25, -0.25, 0.4, -0.4],
        sigma: [("price".to_string(), 0.5), ("PC1".to_string(), 0.8)]
            .into_iter()
            .collect(),
        pc_dims: 2,
        pc_scores: None,
        price_grid: TruthParams::default_price_grid(),
        persist_epsilon: false,
    }
}

/// Central finite-difference gradient with relative step `h_rel`.
pub fn finite_difference_gradient(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    h_rel: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut point = x.to_vec();
    for j in 0..x.len() {
        let h = h_rel * x[j].abs().max(1.0);
        let saved = point[j];
        point[j] = saved + h;
        let plus = f(&point);
        point[j] = saved - h;
        let minus = f(&point);
        point[j] = saved;
        grad[j] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Mixed relative error used by the gradient checks.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
