//! Dense reference computations shared by the integration tests.

#![allow(dead_code)]

use aggdiff::Kernel;
use nalgebra::{DMatrix, SymmetricEigen};

/// Full eigendecomposition of the trapezoid Nystrom discretization of
/// `H(x, y) = G(x - y) - G(x + y)` on `[0, L]` with `m` intervals.
///
/// The matrix is assembled from `Kernel::eval` alone and symmetrized as
/// `W^{1/2} H W^{1/2}` on nodes `1..=m` (row 0 vanishes identically).
pub struct DenseSpectrum {
    /// Eigenvalues in decreasing order.
    pub eigenvalues: Vec<f64>,
    /// Leading eigenfunction on nodes `0..=m`, `u(0) = 0`, `max u = 1`.
    pub leading: Vec<f64>,
}

pub fn dense_spectrum(kernel: &Kernel, length: f64, m: usize) -> DenseSpectrum {
    let h = length / m as f64;
    let x: Vec<f64> = (1..=m).map(|i| if i == m { length } else { i as f64 * h }).collect();
    let w: Vec<f64> = (1..=m).map(|i| if i == m { 0.5 * h } else { h }).collect();
    let b = DMatrix::from_fn(m, m, |i, j| {
        let hij = kernel.eval(x[i] - x[j]) - kernel.eval(x[i] + x[j]);
        w[i].sqrt() * hij * w[j].sqrt()
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    let top = order[0];
    let mut u: Vec<f64> = std::iter::once(0.0)
        .chain((0..m).map(|i| eig.eigenvectors[(i, top)] / w[i].sqrt()))
        .collect();
    let peak = u
        .iter()
        .copied()
        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    u.iter_mut().for_each(|v| *v /= peak);
    DenseSpectrum {
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        leading: u,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Number of strict sign changes, skipping exact zeros.
pub fn sign_changes(values: &[f64]) -> usize {
    let signs: Vec<bool> = values.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
