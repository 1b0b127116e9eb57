//! Steady states from the leading eigenpair of
//!
//! ```text
//! H_L[u](x) = int_0^L (G(x - y) - G(x + y)) u(y) dy,   x in [0, L],
//! ```
//!
//! acting on `u = -rho'`. The largest eigenvalue is the diffusivity `eps(L)`
//! whose steady state has support `[-L, L]`, and
//! `rho(x) = alpha int_{|x|}^L u(y) dy` with `alpha` fixing unit mass.
//! Both operators are discretized with trapezoid Nystrom weights on `m`
//! intervals of `[0, L]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid1D};
use crate::kernels::Kernel;

/// Largest eigenvalue below which the kernel mass threshold is reached.
const EPS_BRACKET_LO: f64 = 0.01;
const EPS_BRACKET_HI: f64 = 1.0;
/// `|eps(L) - eps|` at which bisection stops.
pub const BISECTION_TOL: f64 = 1e-8;
/// Eigenfunctions whose maximum falls below this are treated as zero.
const ZERO_EIGENFUNCTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Bound on the relative Rayleigh-quotient change and on the scaled
    /// residual `max |eps u - H u| / max u`.
    pub tol: f64,
    pub max_iter: usize,
    /// Whether to estimate the second eigenvalue by deflation.
    pub second_eigenvalue: bool,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 100_000,
            second_eigenvalue: true,
        }
    }
}

/// Half-support problem on `[0, L]` with `m` intervals.
#[derive(Debug, Clone)]
pub struct HalfSupportProblem {
    length: f64,
    m: usize,
    kernel: Kernel,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Row-major `(m + 1)^2` matrix `H(x_i, y_j) w_j`.
    matrix: Vec<f64>,
}

impl HalfSupportProblem {
    pub fn new(kernel: &Kernel, length: f64, m: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidInput(format!("half support length must be > 0, got {length}")));
        }
        if m < 8 {
            return Err(Error::InvalidInput(format!("need at least 8 intervals on [0, L], got {m}")));
        }
        if !kernel.is_normalized() {
            return Err(Error::KernelNotNormalized { mass: kernel.l1_mass() });
        }
        let h = length / m as f64;
        let mut nodes: Vec<f64> = (0..=m).map(|i| i as f64 * h).collect();
        nodes[m] = length;
        let mut weights = vec![h; m + 1];
        weights[0] = 0.5 * h;
        weights[m] = 0.5 * h;
        let size = m + 1;
        let mut matrix = vec![0.0; size * size];
        for i in 1..size {
            let x = nodes[i];
            let row = &mut matrix[i * size..(i + 1) * size];
            for j in 0..size {
                let y = nodes[j];
                row[j] = (kernel.eval(x - y) - kernel.eval(x + y)) * weights[j];
            }
        }
        Ok(Self {
            length,
            m,
            kernel: kernel.clone(),
            nodes,
            weights,
            matrix,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Nodes `x_i = i L / m`, `i = 0..=m`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.m + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} values on [0, L], got {}",
                self.m + 1,
                u.len()
            )));
        }
        Ok(())
    }

    /// Trapezoid Nystrom `H_L[u]`. The first entry is exactly zero.
    pub fn apply_h(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut out = vec![0.0; u.len()];
        self.apply_h_into(u, &mut out);
        Ok(out)
    }

    fn apply_h_into(&self, u: &[f64], out: &mut [f64]) {
        let size = self.m + 1;
        out[0] = 0.0;
        for i in 1..size {
            let row = &self.matrix[i * size..(i + 1) * size];
            out[i] = row.iter().zip(u).map(|(a, b)| a * b).sum();
        }
    }

    /// Trapezoid discretization of
    /// `G_L[rho](x) = int_0^L (G(x - y) + G(x + y) - G(L - y) - G(L + y)) rho(y) dy`.
    /// The last entry is exactly zero.
    pub fn apply_g_l(&self, rho_half: &[f64]) -> Result<Vec<f64>> {
        self.check_len(rho_half)?;
        let l = self.length;
        let k = &self.kernel;
        let edge: Vec<f64> = self.nodes.iter().map(|&y| k.eval(l - y) + k.eval(l + y)).collect();
        let out = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if i == self.m {
                    return 0.0;
                }
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .zip(rho_half)
                    .zip(&edge)
                    .map(|(((&y, &w), &r), &e)| (k.eval(x - y) + k.eval(x + y) - e) * w * r)
                    .sum()
            })
            .collect();
        Ok(out)
    }

    /// Weighted inner product over nodes `1..=m`.
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        (1..=self.m).map(|i| self.weights[i] * a[i] * b[i]).sum()
    }

    /// `x (L - x) / L^2`, inside the cone of nonnegative functions.
    pub fn default_start(&self) -> Vec<f64> {
        let l = self.length;
        self.nodes.iter().map(|&x| x * (l - x) / (l * l)).collect()
    }

    pub fn leading_eigenpair(&self) -> Result<EigenResult> {
        self.leading_eigenpair_with(&self.default_start(), &PowerOptions::default())
    }

    /// Power iteration from `start`, which must be nonnegative and nonzero on
    /// `(0, L]`.
    pub fn leading_eigenpair_with(&self, start: &[f64], opts: &PowerOptions) -> Result<EigenResult> {
        let pair = self.power_iteration(start, opts)?;
        let (rho, alpha) = self.reconstruct_rho(&pair.u)?;
        let lambda2 = if opts.second_eigenvalue {
            Some(self.second_eigenvalue(&pair.u, pair.epsilon))
        } else {
            None
        };
        Ok(EigenResult {
            epsilon: pair.epsilon,
            u: pair.u,
            rho,
            alpha,
            iterations: pair.iterations,
            residual: pair.residual,
            lambda2,
            length: self.length,
            m: self.m,
        })
    }

    fn power_iteration(&self, start: &[f64], opts: &PowerOptions) -> Result<Pair> {
        self.check_len(start)?;
        if start.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput("initial iterate must be nonnegative".into()));
        }
        let mut u = start.to_vec();
        u[0] = 0.0;
        normalize_max(&mut u).ok_or(Error::ZeroEigenfunction)?;
        let mut au = vec![0.0; u.len()];
        let mut previous = f64::NAN;
        let mut residual = f64::INFINITY;
        for iteration in 1..=opts.max_iter {
            self.apply_h_into(&u, &mut au);
            let rq = self.inner(&u, &au) / self.inner(&u, &u);
            residual = u
                .iter()
                .zip(&au)
                .map(|(a, b)| (rq * a - b).abs())
                .fold(0.0, f64::max);
            let change = ((rq - previous) / rq).abs();
            if change < opts.tol && residual < opts.tol {
                return Ok(Pair {
                    epsilon: rq,
                    u,
                    iterations: iteration,
                    residual,
                });
            }
            previous = rq;
            std::mem::swap(&mut u, &mut au);
            normalize_max(&mut u).ok_or(Error::ZeroEigenfunction)?;
        }
        Err(Error::NoConvergence {
            length: self.length,
            residual,
            iterations: opts.max_iter,
        })
    }

    /// Largest remaining eigenvalue after deflating `(epsilon, u)` in the
    /// weighted inner product, in which the discrete operator is symmetric.
    fn second_eigenvalue(&self, u: &[f64], epsilon: f64) -> f64 {
        const TOL: f64 = 1e-10;
        const MAX_ITER: usize = 20_000;
        let uu = self.inner(u, u);
        let deflate = |v: &mut [f64]| {
            let c = self.inner(u, v) / uu;
            for (a, b) in v.iter_mut().zip(u) {
                *a -= c * b;
            }
        };
        let l = self.length;
        // changes sign once, so it overlaps the second mode
        let mut v: Vec<f64> = self.nodes.iter().map(|&x| x * (l - x) * (0.5 * l - x) / (l * l * l)).collect();
        deflate(&mut v);
        let mut av = vec![0.0; v.len()];
        let mut previous = f64::NAN;
        let mut estimate = 0.0;
        for _ in 0..MAX_ITER {
            if normalize_abs_max(&mut v).is_none() {
                return 0.0;
            }
            self.apply_h_into(&v, &mut av);
            deflate(&mut av);
            estimate = self.inner(&v, &av) / self.inner(&v, &v);
            if ((estimate - previous) / epsilon).abs() < TOL {
                break;
            }
            previous = estimate;
            std::mem::swap(&mut v, &mut av);
        }
        estimate
    }

    /// `rho(x) = alpha int_{|x|}^L u` on the `[-L, L]` grid with `2m`
    /// intervals, `alpha` chosen for unit trapezoid mass.
    pub fn reconstruct_rho(&self, u: &[f64]) -> Result<(DensityField, f64)> {
        self.check_len(u)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("eigenfunction has non-finite values".into()));
        }
        if u.iter().copied().fold(0.0, f64::max) < ZERO_EIGENFUNCTION {
            return Err(Error::ZeroEigenfunction);
        }
        let m = self.m;
        let h = self.length / m as f64;
        let mut tail = vec![0.0; m + 1];
        for i in (0..m).rev() {
            tail[i] = tail[i + 1] + 0.5 * h * (u[i] + u[i + 1]);
        }
        let half_mass: f64 = tail.iter().zip(&self.weights).map(|(p, w)| p * w).sum();
        if !(half_mass > 0.0) {
            return Err(Error::ZeroEigenfunction);
        }
        let alpha = 1.0 / (2.0 * half_mass);
        let mut values = vec![0.0; 2 * m + 1];
        for (i, p) in tail.iter().enumerate() {
            let v = (alpha * p).max(0.0);
            values[m + i] = v;
            values[m - i] = v;
        }
        let grid = Grid1D::symmetric(self.length, 2 * m)?;
        Ok((DensityField::new(grid, values)?, alpha))
    }
}

struct Pair {
    epsilon: f64,
    u: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn normalize_max(v: &mut [f64]) -> Option<()> {
    let max = v.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= max);
    Some(())
}

fn normalize_abs_max(v: &mut [f64]) -> Option<()> {
    let max = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= max);
    Some(())
}

/// Leading eigenpair and reconstructed steady state for one half-support
/// length.
#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Largest eigenvalue `eps(L)`.
    pub epsilon: f64,
    /// Eigenfunction on the `[0, L]` nodes, `max u = 1`.
    pub u: Vec<f64>,
    /// Unit-mass steady state on `[-L, L]`.
    pub rho: DensityField,
    pub alpha: f64,
    pub iterations: usize,
    /// `max |eps u - H u| / max u` at convergence.
    pub residual: f64,
    /// Second eigenvalue from deflated power iteration, when requested.
    pub lambda2: Option<f64>,
    pub length: f64,
    pub m: usize,
}

impl EigenResult {
    /// `rho` on the `[0, L]` nodes.
    pub fn rho_half(&self) -> &[f64] {
        &self.rho.values()[self.m..]
    }

    /// Index range of the support `[-L, L]` on the reconstruction grid.
    pub fn support(&self) -> std::ops::RangeInclusive<usize> {
        0..=2 * self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "L")]
    pub length: f64,
    pub epsilon: f64,
    pub lambda2: f64,
}

/// `eps(L)` and the second eigenvalue for each `L`, computed in parallel.
pub fn epsilon_of_l_curve(kernel: &Kernel, lengths: &[f64], m: usize) -> Result<Vec<CurvePoint>> {
    if lengths.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("L values must be positive".into()));
    }
    if lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("L values must be strictly increasing".into()));
    }
    lengths
        .par_iter()
        .map(|&length| {
            let r = HalfSupportProblem::new(kernel, length, m)?.leading_eigenpair()?;
            Ok(CurvePoint {
                length,
                epsilon: r.epsilon,
                lambda2: r.lambda2.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut v: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
            v[0] = lo;
            v[n - 1] = hi;
            v
        }
    }
}

/// Steady state with diffusivity `epsilon`, found by bisection on
/// `L -> eps(L)`.
pub fn solve_for_epsilon(kernel: &Kernel, epsilon: f64, m: usize) -> Result<EigenResult> {
    if !kernel.is_normalized() {
        return Err(Error::KernelNotNormalized { mass: kernel.l1_mass() });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange { epsilon });
    }
    let quick = PowerOptions {
        second_eigenvalue: false,
        ..PowerOptions::default()
    };
    let eps_at = |length: f64| -> Result<f64> {
        let p = HalfSupportProblem::new(kernel, length, m)?;
        Ok(p.power_iteration(&p.default_start(), &quick)?.epsilon)
    };
    let done = |length: f64| -> Result<EigenResult> { HalfSupportProblem::new(kernel, length, m)?.leading_eigenpair() };

    let (mut lo, mut hi) = (EPS_BRACKET_LO, EPS_BRACKET_HI);
    let mut e_lo = eps_at(lo)?;
    while e_lo > epsilon {
        lo *= 0.5;
        if lo < 1e-12 {
            return Err(Error::InvalidInput(format!("no bracket found below eps = {epsilon}")));
        }
        e_lo = eps_at(lo)?;
    }
    if (e_lo - epsilon).abs() <= BISECTION_TOL {
        return done(lo);
    }
    let mut e_hi = eps_at(hi)?;
    while e_hi <= epsilon {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoConvergence {
                length: hi,
                residual: epsilon - e_hi,
                iterations: 0,
            });
        }
        e_hi = eps_at(hi)?;
    }
    if (e_hi - epsilon).abs() <= BISECTION_TOL {
        return done(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e = eps_at(mid)?;
        if (e - epsilon).abs() <= BISECTION_TOL {
            return done(mid);
        }
        if e < epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        length: 0.5 * (lo + hi),
        residual: (eps_at(0.5 * (lo + hi))? - epsilon).abs(),
        iterations: 200,
    })
}
