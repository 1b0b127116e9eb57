//! Energy functional, second variation, steady-state constant and symmetric
//! decreasing rearrangement.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{quadrature, Convolver, DensityField, Grid1D};
use crate::kernels::Kernel;

/// Perturbations passed to [`second_variation`] must have mass below this.
pub const PERTURBATION_MASS_TOL: f64 = 1e-10;

/// `E[rho] = quadratic - interaction` with `quadratic = eps/2 int rho^2` and
/// `interaction = 1/2 int rho (G * rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub epsilon: f64,
    #[serde(rename = "quadratic")]
    pub quadratic_part: f64,
    #[serde(rename = "interaction")]
    pub interaction_part: f64,
    pub total: f64,
}

impl EnergyReport {
    fn new(epsilon: f64, quadratic_part: f64, interaction_part: f64) -> Self {
        Self {
            epsilon,
            quadratic_part,
            interaction_part,
            total: quadratic_part - interaction_part,
        }
    }
}

pub fn energy(kernel: &Kernel, epsilon: f64, rho: &DensityField) -> EnergyReport {
    energy_with(&Convolver::new(kernel, rho.grid()), epsilon, rho.values())
}

/// Energy of arbitrary node values (no sign requirement) with a prepared
/// convolver.
pub fn energy_with(conv: &Convolver, epsilon: f64, values: &[f64]) -> EnergyReport {
    let smoothed = conv.apply(values);
    energy_from_parts(conv.grid(), epsilon, values, &smoothed)
}

/// Energy when `G * rho` is already available.
pub fn energy_from_parts(grid: &Grid1D, epsilon: f64, values: &[f64], smoothed: &[f64]) -> EnergyReport {
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let cross: Vec<f64> = values.iter().zip(smoothed).map(|(a, b)| a * b).collect();
    EnergyReport::new(
        epsilon,
        0.5 * epsilon * quadrature(grid, &sq),
        0.5 * quadrature(grid, &cross),
    )
}

/// Support-averaged `C` in `eps rho - G * rho = C`, with the spread of the
/// pointwise values around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyConstant {
    pub value: f64,
    /// Standard deviation of `eps rho - G * rho` over the support.
    pub std_dev: f64,
    /// Largest `|eps rho - G * rho - C|` over the support.
    pub max_deviation: f64,
}

pub fn steady_constant(
    kernel: &Kernel,
    epsilon: f64,
    rho: &DensityField,
    support: RangeInclusive<usize>,
) -> Result<SteadyConstant> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if *support.end() >= rho.grid().len() {
        return Err(Error::InvalidInput(format!(
            "support {support:?} exceeds grid of {} nodes",
            rho.grid().len()
        )));
    }
    let smoothed = Convolver::new(kernel, rho.grid()).apply(rho.values());
    let potential: Vec<f64> = support
        .map(|i| epsilon * rho.values()[i] - smoothed[i])
        .collect();
    let count = potential.len() as f64;
    let value = potential.iter().sum::<f64>() / count;
    let var = potential.iter().map(|p| (p - value).powi(2)).sum::<f64>() / count;
    let max_deviation = potential.iter().map(|p| (p - value).abs()).fold(0.0, f64::max);
    Ok(SteadyConstant {
        value,
        std_dev: var.sqrt(),
        max_deviation,
    })
}

/// `eps int v^2 - int v (G * v)` for a mass-free perturbation `v`. The energy
/// is quadratic, so this is its exact second derivative along `v`.
pub fn second_variation(kernel: &Kernel, epsilon: f64, grid: &Grid1D, v: &[f64]) -> Result<f64> {
    let mass = quadrature(grid, v);
    if mass.abs() > PERTURBATION_MASS_TOL {
        return Err(Error::MassNotZero { mass });
    }
    let smoothed = Convolver::new(kernel, grid).apply(v);
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let cross: Vec<f64> = v.iter().zip(&smoothed).map(|(a, b)| a * b).collect();
    Ok(epsilon * quadrature(grid, &sq) - quadrature(grid, &cross))
}

/// Symmetric decreasing rearrangement about the grid midpoint.
///
/// Node values are sorted in decreasing order and laid out from the midpoint
/// outward, alternating right and left. With an odd node count the largest
/// value sits on the center node; otherwise the two middle nodes take the two
/// largest values. The result is a permutation of the input, so it is
/// equimeasurable up to the half weights of the two end nodes.
pub fn symmetric_decreasing_rearrangement(rho: &DensityField) -> DensityField {
    let grid = *rho.grid();
    let mut sorted = rho.values().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut out = vec![0.0; sorted.len()];
    for (value, slot) in sorted.into_iter().zip(outward_order(grid.len())) {
        out[slot] = value;
    }
    DensityField::new(grid, out).expect("a permutation of a valid density is valid")
}

/// Node indices ordered by distance from the midpoint, right before left on
/// ties.
fn outward_order(len: usize) -> Vec<usize> {
    let n = len - 1;
    let mut idx: Vec<usize> = (0..len).collect();
    // |2i - n| is twice the distance to the midpoint in units of h
    idx.sort_by_key(|&i| ((2 * i).abs_diff(n), std::cmp::Reverse(i)));
    idx
}
