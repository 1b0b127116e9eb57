//! Uniform 1-d grid, trapezoid quadrature and the discrete convolution
//! `(G * rho)(x_i) = sum_j w_j G(x_i - x_j) rho_j` shared by every solver.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel;

/// Masses below this are treated as zero.
pub const ZERO_MASS: f64 = 1e-14;

/// Equispaced nodes `a = x_0 < x_1 < ... < x_n = b`, `h = (b - a) / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    a: f64,
    b: f64,
    n_cells: usize,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!(
                "grid needs finite a < b, got [{a}, {b}]"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { a, b, n_cells })
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n_cells: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_cells)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of nodes, `n_cells + 1`.
    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n_cells as f64
    }

    /// Node `x_i`; written as a convex combination so that symmetric grids
    /// have exactly mirrored nodes.
    pub fn node(&self, i: usize) -> f64 {
        let n = self.n_cells as f64;
        let i = i as f64;
        ((n - i) * self.a + i * self.b) / n
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.len()];
        w[0] = 0.5 * h;
        w[self.n_cells] = 0.5 * h;
        w
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.a) / self.h()).round();
        t.clamp(0.0, self.n_cells as f64) as usize
    }
}

/// Trapezoid approximation of `int f dx` for node values `f`.
pub fn quadrature(grid: &Grid1D, f: &[f64]) -> f64 {
    assert_eq!(f.len(), grid.len(), "field length does not match grid");
    let n = grid.n_cells;
    let interior: f64 = f[1..n].iter().sum();
    grid.h() * (interior + 0.5 * (f[0] + f[n]))
}

/// Nonnegative grid density with cached mass and first moment.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid1D,
    values: Vec<f64>,
    mass: f64,
    first_moment: f64,
}

impl DensityField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "density has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "density must be finite and nonnegative, node {i} has {v}"
            )));
        }
        let mut field = Self {
            grid,
            values,
            mass: 0.0,
            first_moment: 0.0,
        };
        field.refresh();
        Ok(field)
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
            mass: 0.0,
            first_moment: 0.0,
        }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    fn refresh(&mut self) {
        self.mass = quadrature(&self.grid, &self.values);
        let moment: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.node(i) * v)
            .collect();
        self.first_moment = quadrature(&self.grid, &moment);
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `int x rho dx` (not divided by the mass).
    pub fn center_of_mass(&self) -> Result<f64> {
        if self.mass < ZERO_MASS {
            return Err(Error::ZeroMass { mass: self.mass });
        }
        Ok(self.first_moment)
    }

    /// `int x rho dx / int rho dx`.
    pub fn mean_position(&self) -> Result<f64> {
        Ok(self.center_of_mass()? / self.mass)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        quadrature(&self.grid, &sq).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    pub fn with_unit_mass(&self) -> Result<Self> {
        if self.mass < ZERO_MASS {
            return Err(Error::ZeroMass { mass: self.mass });
        }
        self.scaled(1.0 / self.mass)
    }

    /// Translation by whole nodes; values shifted past either end are lost
    /// and vacated nodes are zero.
    pub fn shifted(&self, nodes: isize) -> Self {
        let n = self.values.len() as isize;
        let values = (0..n)
            .map(|i| {
                let src = i - nodes;
                if (0..n).contains(&src) {
                    self.values[src as usize]
                } else {
                    0.0
                }
            })
            .collect();
        let mut field = Self {
            grid: self.grid,
            values,
            mass: 0.0,
            first_moment: 0.0,
        };
        field.refresh();
        field
    }

    /// Linear interpolation of `x -> rho(x + offset)` onto `grid`, zero
    /// outside this field's interval.
    pub fn resample(&self, grid: &Grid1D, offset: f64) -> Self {
        let h = self.grid.h();
        let last = self.grid.n_cells;
        let values = grid
            .nodes()
            .into_iter()
            .map(|x| {
                let s = (x + offset - self.grid.a) / h;
                if !(0.0..=last as f64).contains(&s) {
                    return 0.0;
                }
                let nearest = s.round();
                if (s - nearest).abs() < 1e-9 {
                    return self.values[nearest as usize];
                }
                let k = (s.floor() as usize).min(last - 1);
                let t = s - k as f64;
                (1.0 - t) * self.values[k] + t * self.values[k + 1]
            })
            .collect();
        let mut field = Self {
            grid: *grid,
            values,
            mass: 0.0,
            first_moment: 0.0,
        };
        field.refresh();
        field
    }

    /// Trapezoid `int |rho - other| dx` on a common grid.
    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput("l1 distance needs identical grids".into()));
        }
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(quadrature(&self.grid, &diff))
    }

    /// CSV with header `x,rho`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["x", "rho"])?;
        for (i, v) in self.values.iter().enumerate() {
            writer.write_record([fmt17(self.grid.node(i)), fmt17(*v)])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads an `x,rho` CSV written on an equispaced grid.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for record in reader.deserialize::<(f64, f64)>() {
            let (x, v) = record?;
            xs.push(x);
            values.push(v);
        }
        if xs.len() < 3 {
            return Err(Error::InvalidInput("density CSV needs at least 3 rows".into()));
        }
        let grid = Grid1D::new(xs[0], *xs.last().unwrap(), xs.len() - 1)?;
        let tol = 1e-9 * grid.h();
        if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - grid.node(i)).abs() > tol) {
            return Err(Error::InvalidInput(format!(
                "density CSV grid is not equispaced (row {i}, x = {})",
                xs[i]
            )));
        }
        Self::new(grid, values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// 17 significant digits, round-trippable.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trapezoid-weighted convolution with a kernel sampled once per grid.
///
/// `G(x_i - x_j)` depends only on `|i - j|`, so the kernel is stored as a
/// reflected table `R[n + d] = G(d h)` and every row is one contiguous dot
/// product over the nonzero range of the input.
#[derive(Debug, Clone)]
pub struct Convolver {
    grid: Grid1D,
    table: Vec<f64>,
    weights: Vec<f64>,
}

impl Convolver {
    pub fn new(kernel: &Kernel, grid: &Grid1D) -> Self {
        let n = grid.n_cells();
        let h = grid.h();
        let half: Vec<f64> = (0..=n).map(|d| kernel.eval(d as f64 * h)).collect();
        let mut table = vec![0.0; 2 * n + 1];
        for (d, g) in half.iter().enumerate() {
            table[n + d] = *g;
            table[n - d] = *g;
        }
        Self {
            grid: *grid,
            table,
            weights: grid.weights(),
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `G * f` at every node, for any real node values `f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, &mut out);
        out
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.grid.n_cells();
        assert_eq!(f.len(), n + 1, "field length does not match grid");
        assert_eq!(out.len(), n + 1, "output length does not match grid");
        let weighted: Vec<f64> = f.iter().zip(&self.weights).map(|(v, w)| v * w).collect();
        let Some(lo) = weighted.iter().position(|v| *v != 0.0) else {
            out.fill(0.0);
            return;
        };
        let hi = weighted.iter().rposition(|v| *v != 0.0).unwrap();
        let src = &weighted[lo..=hi];
        let row = |i: usize| {
            let start = n - i + lo;
            dot(&self.table[start..start + src.len()], src)
        };
        if n >= 256 {
            out.par_chunks_mut(64).enumerate().for_each(|(c, chunk)| {
                for (k, o) in chunk.iter_mut().enumerate() {
                    *o = row(c * 64 + k);
                }
            });
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = row(i);
            }
        }
    }
}

/// Dot product with eight interleaved accumulators. Lane assignment only
/// depends on the offset within the slices, so shifting both inputs by the
/// same number of nodes reproduces the result bit for bit.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
        acc[k] += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// `(G * rho)(x_i)` on the density's own grid.
pub fn convolve(kernel: &Kernel, rho: &DensityField) -> Vec<f64> {
    Convolver::new(kernel, rho.grid()).apply(rho.values())
}

/// Same as [`DensityField::center_of_mass`].
pub fn center_of_mass(rho: &DensityField) -> Result<f64> {
    rho.center_of_mass()
}
