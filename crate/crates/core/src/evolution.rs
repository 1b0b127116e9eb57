//! Explicit Euler finite differences for
//! `rho_t = (rho (eps rho - G * rho)_x)_x` with zero-flux ends.
//!
//! With `phi = eps rho - G * rho` the interface flux is
//! `F_{i+1/2} = rho_{i+1/2} (phi_{i+1} - phi_i) / h` and
//! `rho_i += dt (F_{i+1/2} - F_{i-1/2}) / h`. The interface density is a
//! slope-limited (monotonized central) linear reconstruction from the node the
//! material flows out of. Face values lie in `[0, 2 rho_i]`, so the
//! [`auto_dt`] bound keeps the scheme nonnegative, and away from extrema and
//! support edges it agrees with the centered average to second order, which
//! keeps the center-of-mass drift at `O(h^2)`. The update telescopes, so mass is conserved
//! to rounding.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::energy_from_parts;
use crate::error::{Error, Result};
use crate::grid::{fmt17, Convolver, DensityField, Grid1D};
use crate::kernels::{Kernel, KernelSpec};

/// Growth beyond this multiple of the initial maximum is reported as
/// instability.
pub const BLOWUP_FACTOR: f64 = 1e6;
/// Runs whose clipped mass exceeds this fraction of the total are rejected.
pub const CLIP_TOL: f64 = 1e-8;
/// Default early-stop threshold on `max |rho^{j+1} - rho^j| / dt`.
pub const STEADY_RATE_TOL: f64 = 1e-10;

/// `dt = 0.2 h^2 / (eps max rho + h max|G'| mass + 1e-12)`.
pub fn auto_dt(kernel: &Kernel, epsilon: f64, rho: &DensityField) -> f64 {
    let h = rho.grid().h();
    auto_dt_from(h, epsilon, kernel.max_abs_derivative(), rho.max(), rho.mass())
}

fn auto_dt_from(h: f64, epsilon: f64, max_slope: f64, max_rho: f64, mass: f64) -> f64 {
    0.2 * h * h / (epsilon * max_rho + h * max_slope * mass.abs() + 1e-12)
}

/// Outcome of a single explicit step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: DensityField,
    /// Mass removed by clipping negative values to zero.
    pub clipped_mass: f64,
    /// `max_i |rho^{j+1}_i - rho^j_i|`.
    pub max_change: f64,
}

/// One explicit Euler step.
pub fn step(kernel: &Kernel, epsilon: f64, rho: &DensityField, dt: f64) -> Result<StepOutcome> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let mut stepper = Stepper::new(kernel, epsilon, rho.grid());
    let mut values = rho.values().to_vec();
    stepper.prepare(&values);
    let info = stepper.advance(&mut values, dt);
    check_bounds(&values, rho.max(), 0)?;
    let state = DensityField::new(*rho.grid(), values)?;
    Ok(StepOutcome {
        state,
        clipped_mass: info.clipped_mass,
        max_change: info.max_change,
    })
}

fn check_bounds(values: &[f64], initial_max: f64, step: usize) -> Result<()> {
    let limit = BLOWUP_FACTOR * initial_max.max(f64::MIN_POSITIVE);
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::Instability {
                step,
                reason: format!("NaN at node {i}"),
            });
        }
        if v.abs() > limit {
            return Err(Error::Instability {
                step,
                reason: format!("|rho| = {v:e} at node {i} exceeds {BLOWUP_FACTOR:e} x initial max"),
            });
        }
    }
    Ok(())
}

/// Monotonized central slope: `minmod(2a, (a + b) / 2, 2b)`.
fn mc_slope(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        return 0.0;
    }
    let m = (2.0 * a.abs()).min(2.0 * b.abs()).min(0.5 * (a + b).abs());
    m.copysign(a)
}

#[derive(Debug, Clone, Copy)]
struct StepInfo {
    clipped_mass: f64,
    max_change: f64,
}

/// Reusable buffers for repeated steps on one grid.
struct Stepper {
    conv: Convolver,
    epsilon: f64,
    max_slope: f64,
    smoothed: Vec<f64>,
    flux: Vec<f64>,
}

impl Stepper {
    fn new(kernel: &Kernel, epsilon: f64, grid: &Grid1D) -> Self {
        Self {
            conv: Convolver::new(kernel, grid),
            epsilon,
            max_slope: kernel.max_abs_derivative(),
            smoothed: vec![0.0; grid.len()],
            flux: vec![0.0; grid.len() + 1],
        }
    }

    fn grid(&self) -> &Grid1D {
        self.conv.grid()
    }

    /// Computes `G * rho` for the current state.
    fn prepare(&mut self, rho: &[f64]) {
        self.conv.apply_into(rho, &mut self.smoothed);
    }

    fn auto_dt(&self, rho: &[f64], mass: f64) -> f64 {
        let max = rho.iter().copied().fold(0.0, f64::max);
        auto_dt_from(self.grid().h(), self.epsilon, self.max_slope, max, mass)
    }

    /// Advances `rho` in place. `prepare` must have been called on the same
    /// values.
    fn advance(&mut self, rho: &mut [f64], dt: f64) -> StepInfo {
        let n = rho.len();
        let h = self.grid().h();
        let eps = self.epsilon;
        // flux[i] sits at interface i - 1/2; flux[0] and flux[n] stay zero
        let slope = |i: usize| {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                mc_slope(rho[i] - rho[i - 1], rho[i + 1] - rho[i])
            }
        };
        for i in 0..n - 1 {
            let dphi = (eps * rho[i + 1] - self.smoothed[i + 1]) - (eps * rho[i] - self.smoothed[i]);
            // material moves down the potential
            let face = if dphi < 0.0 {
                rho[i] + 0.5 * slope(i)
            } else {
                rho[i + 1] - 0.5 * slope(i + 1)
            };
            self.flux[i + 1] = face * dphi / h;
        }
        let ratio = dt / h;
        let mut clipped = 0.0;
        let mut max_change = 0.0f64;
        for i in 0..n {
            let old = rho[i];
            let mut new = old + ratio * (self.flux[i + 1] - self.flux[i]);
            if new < 0.0 {
                let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                clipped -= w * new;
                new = 0.0;
            }
            max_change = max_change.max((new - old).abs());
            rho[i] = new;
        }
        StepInfo {
            clipped_mass: clipped,
            max_change,
        }
    }
}

/// `"auto"` or a fixed positive step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "DtRepr", into = "DtRepr")]
pub enum TimeStep {
    /// Re-evaluate [`auto_dt`] on the current state before every step.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DtRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<DtRepr> for TimeStep {
    type Error = String;

    fn try_from(repr: DtRepr) -> std::result::Result<Self, String> {
        match repr {
            DtRepr::Word(w) if w == "auto" => Ok(TimeStep::Auto),
            DtRepr::Word(w) => Err(format!("dt must be \"auto\" or a number, got {w:?}")),
            DtRepr::Number(x) if x > 0.0 && x.is_finite() => Ok(TimeStep::Fixed(x)),
            DtRepr::Number(x) => Err(format!("dt must be positive, got {x}")),
        }
    }
}

impl From<TimeStep> for DtRepr {
    fn from(dt: TimeStep) -> Self {
        match dt {
            TimeStep::Auto => DtRepr::Word("auto".into()),
            TimeStep::Fixed(x) => DtRepr::Number(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid1D> {
        Grid1D::new(self.a, self.b, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum InitialCondition {
    /// Constant on `[a0, b0]`.
    Uniform { a0: f64, b0: f64 },
    Gaussian { mu: f64, sigma: f64 },
    /// `x,rho` samples, linearly interpolated onto the grid.
    Csv { path: PathBuf },
}

impl InitialCondition {
    /// Samples the initial density; `mass` rescales it (default 1).
    pub fn build(&self, grid: &Grid1D, mass: f64, base_dir: Option<&Path>) -> Result<DensityField> {
        let raw = match self {
            InitialCondition::Uniform { a0, b0 } => {
                if !(a0 < b0) {
                    return Err(Error::InvalidInput(format!("uniform needs a0 < b0, got [{a0}, {b0}]")));
                }
                DensityField::from_fn(*grid, |x| if x >= *a0 && x <= *b0 { 1.0 } else { 0.0 })?
            }
            InitialCondition::Gaussian { mu, sigma } => {
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidInput(format!("gaussian needs sigma > 0, got {sigma}")));
                }
                DensityField::from_fn(*grid, |x| (-0.5 * ((x - mu) / sigma).powi(2)).exp())?
            }
            InitialCondition::Csv { path } => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                DensityField::load_csv(&path)?.resample(grid, 0.0)
            }
        };
        raw.with_unit_mass()?.scaled(mass)
    }
}

/// JSON configuration of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kernel: KernelSpec,
    pub epsilon: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub dt: TimeStep,
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    pub initial_condition: InitialCondition,
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Early-stop threshold on `max |d rho| / dt`; 0 disables early stopping.
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
}

fn default_record_every() -> usize {
    100
}

fn default_mass() -> f64 {
    1.0
}

fn default_steady_tol() -> f64 {
    STEADY_RATE_TOL
}

impl SimConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Rejects invalid settings and returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be >= 1".into()));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidInput(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.steady_tol >= 0.0) {
            return Err(Error::InvalidInput(format!("steady_tol must be >= 0, got {}", self.steady_tol)));
        }
        let grid = self.grid.build()?;
        let mut warnings = Vec::new();
        let (lo, hi) = match &self.initial_condition {
            InitialCondition::Uniform { a0, b0 } => (*a0, *b0),
            InitialCondition::Gaussian { mu, sigma } => (mu - 4.0 * sigma, mu + 4.0 * sigma),
            InitialCondition::Csv { .. } => (grid.a(), grid.b()),
        };
        if lo < grid.a() || hi > grid.b() {
            warnings.push(format!(
                "initial data extends over [{lo}, {hi}], beyond the domain [{}, {}]",
                grid.a(),
                grid.b()
            ));
        }
        if self.epsilon >= 1.0 {
            let reach = self.kernel.sigma.or(self.kernel.scale).unwrap_or(1.0);
            if hi - lo + 8.0 * reach > grid.b() - grid.a() {
                warnings.push("domain may be too narrow: spreading solutions will reach the zero-flux walls".into());
            }
        }
        Ok(warnings)
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            dt: self.dt,
            t_end: self.t_end,
            record_every: self.record_every,
            steady_tol: self.steady_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub dt: TimeStep,
    pub t_end: f64,
    pub record_every: usize,
    pub steady_tol: f64,
}

impl RunOptions {
    pub fn new(t_end: f64) -> Self {
        Self {
            dt: TimeStep::Auto,
            t_end,
            record_every: 100,
            steady_tol: STEADY_RATE_TOL,
        }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn dt(mut self, dt: TimeStep) -> Self {
        self.dt = dt;
        self
    }

    pub fn steady_tol(mut self, tol: f64) -> Self {
        self.steady_tol = tol;
        self
    }
}

/// Diagnostics recorded along a run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    /// Mean position `int x rho / int rho`.
    pub center_of_mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub l2_norm: Vec<f64>,
    /// `max |rho^{j+1} - rho^j| / dt` of the step ending at each record
    /// (infinite at `t = 0`).
    pub rates: Vec<f64>,
    pub final_state: DensityField,
    pub steps: usize,
    pub clipped_mass: f64,
    /// `max |rho^{j+1} - rho^j| / dt` of the last step.
    pub last_rate: f64,
    /// Set when the run stopped before `t_end` because the rate fell below
    /// `steady_tol`.
    pub stopped_early: bool,
}

impl SimTrace {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trace has at least one record")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mass", "com", "energy", "l2"])?;
        for j in 0..self.times.len() {
            w.write_record([
                fmt17(self.times[j]),
                fmt17(self.mass[j]),
                fmt17(self.center_of_mass[j]),
                fmt17(self.energy[j]),
                fmt17(self.l2_norm[j]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

impl fmt::Display for SimTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t = {:.6}, {} steps{}, mass {:.12}, energy {:.10e}, clipped {:.3e}",
            self.final_time(),
            self.steps,
            if self.stopped_early { " (steady)" } else { "" },
            self.mass.last().copied().unwrap_or(0.0),
            self.energy.last().copied().unwrap_or(0.0),
            self.clipped_mass
        )
    }
}

/// Runs a configuration end to end. Relative paths resolve against
/// `base_dir`.
pub fn run(cfg: &SimConfig, base_dir: Option<&Path>) -> Result<SimTrace> {
    cfg.validate()?;
    let (kernel, epsilon) = cfg.kernel.build_with_epsilon(cfg.epsilon, base_dir)?;
    let grid = cfg.grid.build()?;
    let rho0 = cfg.initial_condition.build(&grid, cfg.mass, base_dir)?;
    run_from(&kernel, epsilon, &rho0, &cfg.options())
}

/// Evolves `rho0` to `t_end`, recording every `record_every` steps and at
/// the final time.
pub fn run_from(kernel: &Kernel, epsilon: f64, rho0: &DensityField, opts: &RunOptions) -> Result<SimTrace> {
    if !(opts.t_end > 0.0) || opts.record_every == 0 {
        return Err(Error::InvalidInput("t_end must be > 0 and record_every >= 1".into()));
    }
    let grid = *rho0.grid();
    let mut stepper = Stepper::new(kernel, epsilon, &grid);
    let mut rho = rho0.values().to_vec();
    let initial_max = rho0.max();
    let mass0 = rho0.mass();

    let mut trace = Recorder::default();
    let mut t = 0.0;
    let mut steps = 0;
    let mut clipped = 0.0;
    let mut last_rate = f64::INFINITY;
    let mut stopped_early = false;
    let t_stop = opts.t_end * (1.0 - 1e-14);

    stepper.prepare(&rho);
    loop {
        let done = t >= t_stop || stopped_early;
        if steps % opts.record_every == 0 || done {
            trace.record(&grid, epsilon, t, &rho, &stepper.smoothed, last_rate);
        }
        if done {
            break;
        }
        let mut dt = match opts.dt {
            TimeStep::Auto => stepper.auto_dt(&rho, mass0),
            TimeStep::Fixed(dt) => dt,
        };
        dt = dt.min(opts.t_end - t);
        let info = stepper.advance(&mut rho, dt);
        steps += 1;
        t += dt;
        check_bounds(&rho, initial_max, steps)?;
        clipped += info.clipped_mass;
        last_rate = info.max_change / dt;
        if last_rate < opts.steady_tol {
            stopped_early = true;
        }
        stepper.prepare(&rho);
    }
    if clipped > CLIP_TOL * mass0.abs().max(ZERO_CLIP_FLOOR) {
        return Err(Error::Instability {
            step: steps,
            reason: format!("clipped mass {clipped:e} exceeds {CLIP_TOL:e} of the total"),
        });
    }
    let final_state = DensityField::new(grid, rho)?;
    Ok(trace.finish(final_state, steps, clipped, last_rate, stopped_early))
}

const ZERO_CLIP_FLOOR: f64 = 1e-300;

#[derive(Default)]
struct Recorder {
    times: Vec<f64>,
    mass: Vec<f64>,
    com: Vec<f64>,
    energy: Vec<f64>,
    l2: Vec<f64>,
    rates: Vec<f64>,
}

impl Recorder {
    fn record(&mut self, grid: &Grid1D, epsilon: f64, t: f64, rho: &[f64], smoothed: &[f64], rate: f64) {
        let e = energy_from_parts(grid, epsilon, rho, smoothed);
        let mass = crate::grid::quadrature(grid, rho);
        let moment: Vec<f64> = rho.iter().enumerate().map(|(i, v)| grid.node(i) * v).collect();
        let first = crate::grid::quadrature(grid, &moment);
        self.times.push(t);
        self.rates.push(rate);
        self.mass.push(mass);
        self.com.push(if mass.abs() > 0.0 { first / mass } else { 0.0 });
        self.energy.push(e.total);
        let sq: Vec<f64> = rho.iter().map(|v| v * v).collect();
        self.l2.push(crate::grid::quadrature(grid, &sq).sqrt());
    }

    fn finish(self, final_state: DensityField, steps: usize, clipped: f64, last_rate: f64, stopped_early: bool) -> SimTrace {
        SimTrace {
            times: self.times,
            mass: self.mass,
            center_of_mass: self.com,
            energy: self.energy,
            l2_norm: self.l2,
            rates: self.rates,
            final_state,
            steps,
            clipped_mass: clipped,
            last_rate,
            stopped_early,
        }
    }
}
