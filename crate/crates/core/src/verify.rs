//! Executable property checks on steady states and evolution runs.
//!
//! Every check produces a [`CheckReport`]; failures are recorded, never
//! thrown.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{energy, steady_constant};
use crate::evolution::{run_from, RunOptions};
use crate::grid::{DensityField, Grid1D};
use crate::kernels::Kernel;
use crate::steady::{solve_for_epsilon, EigenResult, HalfSupportProblem, PowerOptions};

/// Default relative threshold for [`check_support_connected`].
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

const NONEXISTENCE_NOTE: &str = "nonexistence is certified behaviorally (monotone L2 decay, no steady plateau); \
     a finite computation cannot prove it";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    /// The property this check certifies.
    #[serde(rename = "paper_ref")]
    pub certifies: String,
    pub details: String,
}

impl CheckReport {
    fn new(id: impl Into<String>, passed: bool, measured: f64, tolerance: f64, certifies: &str) -> Self {
        Self {
            check_id: id.into(),
            passed,
            measured,
            tolerance,
            certifies: certifies.to_string(),
            details: String::new(),
        }
    }

    /// Passes when `measured <= tolerance`.
    fn at_most(id: impl Into<String>, measured: f64, tolerance: f64, certifies: &str) -> Self {
        Self::new(id, measured <= tolerance, measured, tolerance, certifies)
    }

    fn details(mut self, details: impl Into<String>) -> Self {
        self.details = details.into();
        self
    }

    fn failed(id: impl Into<String>, certifies: &str, details: impl Into<String>) -> Self {
        Self::new(id, false, f64::NAN, f64::NAN, certifies).details(details)
    }
}

/// Settings for the evolution runs behind [`check_threshold`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSettings {
    /// Grid cells of the evolution runs.
    pub n: usize,
    /// Intervals on `[0, L]` for the eigen-solver.
    pub m: usize,
    /// Half width and end time of the runs with `eps < 1`.
    pub existence_domain: f64,
    pub existence_t_end: f64,
    /// Half width, end time and initial width of the runs with `eps >= 1`.
    pub decay_domain: f64,
    pub decay_t_end: f64,
    pub decay_sigma: f64,
    /// Allowed L1 distance between evolution limit and eigen-state.
    pub l1_tol: f64,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        Self {
            n: 800,
            m: 400,
            existence_domain: 10.0,
            existence_t_end: 200.0,
            decay_domain: 20.0,
            decay_t_end: 50.0,
            decay_sigma: 0.3,
            l1_tol: 2e-2,
        }
    }
}

/// Existence below the threshold and decay at or above it.
pub fn check_threshold(kernel: &Kernel, epsilons: &[f64], settings: &ThresholdSettings) -> Vec<CheckReport> {
    let mut reports: Vec<CheckReport> = epsilons
        .par_iter()
        .map(|&eps| {
            if eps < 1.0 {
                existence_check(kernel, eps, settings)
            } else {
                decay_check(kernel, eps, settings)
            }
        })
        .collect();
    reports.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    reports
}

fn gaussian_bump(grid: Grid1D, mu: f64, sigma: f64) -> crate::Result<DensityField> {
    DensityField::from_fn(grid, |x| (-0.5 * ((x - mu) / sigma).powi(2)).exp())?.with_unit_mass()
}

/// L1 distance between `rho` and the eigen-state re-centered at the center
/// of mass of `rho`.
pub fn centered_l1_distance(rho: &DensityField, steady: &EigenResult) -> crate::Result<f64> {
    let com = rho.mean_position()?;
    let moved = steady.rho.resample(rho.grid(), -com);
    rho.l1_distance(&moved)
}

fn existence_check(kernel: &Kernel, eps: f64, s: &ThresholdSettings) -> CheckReport {
    const CERT: &str = "a unique steady state with unit mass and zero center of mass exists for 0 < eps < ||G||_1";
    let id = format!("threshold.existence.eps={eps:.2}");
    let steady = match solve_for_epsilon(kernel, eps, s.m) {
        Ok(r) => r,
        Err(e) => return CheckReport::failed(id, CERT, format!("eigen-solver failed: {e}")),
    };
    let outcome = Grid1D::symmetric(s.existence_domain, s.n)
        .and_then(|g| gaussian_bump(g, 0.0, 1.0))
        .and_then(|rho0| run_from(kernel, eps, &rho0, &RunOptions::new(s.existence_t_end).record_every(1 << 20)))
        .and_then(|trace| Ok((centered_l1_distance(&trace.final_state, &steady)?, trace)));
    match outcome {
        Ok((dist, trace)) => CheckReport::at_most(id, dist, s.l1_tol, CERT).details(format!(
            "L = {:.6}, eps(L) = {:.10}; evolution to t = {} on [-{}, {}], n = {}: centered L1 distance to the eigen-state",
            steady.length,
            steady.epsilon,
            trace.final_time(),
            s.existence_domain,
            s.existence_domain,
            s.n
        )),
        Err(e) => CheckReport::failed(id, CERT, format!("evolution failed: {e}")),
    }
}

fn decay_check(kernel: &Kernel, eps: f64, s: &ThresholdSettings) -> CheckReport {
    const CERT: &str = "no steady state exists for eps >= ||G||_1; solutions spread";
    const PLATEAU: f64 = 1e-4;
    let id = format!("threshold.nonexistence.eps={eps:.2}");
    let refused = matches!(
        solve_for_epsilon(kernel, eps, s.m),
        Err(crate::Error::EpsilonOutOfRange { .. })
    );
    let trace = Grid1D::symmetric(s.decay_domain, s.n)
        .and_then(|g| gaussian_bump(g, 0.0, s.decay_sigma))
        .and_then(|rho0| run_from(kernel, eps, &rho0, &RunOptions::new(s.decay_t_end).record_every(200).steady_tol(0.0)));
    let trace = match trace {
        Ok(t) => t,
        Err(e) => return CheckReport::failed(id, CERT, format!("evolution failed: {e}")),
    };
    let monotone = trace.l2_norm.windows(2).all(|w| w[1] < w[0]);
    let min_rate = trace.rates.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = trace.l2_norm.last().unwrap() / trace.l2_norm[0];
    let passed = refused && monotone && min_rate >= PLATEAU && ratio < 0.5;
    CheckReport::new(id, passed, ratio, 0.5, CERT).details(format!(
        "final/initial L2 = {ratio:.4} at t = {}; L2 strictly decreasing: {monotone}; \
         smallest max|d rho/dt| = {min_rate:.3e} (plateau below {PLATEAU:e}); eigen-solver refused: {refused}; {NONEXISTENCE_NOTE}",
        trace.final_time()
    ))
}

/// Shape properties of a converged steady state.
pub fn check_steady_shape(result: &EigenResult, kernel: &Kernel) -> Vec<CheckReport> {
    const SHAPE: &str = "the steady state is symmetric, decreasing on x > 0, compactly supported on [-L, L] with maximum at 0";
    let tag = format!("eps={:.2}", result.epsilon);
    let rho = &result.rho;
    let v = rho.values();
    let n = v.len() - 1;
    let m = result.m;
    let mut out = Vec::new();

    let asym = (0..=n).map(|i| (v[i] - v[n - i]).abs()).fold(0.0, f64::max);
    out.push(CheckReport::at_most(format!("shape.symmetry.{tag}"), asym, 1e-12, SHAPE));

    let rise = v[m..].windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    out.push(CheckReport::at_most(format!("shape.monotone.{tag}"), rise, 1e-14, SHAPE).details("largest increase on [0, L]"));

    let edge = v[0].abs().max(v[n].abs());
    out.push(CheckReport::new(format!("shape.compact_support.{tag}"), edge == 0.0, edge, 0.0, SHAPE).details("rho(-L) and rho(L)"));

    let argmax = (0..=n).fold(0, |best, i| if v[i] > v[best] { i } else { best });
    out.push(
        CheckReport::new(format!("shape.max_at_origin.{tag}"), argmax == m, (argmax as f64 - m as f64) * rho.grid().h(), 0.0, SHAPE)
            .details("offset of the first maximum from x = 0"),
    );

    if kernel.is_c2() {
        let d2 = (v[m + 1] - 2.0 * v[m] + v[m - 1]) / rho.grid().h().powi(2);
        out.push(
            CheckReport::new(format!("shape.curvature_at_origin.{tag}"), d2 < 0.0, d2, 0.0, "rho''(0) < 0 for C2 kernels")
                .details("centered second difference at x = 0 must be negative"),
        );
    }

    out.push(CheckReport::at_most(format!("shape.unit_mass.{tag}"), (rho.mass() - 1.0).abs(), 1e-10, "steady states have unit mass"));
    let com = rho.center_of_mass().unwrap_or(f64::NAN).abs();
    out.push(CheckReport::at_most(format!("shape.center_of_mass.{tag}"), com, 1e-10, "steady states have zero center of mass"));

    out.extend(steady_equation_checks(result, kernel, &tag));
    out.push(uniqueness_check(result, kernel, &tag));

    if kernel.is_c2() && result.epsilon < 0.05 {
        let h2 = rho.grid().h().powi(2);
        let worst = (1..n).map(|i| (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2).fold(f64::NEG_INFINITY, f64::max);
        let worst_raw = (1..n).map(|i| v[i + 1] - 2.0 * v[i] + v[i - 1]).fold(f64::NEG_INFINITY, f64::max);
        out.push(
            CheckReport::at_most(format!("shape.concave.{tag}"), worst_raw, 1e-10, "small eps gives a concave steady state")
                .details(format!("largest second difference on [-L, L] (scaled by 1/h^2: {worst:.3e})")),
        );
    }
    out.push(check_support_connected(rho, SUPPORT_THRESHOLD).renamed(format!("support.connected.steady.{tag}")));
    out
}

impl CheckReport {
    fn renamed(mut self, id: String) -> Self {
        self.check_id = id;
        self
    }
}

fn steady_equation_checks(result: &EigenResult, kernel: &Kernel, tag: &str) -> Vec<CheckReport> {
    let rho = &result.rho;
    let eps = result.epsilon;
    let c = match steady_constant(kernel, eps, rho, result.support()) {
        Ok(c) => c,
        Err(e) => return vec![CheckReport::failed(format!("steady.equation.{tag}"), "steady equation", e.to_string())],
    };
    let e = energy(kernel, eps, rho);
    let max = rho.max();
    vec![
        CheckReport::at_most(
            format!("steady.equation.{tag}"),
            c.max_deviation / max,
            1e-6,
            "eps rho - G * rho is constant on the support",
        )
        .details(format!("max |eps rho - G*rho - C| / max rho with C = {:.12}", c.value)),
        CheckReport::at_most(
            format!("steady.constant_is_twice_energy.{tag}"),
            (c.value - 2.0 * e.total).abs(),
            1e-4,
            "the steady-state constant equals twice the energy",
        )
        .details(format!("C = {:.12}, 2E = {:.12}", c.value, 2.0 * e.total)),
        CheckReport::new(format!("steady.constant_negative.{tag}"), c.value < 0.0, c.value, 0.0, "the steady-state constant is negative"),
    ]
}

/// Power iteration from two mirrored starting iterates must land on the same
/// profile.
fn uniqueness_check(result: &EigenResult, kernel: &Kernel, tag: &str) -> CheckReport {
    const CERT: &str = "the leading eigenvalue is simple with the only eigenvector in the cone";
    let id = format!("steady.unique_eigenvector.{tag}");
    let problem = match HalfSupportProblem::new(kernel, result.length, result.m) {
        Ok(p) => p,
        Err(e) => return CheckReport::failed(id, CERT, e.to_string()),
    };
    let l = result.length;
    let skewed: Vec<f64> = problem.nodes().iter().map(|&x| x * (l - x) * (1.0 + x / l)).collect();
    let mirrored: Vec<f64> = problem.nodes().iter().map(|&x| x * (l - x) * (2.0 - x / l)).collect();
    let opts = PowerOptions {
        second_eigenvalue: false,
        ..PowerOptions::default()
    };
    let solve = |start: &[f64]| problem.leading_eigenpair_with(start, &opts);
    match (solve(&skewed), solve(&mirrored)) {
        (Ok(a), Ok(b)) => {
            let diff = a
                .rho
                .values()
                .iter()
                .zip(b.rho.values())
                .chain(a.rho.values().iter().zip(result.rho.values()))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            let gap = result.lambda2.map(|l2| result.epsilon - l2.abs());
            let simple = gap.is_none_or(|g| g > 0.0);
            CheckReport::new(id, diff <= 1e-12 && simple, diff, 1e-12, CERT).details(format!(
                "max |rho_a - rho_b| over mirrored starts and the default start; spectral gap eps - |lambda2| = {}",
                gap.map_or("not computed".to_string(), |g| format!("{g:.6e}"))
            ))
        }
        (Err(e), _) | (_, Err(e)) => CheckReport::failed(id, CERT, e.to_string()),
    }
}

/// `{i : rho_i > threshold * max rho}` must be one contiguous run.
pub fn check_support_connected(rho: &DensityField, threshold: f64) -> CheckReport {
    const CERT: &str = "the support of a steady state is connected";
    let cut = threshold * rho.max();
    let inside: Vec<usize> = (0..rho.values().len()).filter(|&i| rho.values()[i] > cut).collect();
    let (components, gaps) = match (inside.first(), inside.last()) {
        (Some(&lo), Some(&hi)) => {
            let gaps = inside.windows(2).filter(|w| w[1] != w[0] + 1).count();
            (gaps + 1, (hi - lo + 1) - inside.len())
        }
        _ => (0, 0),
    };
    CheckReport::new("support.connected", components == 1, components as f64, 1.0, CERT).details(format!(
        "{components} component(s) above {threshold:e} x max; {gaps} interior node(s) below the threshold"
    ))
}

/// The steady state has lower energy than `count` seeded competitors with
/// unit mass on the same support.
pub fn check_minimizer(result: &EigenResult, kernel: &Kernel, count: usize, seed: u64) -> CheckReport {
    const CERT: &str = "the steady state is the global energy minimizer";
    let id = format!("steady.minimizer.eps={:.2}", result.epsilon);
    let eps = result.epsilon;
    let rho = &result.rho;
    let grid = *rho.grid();
    let e0 = energy(kernel, eps, rho).total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = result.length;
    let mut margin = f64::INFINITY;
    for k in 0..count {
        let competitor = if k % 2 == 0 {
            // smooth multiplicative perturbation of the steady state
            let (a, f, p) = (rng.gen_range(0.02..0.3), rng.gen_range(0.5..4.0), rng.gen_range(0.0..std::f64::consts::TAU));
            let values: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(rho.values())
                .map(|(x, r)| r * (1.0 + a * (f * std::f64::consts::PI * x / l + p).sin()))
                .collect();
            DensityField::new(grid, values)
        } else {
            // a few random bumps clipped to the support
            let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..4))
                .map(|_| (rng.gen_range(-l..l), rng.gen_range(0.1..1.0) * l, rng.gen_range(0.2..1.0)))
                .collect();
            DensityField::from_fn(grid, |x| {
                if x.abs() >= l {
                    return 0.0;
                }
                bumps.iter().map(|(c, w, a)| a * (1.0 - ((x - c) / w).powi(2)).max(0.0)).sum::<f64>()
            })
        };
        let e = competitor
            .and_then(|c| c.with_unit_mass())
            .map(|c| energy(kernel, eps, &c).total);
        match e {
            Ok(e) => margin = margin.min(e - e0),
            Err(err) => return CheckReport::failed(id, CERT, err.to_string()),
        }
    }
    CheckReport::new(id, margin >= 0.0, margin, 0.0, CERT)
        .details(format!("min over {count} competitors (seed {seed}) of E[competitor] - E[steady], E[steady] = {e0:.12}"))
}

/// Two bumps evolve into one connected state.
pub fn check_bumps_merge(kernel: &Kernel, eps: f64, n: usize, t_end: f64) -> CheckReport {
    let id = format!("support.connected.evolution.eps={eps:.2}");
    let run = Grid1D::symmetric(10.0, n)
        .and_then(|g| {
            DensityField::from_fn(g, |x| (-0.5 * ((x - 1.5) / 0.3).powi(2)).exp() + (-0.5 * ((x + 1.5) / 0.3).powi(2)).exp())?
                .with_unit_mass()
        })
        .and_then(|rho0| run_from(kernel, eps, &rho0, &RunOptions::new(t_end).record_every(1 << 20)));
    match run {
        Ok(trace) => check_support_connected(&trace.final_state, SUPPORT_THRESHOLD)
            .renamed(id)
            .details_prefix(format!("two bumps at +-1.5, t = {}: ", trace.final_time())),
        Err(e) => CheckReport::failed(id, "the support of a steady state is connected", e.to_string()),
    }
}

impl CheckReport {
    fn details_prefix(mut self, prefix: String) -> Self {
        self.details = prefix + &self.details;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Gaussian kernel, eps in {0.02, 0.25, 0.5, 0.75, 1.0, 1.5}, n = 800.
    Full,
    /// Coarse grids and short runs for smoke testing.
    Quick,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Suite::Full),
            "quick" => Ok(Suite::Quick),
            other => Err(format!("unknown suite {other:?} (expected full or quick)")),
        }
    }
}

struct SuitePlan {
    epsilons: &'static [f64],
    threshold: ThresholdSettings,
    /// Intervals on `[0, L]` for the shape checks.
    shape_m: usize,
    merge_n: usize,
    merge_t_end: f64,
}

impl Suite {
    fn plan(self) -> SuitePlan {
        match self {
            Suite::Full => SuitePlan {
                epsilons: &[0.02, 0.25, 0.5, 0.75, 1.0, 1.5],
                threshold: ThresholdSettings::default(),
                shape_m: 800,
                merge_n: 800,
                merge_t_end: 100.0,
            },
            Suite::Quick => SuitePlan {
                epsilons: &[0.5, 1.5],
                threshold: ThresholdSettings {
                    n: 200,
                    existence_t_end: 60.0,
                    decay_t_end: 20.0,
                    ..ThresholdSettings::default()
                },
                shape_m: 800,
                merge_n: 200,
                merge_t_end: 30.0,
            },
        }
    }
}

/// Runs every check of a suite with the Gaussian kernel; reports are sorted
/// by `check_id`.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckReport> {
    let kernel = Kernel::gaussian(1.0).expect("unit Gaussian is valid");
    let plan = suite.plan();
    let existence: Vec<f64> = plan.epsilons.iter().copied().filter(|e| *e < 1.0).collect();

    let (mut reports, rest) = rayon::join(
        || check_threshold(&kernel, plan.epsilons, &plan.threshold),
        || {
            let mut out: Vec<CheckReport> = existence
                .par_iter()
                .flat_map_iter(|&eps| match solve_for_epsilon(&kernel, eps, plan.shape_m) {
                    Ok(r) => {
                        let mut v = check_steady_shape(&r, &kernel);
                        v.push(check_minimizer(&r, &kernel, 50, seed));
                        v
                    }
                    Err(e) => vec![CheckReport::failed(
                        format!("shape.eps={eps:.2}"),
                        "a steady state exists for eps < ||G||_1",
                        e.to_string(),
                    )],
                })
                .collect();
            out.push(check_bumps_merge(&kernel, 0.5, plan.merge_n, plan.merge_t_end));
            out.push(two_bump_counterexample());
            out
        },
    );
    reports.extend(rest);
    reports.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    reports
}

/// The connectivity check must reject a density with two separated bumps.
fn two_bump_counterexample() -> CheckReport {
    let grid = Grid1D::symmetric(5.0, 200).expect("valid grid");
    let rho = DensityField::from_fn(grid, |x| (1.0 - (x.abs() - 2.0).powi(2)).max(0.0)).expect("nonnegative");
    let inner = check_support_connected(&rho, SUPPORT_THRESHOLD);
    CheckReport::new(
        "support.connected.detects_two_bumps",
        !inner.passed,
        inner.measured,
        1.0,
        "the connectivity check rejects disconnected supports",
    )
    .details(inner.details)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_serializes_with_expected_keys() {
        let r = CheckReport::at_most("x", 0.5, 1.0, "prop").details("d");
        let json = serde_json::to_value(&r).unwrap();
        for key in ["check_id", "passed", "measured", "tolerance", "paper_ref", "details"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["paper_ref"], "prop");
        assert!(r.passed);
    }

    #[test]
    fn connected_support_detection() {
        let grid = Grid1D::symmetric(5.0, 200).unwrap();
        let one = DensityField::from_fn(grid, |x| (1.0 - x * x).max(0.0)).unwrap();
        assert!(check_support_connected(&one, SUPPORT_THRESHOLD).passed);
        assert!(two_bump_counterexample().passed);
        let zero = DensityField::zeros(grid);
        assert!(!check_support_connected(&zero, SUPPORT_THRESHOLD).passed);
    }

    #[test]
    fn steady_shape_checks_pass_for_moderate_epsilon() {
        let k = Kernel::gaussian(1.0).unwrap();
        let r = solve_for_epsilon(&k, 0.5, 400).unwrap();
        let reports = check_steady_shape(&r, &k);
        for rep in &reports {
            assert!(rep.passed, "{rep:?}");
        }
        assert!(reports.iter().any(|r| r.check_id.starts_with("shape.curvature_at_origin")));
        assert!(!reports.iter().any(|r| r.check_id.starts_with("shape.concave")));
        assert!(check_minimizer(&r, &k, 50, 42).passed);
    }

    #[test]
    fn laplace_skips_curvature() {
        let k = Kernel::laplace(1.0).unwrap();
        let r = solve_for_epsilon(&k, 0.02, 200).unwrap();
        let reports = check_steady_shape(&r, &k);
        assert!(!reports.iter().any(|r| r.check_id.contains("curvature") || r.check_id.contains("concave")));
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("full".parse::<Suite>().unwrap(), Suite::Full);
        assert_eq!("quick".parse::<Suite>().unwrap(), Suite::Quick);
        assert!("fast".parse::<Suite>().is_err());
    }
}
