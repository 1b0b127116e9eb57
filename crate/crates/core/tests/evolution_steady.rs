use aggdiff::evolution::{auto_dt, run_from, step, RunOptions, TimeStep};
use aggdiff::steady::solve_for_epsilon;
use aggdiff::verify::{check_support_connected, SUPPORT_THRESHOLD};
use aggdiff::{DensityField, Grid1D, Kernel};

fn steady_on_grid(kernel: &Kernel, eps: f64, grid: Grid1D) -> DensityField {
    let r = solve_for_epsilon(kernel, eps, 400).unwrap();
    r.rho.resample(&grid, 0.0)
}

#[test]
fn eigen_state_is_a_fixed_point_of_the_scheme() {
    let k = Kernel::gaussian(1.0).unwrap();
    let grid = Grid1D::symmetric(10.0, 800).unwrap();
    let rho = steady_on_grid(&k, 0.5, grid);
    let dt = auto_dt(&k, 0.5, &rho);
    let out = step(&k, 0.5, &rho, dt).unwrap();
    assert!(out.max_change <= 1e-6 * rho.max(), "{}", out.max_change / rho.max());
    assert_eq!(out.clipped_mass, 0.0);
}

#[test]
fn steady_start_keeps_energy_constant() {
    let k = Kernel::gaussian(1.0).unwrap();
    let grid = Grid1D::symmetric(10.0, 400).unwrap();
    let rho = steady_on_grid(&k, 0.5, grid);
    let trace = run_from(&k, 0.5, &rho, &RunOptions::new(2.0).record_every(50).steady_tol(0.0)).unwrap();
    let e0 = trace.energy[0];
    for e in &trace.energy {
        assert!((e - e0).abs() <= 1e-8, "{e} vs {e0}");
    }
}

#[test]
fn two_bumps_merge_into_one_component() {
    let k = Kernel::gaussian(1.0).unwrap();
    let grid = Grid1D::symmetric(10.0, 400).unwrap();
    let rho0 = DensityField::from_fn(grid, |x| {
        (-0.5 * ((x - 1.5) / 0.3).powi(2)).exp() + (-0.5 * ((x + 1.5) / 0.3).powi(2)).exp()
    })
    .unwrap()
    .with_unit_mass()
    .unwrap();
    assert!(!check_support_connected(&rho0.shifted(0), 0.5).passed);
    let trace = run_from(&k, 0.5, &rho0, &RunOptions::new(40.0).record_every(1 << 20)).unwrap();
    assert!(check_support_connected(&trace.final_state, SUPPORT_THRESHOLD).passed);
}

#[test]
fn supercritical_runs_spread() {
    let k = Kernel::gaussian(1.0).unwrap();
    let grid = Grid1D::symmetric(20.0, 400).unwrap();
    let rho0 = DensityField::from_fn(grid, |x| (-0.5 * (x / 0.3).powi(2)).exp()).unwrap().with_unit_mass().unwrap();
    let trace = run_from(&k, 1.5, &rho0, &RunOptions::new(20.0).record_every(100).steady_tol(0.0)).unwrap();
    assert!(trace.l2_norm.windows(2).all(|w| w[1] < w[0]));
    assert!(trace.l2_norm.last().unwrap() < &(0.6 * trace.l2_norm[0]));
}

#[test]
fn explicit_step_above_the_bound_is_not_accepted() {
    // well beyond the parabolic limit the run either blows up or loses mass
    let k = Kernel::gaussian(1.0).unwrap();
    let grid = Grid1D::symmetric(5.0, 200).unwrap();
    let rho0 = DensityField::from_fn(grid, |x| (1.0 - x * x).max(0.0)).unwrap().with_unit_mass().unwrap();
    let dt = 20.0 * auto_dt(&k, 0.5, &rho0);
    let result = run_from(&k, 0.5, &rho0, &RunOptions::new(500.0 * dt).dt(TimeStep::Fixed(dt)).steady_tol(0.0));
    assert!(matches!(result, Err(aggdiff::Error::Instability { .. })), "{:?}", result.map(|t| t.clipped_mass));
}
