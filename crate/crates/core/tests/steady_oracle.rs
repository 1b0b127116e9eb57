mod common;

use aggdiff::energy::{energy, steady_constant};
use aggdiff::steady::{epsilon_of_l_curve, log_spaced, solve_for_epsilon, HalfSupportProblem};
use aggdiff::Kernel;
use common::{dense_spectrum, max_abs_diff, sign_changes};

#[test]
fn power_iteration_matches_dense_spectrum() {
    for kernel in [Kernel::gaussian(1.0).unwrap(), Kernel::laplace(1.0).unwrap()] {
        for l in [0.5, 2.0, 8.0] {
            let r = HalfSupportProblem::new(&kernel, l, 200).unwrap().leading_eigenpair().unwrap();
            let dense = dense_spectrum(&kernel, l, 200);
            assert!((r.epsilon - dense.eigenvalues[0]).abs() <= 1e-10, "L = {l}");
            assert!(max_abs_diff(&r.u, &dense.leading) <= 1e-8, "L = {l}");
            let lambda2 = r.lambda2.unwrap();
            assert!((lambda2 - dense.eigenvalues[1]).abs() <= 1e-6 * r.epsilon, "L = {l}: {lambda2} vs {}", dense.eigenvalues[1]);
            assert!(r.epsilon - lambda2.abs() > 0.0);
        }
    }
}

#[test]
fn cone_iterates_stay_nonnegative() {
    let k = Kernel::laplace(0.5).unwrap();
    let p = HalfSupportProblem::new(&k, 3.0, 120).unwrap();
    let mut u = p.default_start();
    for _ in 0..50 {
        u = p.apply_h(&u).unwrap();
        assert!(u.iter().all(|v| *v >= 0.0));
        assert_eq!(u[0], 0.0);
        let max = u.iter().copied().fold(0.0, f64::max);
        u.iter_mut().for_each(|v| *v /= max);
    }
}

#[test]
fn laplace_curve_is_monotone_with_limits() {
    let k = Kernel::laplace(1.0).unwrap();
    let curve = epsilon_of_l_curve(&k, &log_spaced(0.01, 20.0, 50), 400).unwrap();
    assert!(curve.windows(2).all(|w| w[1].epsilon > w[0].epsilon));
    assert!(curve[0].epsilon < 1e-3);
    assert!(curve.iter().all(|c| c.epsilon < 1.0));
    assert!(curve[49].epsilon > 0.9);
}

#[test]
fn steady_constant_is_twice_the_energy() {
    let k = Kernel::gaussian(1.0).unwrap();
    for eps in [0.25, 0.5, 0.75] {
        let r = solve_for_epsilon(&k, eps, 400).unwrap();
        let c = steady_constant(&k, eps, &r.rho, r.support()).unwrap();
        let e = energy(&k, eps, &r.rho).total;
        assert!((c.value - 2.0 * e).abs() <= 1e-4, "eps = {eps}: {} vs {}", c.value, 2.0 * e);
        assert!(c.value < 0.0);
    }
}

#[test]
fn profiles_are_bell_shaped_at_moderate_epsilon() {
    let k = Kernel::gaussian(1.0).unwrap();
    for eps in [0.25, 0.5, 0.75] {
        let r = solve_for_epsilon(&k, eps, 400).unwrap();
        let v = r.rho.values();
        let d2: Vec<f64> = (1..v.len() - 1).map(|i| v[i + 1] - 2.0 * v[i] + v[i - 1]).collect();
        assert_eq!(sign_changes(&d2), 2, "eps = {eps}");
    }
}

#[test]
fn laplace_steady_state_has_expected_structure() {
    let k = Kernel::laplace(1.0).unwrap();
    let r = solve_for_epsilon(&k, 0.5, 400).unwrap();
    assert!((r.epsilon - 0.5).abs() <= 1e-8);
    assert!((r.rho.mass() - 1.0).abs() <= 1e-10);
    let c = steady_constant(&k, 0.5, &r.rho, r.support()).unwrap();
    assert!(c.max_deviation <= 1e-5 * r.rho.max(), "{}", c.max_deviation / r.rho.max());
}
