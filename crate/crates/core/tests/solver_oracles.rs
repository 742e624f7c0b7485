use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ssc_core::oracle::{
    brute_force_min_l1, check_swap, construct_swap_instance, construct_swap_instance_with,
    nearest_each_side, planar_neighbour_instance, random_subspace_instance, support_solve,
    verify_prop_monotonicity, ProbeFamily, SwapCandidate,
};
use ssc_core::solvers::{
    lasso_objective, solve_bp_noiseless, solve_bpdn, solve_lasso, solve_omp, PenaltyForm,
};
use ssc_core::SolverSettings;

fn l1(c: &DVector<f64>) -> f64 {
    c.iter().map(|v| v.abs()).sum()
}

#[test]
fn bp_matches_brute_force_on_small_instances() {
    let settings = SolverSettings::default();
    for seed in 0..50u64 {
        let n = 6 + (seed % 7) as usize;
        let d = 2 + (seed % 2) as usize;
        let inst = random_subspace_instance(seed, n, 5, d).unwrap();
        let sol = solve_bp_noiseless(&inst.dictionary, &inst.target, &settings).unwrap();
        let report = brute_force_min_l1(&inst.dictionary, &inst.target, d).unwrap();
        let gap = (sol.l1_norm() - report.oracle_value).abs();
        assert!(gap <= 1e-6, "seed {seed}: bp {} vs oracle {}", sol.l1_norm(), report.oracle_value);
        assert!(sol.residual_norm <= 1e-6);
    }
}

#[test]
fn spec_instance_n10_m4_d2() {
    let inst = random_subspace_instance(7, 11, 4, 2).unwrap();
    let sol = solve_bp_noiseless(&inst.dictionary, &inst.target, &SolverSettings::default()).unwrap();
    let report = brute_force_min_l1(&inst.dictionary, &inst.target, 2).unwrap();
    assert_eq!(report.oracle_support.len(), 2);
    assert!((sol.l1_norm() - report.oracle_value).abs() <= 1e-6);
}

#[test]
fn bpdn_small_lambda_approaches_bp() {
    for seed in 0..10u64 {
        let inst = random_subspace_instance(100 + seed, 9, 6, 3).unwrap();
        let bp = solve_bp_noiseless(&inst.dictionary, &inst.target, &SolverSettings::default()).unwrap();
        let settings = SolverSettings::default().with_lambda(1e-10);
        let dn = solve_bpdn(&inst.dictionary, &inst.target, &settings).unwrap();
        assert!((bp.l1_norm() - dn.l1_norm()).abs() <= 1e-4, "seed {seed}");
        assert!(dn.residual_norm * dn.residual_norm <= 1e-10 + 1e-6);
    }
}

#[test]
fn bpdn_is_feasible_and_beats_support_solves() {
    let lambda = 0.01;
    for seed in 0..20u64 {
        let inst = random_subspace_instance(200 + seed, 10, 6, 3).unwrap();
        let settings = SolverSettings::default().with_lambda(lambda);
        let sol = solve_bpdn(&inst.dictionary, &inst.target, &settings).unwrap();
        assert!(sol.residual_norm.powi(2) <= lambda + 1e-6);
        // Any exact representation is feasible, so it cannot beat the optimum.
        let exact = brute_force_min_l1(&inst.dictionary, &inst.target, 3).unwrap();
        assert!(sol.l1_norm() <= exact.oracle_value + 1e-9);
    }
}

/// Subgradient method on the unsquared lasso, tracking the best iterate.
fn subgradient_reference(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, iters: usize) -> f64 {
    let obj = |c: &DVector<f64>| lasso_objective(x, y, c, lambda, PenaltyForm::Unsquared);
    let mut c = DVector::zeros(x.ncols());
    let mut best = obj(&c);
    for k in 0..iters {
        let r = x * &c - y;
        let rn = r.norm();
        let mut g = c.map(|v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
        if rn > 1e-14 {
            g += x.tr_mul(&r) * (lambda / rn);
        }
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        // Geometric decay from 0.1 down to 1e-7 over the run.
        let step = 0.1 * (1e-6f64).powf(k as f64 / iters as f64);
        c -= g * (step / gn);
        best = best.min(obj(&c));
    }
    best
}

#[test]
fn unsquared_lasso_matches_subgradient_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..3 {
        let x = DMatrix::from_fn(5, 8, |_, _| StandardNormal.sample(&mut rng));
        let x = ssc_core::linalg::normalize_columns(&x).unwrap().data().clone();
        let y: DVector<f64> = DVector::from_fn(5, |_, _| rng.random::<f64>() - 0.5);
        let y = &y / y.norm();
        let lambda = 2.0 + trial as f64;
        let settings = SolverSettings::default().with_lambda(lambda);
        let sol = solve_lasso(&x, &y, &settings, PenaltyForm::Unsquared).unwrap();
        let ours = lasso_objective(&x, &y, &sol.coefficients, lambda, PenaltyForm::Unsquared);
        let reference = subgradient_reference(&x, &y, lambda, 200_000);
        assert!(ours <= reference + 1e-9, "trial {trial}: {ours} vs {reference}");
        assert!(reference - ours <= 1e-4, "trial {trial}: {ours} vs {reference}");
    }
}

/// Cyclic coordinate descent on `‖c‖₁ + λ‖Xc − y‖²`.
fn coordinate_descent_squared(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = x.ncols();
    let mut c = DVector::<f64>::zeros(n);
    let mut r = y.clone();
    for _ in 0..20_000 {
        let mut moved = 0.0f64;
        for k in 0..n {
            let xk = x.column(k);
            let a = 2.0 * lambda * xk.norm_squared();
            let rho = 2.0 * lambda * xk.dot(&r) + a * c[k];
            let new = if rho > 1.0 {
                (rho - 1.0) / a
            } else if rho < -1.0 {
                (rho + 1.0) / a
            } else {
                0.0
            };
            let delta = new - c[k];
            if delta != 0.0 {
                r.axpy(-delta, &xk, 1.0);
                c[k] = new;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
    c
}

#[test]
fn squared_lasso_matches_coordinate_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let x = DMatrix::from_fn(6, 9, |_, _| StandardNormal.sample(&mut rng));
        let x = ssc_core::linalg::normalize_columns(&x).unwrap().data().clone();
        let y = x.column(0) * 0.6 + x.column(3) * 0.5;
        let lambda = 5.0;
        let settings = SolverSettings {
            lambda,
            max_iter: 100_000,
            tol_primal: 1e-13,
            ..Default::default()
        };
        let sol = solve_lasso(&x, &y, &settings, PenaltyForm::Squared).unwrap();
        let reference = coordinate_descent_squared(&x, &y, lambda);
        let f = |c: &DVector<f64>| lasso_objective(&x, &y, c, lambda, PenaltyForm::Squared);
        assert!((f(&sol.coefficients) - f(&reference)).abs() <= 1e-8);
        assert!(sol.kkt_violation.unwrap() <= 1e-6);
    }
}

#[test]
fn omp_support_is_small_and_exact() {
    let settings_tol = 1e-8;
    for seed in 0..20u64 {
        let inst = random_subspace_instance(300 + seed, 11, 6, 2).unwrap();
        let sol = solve_omp(&inst.dictionary, &inst.target, 3, settings_tol).unwrap();
        assert!(sol.residual_norm <= settings_tol);
        assert!(sol.support.len() <= 3);
        // The refit must agree with an independent solve on the same support.
        let (c, res) = support_solve(&inst.dictionary, &inst.target, &sol.support).unwrap();
        assert!(res <= 1e-8);
        for (k, &j) in sol.support.iter().enumerate() {
            assert!((sol.coefficients[j] - c[k]).abs() <= 1e-8);
        }
    }
}

#[test]
fn swap_decreases_l1() {
    for d in [2, 3] {
        for seed in 0..100u64 {
            let inst = construct_swap_instance(seed, d).unwrap();
            let out = check_swap(&inst).unwrap();
            assert!(out.decreased, "d={d} seed={seed}: {out:?}");
        }
    }
}

#[test]
fn unrestricted_swap_has_counterexamples_in_three_dimensions() {
    let violations = (0..200u64)
        .map(|s| check_swap(&construct_swap_instance_with(s, 3, SwapCandidate::Unrestricted).unwrap()).unwrap())
        .filter(|o| !o.decreased)
        .count();
    assert!(violations > 0);
}

#[test]
fn monotonicity_along_probe_family() {
    let grid: Vec<f64> = (0..20).map(|k| 2.0 + 3.0 * k as f64).collect();
    let report = verify_prop_monotonicity(&ProbeFamily::sphere_r3(), &grid).unwrap();
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    for row in &report.rows {
        assert!((row.exact - row.bp).abs() <= 1e-6);
    }
    let last = report.rows.last().unwrap();
    assert!(last.exact > report.rows[0].exact);
}

#[test]
fn planar_bp_support_is_nearest_on_each_side() {
    let settings = SolverSettings::default();
    for seed in 0..100u64 {
        let (x, y) = planar_neighbour_instance(seed, 8).unwrap();
        let sol = solve_bp_noiseless(&x, &y, &settings).unwrap();
        let report = brute_force_min_l1(&x, &y, 2).unwrap();
        assert_eq!(sol.support, nearest_each_side(&x, &y), "seed {seed}");
        assert_eq!(report.oracle_support, sol.support, "seed {seed}");
    }
}

#[test]
fn exact_l1_grows_when_a_support_point_moves_away() {
    let fam = ProbeFamily::sphere_r3();
    let near = support_solve(&fam.dictionary(10.0), &fam.target, &[0, 1, 2]).unwrap().0;
    let far = support_solve(&fam.dictionary(30.0), &fam.target, &[0, 1, 2]).unwrap().0;
    assert!(l1(&far) > l1(&near));
}
