//! Seeded verification suites with a JSON report.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use ssc_core::graph::{build_affinity, connectivity_xi};
use ssc_core::linalg::{fit_principal_basis, orthogonal_project, random_orthonormal_basis};
use ssc_core::oracle::{
    brute_force_min_l1, check_swap, construct_swap_instance, construct_swap_instance_with,
    nearest_each_side, planar_neighbour_instance, random_subspace_instance,
    verify_prop_monotonicity, ProbeFamily, SwapCandidate,
};
use ssc_core::solvers::{solve_bp_noiseless, solve_bpdn, solve_lasso};
use ssc_core::synth::mix_seed;
use ssc_core::{CoefficientMatrix, PenaltyForm, SolverSettings};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oracle,
    Props,
    Invariants,
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Suite::Oracle),
            "props" => Ok(Suite::Props),
            "invariants" => Ok(Suite::Invariants),
            _ => Err(CliError::Usage(format!(
                "unknown suite '{s}' (expected oracle, props or invariants)"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Oracle => "oracle",
            Suite::Props => "props",
            Suite::Invariants => "invariants",
        })
    }
}

const MAX_DETAILS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Informational checks are reported but never count as violations.
    pub gated: bool,
    pub cases: usize,
    pub violations: usize,
    /// The first few failing cases.
    pub details: Vec<String>,
}

impl Check {
    fn new(name: &str, gated: bool) -> Self {
        Self { name: name.into(), gated, cases: 0, violations: 0, details: Vec::new() }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.violations += 1;
            if self.details.len() < MAX_DETAILS {
                self.details.push(detail());
            }
        }
    }

    fn record_result(&mut self, r: Result<bool, String>, label: impl Fn() -> String) {
        match r {
            Ok(ok) => self.record(ok, &label),
            Err(e) => self.record(false, || format!("{}: {e}", label())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    /// Violations over gated checks.
    pub violations: usize,
}

impl VerifyReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        let violations = checks.iter().filter(|c| c.gated).map(|c| c.violations).sum();
        Self { suite, checks, violations }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn run_suite(suite: Suite) -> VerifyReport {
    let checks = match suite {
        Suite::Oracle => oracle_checks(),
        Suite::Props => prop_checks(),
        Suite::Invariants => invariant_checks(1000),
    };
    VerifyReport::new(suite, checks)
}

fn uniform(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut s = seed;
    DMatrix::from_fn(rows, cols, |_, _| {
        s = mix_seed(&[s]);
        (s >> 11) as f64 / (1u64 << 53) as f64
    })
}

fn l1(c: &DVector<f64>) -> f64 {
    c.iter().map(|v| v.abs()).sum()
}

/// bp against exhaustive support enumeration.
pub fn bp_oracle_check(instances: u64) -> Check {
    let settings = SolverSettings::default();
    let mut check = Check::new("bp_matches_brute_force", true);
    for seed in 0..instances {
        let n = 6 + (seed % 7) as usize;
        let d = 2 + (seed % 2) as usize;
        let r = random_subspace_instance(seed, n, 5, d)
            .and_then(|inst| {
                let sol = solve_bp_noiseless(&inst.dictionary, &inst.target, &settings)?;
                let report = brute_force_min_l1(&inst.dictionary, &inst.target, d)?;
                Ok((sol.l1_norm() - report.oracle_value).abs() <= 1e-6 && sol.residual_norm <= 1e-6)
            })
            .map_err(|e| e.to_string());
        check.record_result(r, || format!("seed {seed}"));
    }
    check
}

fn oracle_checks() -> Vec<Check> {
    let settings = SolverSettings::default();
    let mut planar = Check::new("planar_bp_support_nearest_each_side", true);
    for seed in 0..100u64 {
        let r = planar_neighbour_instance(seed, 8)
            .and_then(|(x, y)| {
                let sol = solve_bp_noiseless(&x, &y, &settings)?;
                let report = brute_force_min_l1(&x, &y, 2)?;
                let nearest = nearest_each_side(&x, &y);
                Ok(sol.support == nearest && report.oracle_support == nearest)
            })
            .map_err(|e| e.to_string());
        planar.record_result(r, || format!("seed {seed}"));
    }
    // The literal "d nearest points" reading; reported only.
    let mut literal = Check::new("bp_support_within_d_nearest_literal", false);
    for d in [2usize, 3] {
        for seed in 0..200u64 {
            let r = random_subspace_instance(1000 + seed, 10, 6, d)
                .and_then(|inst| {
                    let sol = solve_bp_noiseless(&inst.dictionary, &inst.target, &settings)?;
                    let mut order: Vec<(usize, f64)> = inst
                        .dictionary
                        .column_iter()
                        .map(|c| c.dot(&inst.target).abs())
                        .enumerate()
                        .collect();
                    order.sort_by(|a, b| b.1.total_cmp(&a.1));
                    let nearest: Vec<usize> = order.iter().take(d).map(|p| p.0).collect();
                    Ok(sol.support.iter().all(|k| nearest.contains(k)))
                })
                .map_err(|e| e.to_string());
            literal.record_result(r, || format!("d={d} seed {seed}"));
        }
    }
    vec![bp_oracle_check(50), planar, literal]
}

pub fn swap_check(instances: u64) -> Check {
    let mut check = Check::new("swap_strictly_decreases_l1", true);
    for d in [2usize, 3] {
        for seed in 0..instances {
            let r = construct_swap_instance(seed, d)
                .and_then(|inst| check_swap(&inst))
                .map(|o| o.decreased)
                .map_err(|e| e.to_string());
            check.record_result(r, || format!("d={d} seed {seed}"));
        }
    }
    check
}

/// 20-step angle grid 2°, 5°, …, 59°.
pub fn monotonicity_grid() -> Vec<f64> {
    (0..20).map(|k| 2.0 + 3.0 * k as f64).collect()
}

pub fn monotonicity_check() -> Check {
    let mut check = Check::new("l1_monotone_in_probe_angle", true);
    match verify_prop_monotonicity(&ProbeFamily::sphere_r3(), &monotonicity_grid()) {
        Ok(report) => {
            check.cases = report.rows.len();
            check.violations = report.violations.len();
            check.details = report.violations.into_iter().take(MAX_DETAILS).collect();
        }
        Err(e) => check.record(false, || e.to_string()),
    }
    check
}

fn prop_checks() -> Vec<Check> {
    let mut unrestricted = Check::new("swap_unrestricted_candidate", false);
    for seed in 0..100u64 {
        let r = construct_swap_instance_with(seed, 3, SwapCandidate::Unrestricted)
            .and_then(|inst| check_swap(&inst))
            .map(|o| o.decreased)
            .map_err(|e| e.to_string());
        unrestricted.record_result(r, || format!("d=3 seed {seed}"));
    }
    vec![swap_check(100), monotonicity_check(), unrestricted]
}

fn random_coefficients(seed: u64) -> (CoefficientMatrix, usize) {
    let n = 2 + (mix_seed(&[seed, 1]) % 11) as usize;
    let n1 = 1 + (mix_seed(&[seed, 2]) % (n as u64 - 1)) as usize;
    let u = uniform(mix_seed(&[seed, 3]), n, n);
    let mut c = u.map(|v| if v < 0.4 { 0.0 } else { 4.0 * v - 2.6 });
    c.fill_diagonal(0.0);
    (CoefficientMatrix::new(c).expect("hollow by construction"), n1)
}

/// The six structural invariants, `cases` seeded instances each.
pub fn invariant_checks(cases: u64) -> Vec<Check> {
    let mut affinity = Check::new("affinity_symmetric_nonnegative_hollow", true);
    let mut xi_range = Check::new("xi_in_unit_interval", true);
    let mut xi_scale = Check::new("xi_scale_invariant", true);
    let mut idempotent = Check::new("projector_idempotent", true);
    let mut orthonormal = Check::new("basis_orthonormal", true);
    let mut rotation = Check::new("solver_rotation_invariant", true);

    for seed in 0..cases {
        let (c, n1) = random_coefficients(seed);
        let a = build_affinity(&c);
        let m = a.matrix();
        affinity.record(
            *m == m.transpose() && m.iter().all(|&v| v >= 0.0) && m.diagonal().iter().all(|&v| v == 0.0),
            || format!("seed {seed}"),
        );
        let n2 = a.len() - n1;
        let xi = connectivity_xi(&a, n1, n2).map(|c| c.xi);
        xi_range.record_result(
            xi.clone().map(|x| (0.0..=1.0).contains(&x)).map_err(|e| e.to_string()),
            || format!("seed {seed}"),
        );
        let factor = 10f64.powf(6.0 * uniform(mix_seed(&[seed, 4]), 1, 1)[0] - 3.0);
        xi_scale.record_result(
            xi.and_then(|x| Ok((x - connectivity_xi(&a.scaled(factor), n1, n2)?.xi).abs() <= 1e-12))
                .map_err(|e| e.to_string()),
            || format!("seed {seed} factor {factor}"),
        );

        let dim = 3 + (seed % 8) as usize;
        let d = 1 + (mix_seed(&[seed, 5]) % dim as u64) as usize;
        let r = random_orthonormal_basis(dim, d, mix_seed(&[seed, 6])).and_then(|b| {
            let y = uniform(mix_seed(&[seed, 7]), dim, 1).column(0) - DVector::repeat(dim, 0.5);
            let p = orthogonal_project(&b, &y)?;
            let pp = orthogonal_project(&b, &p)?;
            Ok((pp - &p).amax() <= 1e-12 * (1.0 + y.amax()))
        });
        idempotent.record_result(r.map_err(|e| e.to_string()), || format!("seed {seed} m={dim} d={d}"));

        let r = random_orthonormal_basis(dim, d, mix_seed(&[seed, 8])).and_then(|b| {
            let pts = uniform(mix_seed(&[seed, 9]), dim, d + 3);
            let fit = fit_principal_basis(&pts, d)?;
            let eye = DMatrix::<f64>::identity(d, d);
            Ok((b.matrix().tr_mul(b.matrix()) - &eye).amax() <= 1e-10
                && (fit.basis.matrix().tr_mul(fit.basis.matrix()) - &eye).amax() <= 1e-10)
        });
        orthonormal.record_result(r.map_err(|e| e.to_string()), || format!("seed {seed} m={dim} d={d}"));

        rotation.record_result(rotation_case(seed), || format!("seed {seed}"));
    }
    vec![affinity, xi_range, xi_scale, idempotent, orthonormal, rotation]
}

/// Coding a rotated target against the rotated dictionary gives the same
/// coefficients. Alternates bpdn, the unsquared lasso and bp.
fn rotation_case(seed: u64) -> Result<bool, String> {
    let d = 2 + (seed % 2) as usize;
    let inst = random_subspace_instance(5000 + seed, 9, 6, d).map_err(|e| e.to_string())?;
    let q = random_orthonormal_basis(6, 6, mix_seed(&[seed, 10])).map_err(|e| e.to_string())?;
    let (x, y) = (&inst.dictionary, &inst.target);
    let (qx, qy) = (q.matrix() * x, q.matrix() * y);
    let solve = |x: &DMatrix<f64>, y: &DVector<f64>| match seed % 3 {
        0 => solve_bpdn(x, y, &SolverSettings::default().with_lambda(0.01)),
        1 => solve_lasso(x, y, &SolverSettings::default().with_lambda(5.0), PenaltyForm::Unsquared),
        _ => solve_bp_noiseless(x, y, &SolverSettings::default()),
    };
    let a = solve(x, y).map_err(|e| e.to_string())?;
    let b = solve(&qx, &qy).map_err(|e| e.to_string())?;
    let diff = (&a.coefficients - &b.coefficients).amax();
    if diff <= 1e-6 {
        Ok(true)
    } else {
        Err(format!("max coefficient difference {diff:.3e} (l1 {} vs {})", l1(&a.coefficients), l1(&b.coefficients)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!("props".parse::<Suite>().unwrap(), Suite::Props);
        assert!(matches!("everything".parse::<Suite>(), Err(CliError::Usage(_))));
    }

    #[test]
    fn informational_checks_do_not_count() {
        let mut gated = Check::new("a", true);
        gated.record(false, || "x".into());
        let mut info = Check::new("b", false);
        info.record(false, || "y".into());
        info.record(false, || "z".into());
        assert_eq!(VerifyReport::new(Suite::Props, vec![gated, info]).violations, 1);
    }

    #[test]
    fn small_invariant_run_is_clean() {
        for c in invariant_checks(30) {
            assert_eq!(c.cases, 30);
            assert_eq!(c.violations, 0, "{}: {:?}", c.name, c.details);
        }
    }
}
