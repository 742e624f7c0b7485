//! Brute-force references for the sparse solvers and constructed instance
//! families for the geometric properties of minimum-ℓ1 codes.
//!
//! Everything here works by exhaustive support enumeration and exact
//! least-squares solves, independent of the ADMM machinery in
//! [`crate::solvers`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::linalg::{gram_schmidt, jacobi_svd, random_orthonormal_basis, select_columns};
use crate::solvers::{solve_bp_noiseless, solve_bpdn, solve_lasso, PenaltyForm, SolverSettings};
use crate::synth::mix_seed;

/// Residual below which a support solve counts as an exact representation.
pub const EXACT_TOL: f64 = 1e-8;
/// Supports whose columns are this close to singular are skipped.
pub const CONDITION_FLOOR: f64 = 1e-10;
/// Largest number of supports [`brute_force_min_l1`] will enumerate.
pub const SUPPORT_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub instance: String,
    pub oracle_value: f64,
    pub oracle_support: Vec<usize>,
    pub solver_value: Option<f64>,
    /// `solver_value − oracle_value`.
    pub gap: Option<f64>,
    /// Supports skipped as numerically singular.
    pub degenerate_supports: usize,
}

impl OracleReport {
    pub fn with_solver_value(mut self, value: f64) -> Self {
        self.solver_value = Some(value);
        self.gap = Some(value - self.oracle_value);
        self
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact least-squares solve on a fixed support. Returns `None` if the
/// support columns are numerically singular.
pub fn support_solve(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Option<(DVector<f64>, f64)> {
    let xs = select_columns(x, support);
    let svd = jacobi_svd(&xs);
    let s = &svd.singular_values;
    if s[s.len() - 1] <= CONDITION_FLOOR * s[0] {
        return None;
    }
    let c = svd.solve_min_norm(y, 0.0);
    let residual = (&xs * &c - y).norm();
    Some((c, residual))
}

/// Minimum ℓ1 exact representation over all supports of size
/// `1..=max_support`, by enumeration.
pub fn brute_force_min_l1(x: &DMatrix<f64>, y: &DVector<f64>, max_support: usize) -> Result<OracleReport> {
    let n = x.ncols();
    if x.nrows() != y.len() {
        return Err(SscError::Dimension(format!("{} rows vs {}", x.nrows(), y.len())));
    }
    let total: u128 = (1..=max_support.min(n)).map(|k| binomial(n, k)).sum();
    if total > SUPPORT_BUDGET {
        return Err(SscError::BudgetExceeded {
            supports: total,
            budget: SUPPORT_BUDGET,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut degenerate = 0;
    let mut best_residual = y.norm();
    for k in 1..=max_support.min(n) {
        for_each_combination(n, k, |support| match support_solve(x, y, support) {
            None => degenerate += 1,
            Some((c, residual)) => {
                best_residual = best_residual.min(residual);
                if residual > EXACT_TOL {
                    return;
                }
                let l1: f64 = c.iter().map(|v| v.abs()).sum();
                if best.as_ref().is_none_or(|(b, _)| l1 < *b) {
                    best = Some((l1, support.to_vec()));
                }
            }
        });
    }
    let (oracle_value, oracle_support) = best.ok_or(SscError::Infeasible {
        residual: best_residual,
    })?;
    Ok(OracleReport {
        instance: format!("n={n} m={} max_support={max_support}", x.nrows()),
        oracle_value,
        oracle_support,
        solver_value: None,
        gap: None,
        degenerate_supports: degenerate,
    })
}

/// A target and dictionary drawn from one random `d`-dimensional subspace.
#[derive(Debug, Clone)]
pub struct SubspaceInstance {
    pub dictionary: DMatrix<f64>,
    pub target: DVector<f64>,
    pub dim: usize,
    pub seed: u64,
}

/// `n_points` unit vectors spread over a random `d`-dimensional subspace of
/// `R^m`; the first is the target, the rest the dictionary.
pub fn random_subspace_instance(seed: u64, n_points: usize, m: usize, d: usize) -> Result<SubspaceInstance> {
    if n_points < 2 || d == 0 || d > m {
        return Err(SscError::InvalidParameter(format!(
            "bad instance shape n={n_points} m={m} d={d}"
        )));
    }
    let basis = random_orthonormal_basis(m, d, mix_seed(&[seed, 11]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 12]));
    let coeffs = DMatrix::from_fn(d, n_points, |_, _| StandardNormal.sample(&mut rng));
    let mut pts = basis.matrix() * coeffs;
    for mut c in pts.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    let target = pts.column(0).into_owned();
    let dictionary = pts.columns(1, n_points - 1).into_owned();
    Ok(SubspaceInstance {
        dictionary,
        target,
        dim: d,
        seed,
    })
}

/// One row of the monotonicity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityRow {
    pub angle_deg: f64,
    /// ℓ1 norm of the exact solve on the full (square) support.
    pub exact: f64,
    /// ℓ1 norm from the basis-pursuit solver.
    pub bp: f64,
    /// ℓ1 norm of the noise-constrained solution.
    pub robust: f64,
    /// ℓ1 norm of the lasso solution.
    pub lasso: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub rows: Vec<MonotonicityRow>,
    pub violations: Vec<String>,
}

/// A target `y`, fixed support points `Q`, and a probe point rotated away
/// from `y` by a varying angle along a fixed direction.
#[derive(Debug, Clone)]
pub struct ProbeFamily {
    pub target: DVector<f64>,
    pub fixed: DMatrix<f64>,
    /// Unit vector orthogonal to the target.
    pub direction: DVector<f64>,
    pub robust_lambda: f64,
    pub lasso_lambda: f64,
}

impl ProbeFamily {
    /// Target on the pole of the unit sphere in R³, two fixed support points
    /// on one side of it, and a probe that leaves the target in the opposite
    /// direction.
    pub fn sphere_r3() -> Self {
        let unit = |v: [f64; 3]| {
            let v = DVector::from_row_slice(&v);
            let n = v.norm();
            v / n
        };
        let target = unit([0.0, 0.0, 1.0]);
        let q1 = unit([0.5, 0.35, 1.0]);
        let q2 = unit([0.45, -0.4, 1.0]);
        let mut fixed = DMatrix::zeros(3, 2);
        fixed.set_column(0, &q1);
        fixed.set_column(1, &q2);
        Self {
            target,
            fixed,
            direction: unit([-1.0, 0.1, 0.0]),
            robust_lambda: 1e-4,
            lasso_lambda: 50.0,
        }
    }

    pub fn probe(&self, angle_deg: f64) -> DVector<f64> {
        let (s, c) = angle_deg.to_radians().sin_cos();
        &self.target * c + &self.direction * s
    }

    /// Probe first, then the fixed points.
    pub fn dictionary(&self, angle_deg: f64) -> DMatrix<f64> {
        let m = self.target.len();
        let k = self.fixed.ncols();
        let mut x = DMatrix::zeros(m, k + 1);
        x.set_column(0, &self.probe(angle_deg));
        x.columns_mut(1, k).copy_from(&self.fixed);
        x
    }
}

/// Tabulates the ℓ1 norms along `angle_grid` and flags every step where a
/// sequence drops by more than `1e-7`.
pub fn verify_prop_monotonicity(family: &ProbeFamily, angle_grid: &[f64]) -> Result<MonotonicityReport> {
    const STEP_TOL: f64 = 1e-7;
    let exact_settings = SolverSettings::default();
    let robust_settings = SolverSettings::default().with_lambda(family.robust_lambda);
    let lasso_settings = SolverSettings::default().with_lambda(family.lasso_lambda);
    let mut rows = Vec::with_capacity(angle_grid.len());
    for &a in angle_grid {
        let x = family.dictionary(a);
        let y = &family.target;
        let all: Vec<usize> = (0..x.ncols()).collect();
        let (c, residual) = support_solve(&x, y, &all)
            .ok_or_else(|| SscError::Precondition(format!("singular probe geometry at {a}°")))?;
        if residual > EXACT_TOL {
            return Err(SscError::Infeasible { residual });
        }
        let exact = c.iter().map(|v| v.abs()).sum();
        let bp = solve_bp_noiseless(&x, y, &exact_settings)?.l1_norm();
        let robust = solve_bpdn(&x, y, &robust_settings)?.l1_norm();
        let lasso = solve_lasso(&x, y, &lasso_settings, PenaltyForm::Unsquared)?.l1_norm();
        rows.push(MonotonicityRow {
            angle_deg: a,
            exact,
            bp,
            robust,
            lasso,
        });
    }
    let mut violations = Vec::new();
    for w in rows.windows(2) {
        let (p, q) = (&w[0], &w[1]);
        for (name, before, after) in [
            ("exact", p.exact, q.exact),
            ("bp", p.bp, q.bp),
            ("robust", p.robust, q.robust),
            ("lasso", p.lasso, q.lasso),
        ] {
            if after < before - STEP_TOL {
                violations.push(format!(
                    "{name}: {before:.12} at {}° -> {after:.12} at {}°",
                    p.angle_deg, q.angle_deg
                ));
            }
        }
    }
    Ok(MonotonicityReport { rows, violations })
}

/// Target `y`, a `d`-point support whose farthest member is `far_index`,
/// and a replacement candidate strictly closer to `y` on the same side of
/// the affine plane `y + span(other support points)` as the farthest point.
#[derive(Debug, Clone)]
pub struct SwapInstance {
    pub target: DVector<f64>,
    pub support: DMatrix<f64>,
    pub far_index: usize,
    pub candidate: DVector<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub seed: u64,
    pub l1_original: f64,
    pub l1_swapped: f64,
    pub decreased: bool,
}

fn random_unit_near(rng: &mut ChaCha8Rng, center: &DVector<f64>, max_angle: f64) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(center.len(), |_, _| StandardNormal.sample(rng));
        let tangent = &g - center * center.dot(&g);
        let tn = tangent.norm();
        if tn < 1e-12 {
            continue;
        }
        let theta = rng.random::<f64>() * max_angle;
        return center * theta.cos() + tangent * (theta.sin() / tn);
    }
}

/// Signed distance of `p` from the affine plane through `y` spanned by the
/// columns of `q` (within the `d`-dimensional ambient space).
fn side_of_plane(y: &DVector<f64>, q: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    let d = y.len();
    // Normal: any vector orthogonal to span(q) in R^d, from Gram-Schmidt of
    // [q | e_k] for the first e_k that is independent.
    for k in 0..d {
        let mut aug = DMatrix::zeros(d, q.ncols() + 1);
        aug.columns_mut(0, q.ncols()).copy_from(q);
        aug[(k, q.ncols())] = 1.0;
        if let Some(basis) = gram_schmidt(&aug) {
            let normal = basis.column(q.ncols()).into_owned();
            return normal.dot(&(p - y));
        }
    }
    0.0
}

/// How the replacement candidate of a swap instance is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapCandidate {
    /// The farthest support point rotated towards `y` inside
    /// `span(y, x_far)`, by a random fraction of its angle.
    InPlane,
    /// Any unit vector closer to `y` on the same side of the plane. In three
    /// dimensions this admits instances where the ℓ1 norm grows.
    Unrestricted,
}

/// Builds a generic swap instance in `R^d` (d = 2 or 3) with an in-plane
/// candidate. Support points lie within 60° of the target and the target
/// lies in their positive cone.
pub fn construct_swap_instance(seed: u64, d: usize) -> Result<SwapInstance> {
    construct_swap_instance_with(seed, d, SwapCandidate::InPlane)
}

pub fn construct_swap_instance_with(seed: u64, d: usize, mode: SwapCandidate) -> Result<SwapInstance> {
    if !(2..=3).contains(&d) {
        return Err(SscError::InvalidParameter(format!("swap instances need d in [2, 3], got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 21]));
    for _attempt in 0..10_000 {
        let y = {
            let g: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let n = g.norm();
            g / n
        };
        let mut support = DMatrix::zeros(d, d);
        for k in 0..d {
            support.set_column(k, &random_unit_near(&mut rng, &y, 60f64.to_radians()));
        }
        let all: Vec<usize> = (0..d).collect();
        let Some((c, res)) = support_solve(&support, &y, &all) else {
            continue;
        };
        if res > EXACT_TOL || c.iter().any(|&v| v <= 1e-3) {
            continue;
        }
        let angles: Vec<f64> = (0..d)
            .map(|k| support.column(k).dot(&y).clamp(-1.0, 1.0).acos())
            .collect();
        let far_index = (0..d).fold(0, |b, k| if angles[k] > angles[b] { k } else { b });
        let others: Vec<usize> = (0..d).filter(|&k| k != far_index).collect();
        let q = select_columns(&support, &others);
        let far = support.column(far_index).into_owned();
        let far_side = side_of_plane(&y, &q, &far);
        if far_side.abs() < 1e-6 {
            continue;
        }
        let tangent = {
            let t = &far - &y * y.dot(&far);
            let n = t.norm();
            t / n
        };
        for _ in 0..200 {
            let cand = match mode {
                SwapCandidate::InPlane => {
                    let a = angles[far_index] * (0.05 + 0.9 * rng.random::<f64>());
                    &y * a.cos() + &tangent * a.sin()
                }
                SwapCandidate::Unrestricted => random_unit_near(&mut rng, &y, angles[far_index]),
            };
            let a = cand.dot(&y).clamp(-1.0, 1.0).acos();
            if a >= angles[far_index] - 1e-6 {
                continue;
            }
            let side = side_of_plane(&y, &q, &cand);
            if side * far_side <= 0.0 || side.abs() < 1e-6 {
                continue;
            }
            let mut swapped = support.clone();
            swapped.set_column(far_index, &cand);
            if support_solve(&swapped, &y, &all).is_none() {
                continue;
            }
            return Ok(SwapInstance {
                target: y,
                support,
                far_index,
                candidate: cand,
                seed,
            });
        }
    }
    Err(SscError::Precondition(format!("no generic swap instance found for seed {seed}")))
}

pub fn check_swap(inst: &SwapInstance) -> Result<SwapOutcome> {
    let d = inst.support.ncols();
    let all: Vec<usize> = (0..d).collect();
    let l1 = |x: &DMatrix<f64>| -> Result<f64> {
        let (c, res) = support_solve(x, &inst.target, &all)
            .ok_or_else(|| SscError::Precondition("singular swap support".into()))?;
        if res > EXACT_TOL {
            return Err(SscError::Infeasible { residual: res });
        }
        Ok(c.iter().map(|v| v.abs()).sum())
    };
    let l1_original = l1(&inst.support)?;
    let mut swapped = inst.support.clone();
    swapped.set_column(inst.far_index, &inst.candidate);
    let l1_swapped = l1(&swapped)?;
    Ok(SwapOutcome {
        seed: inst.seed,
        l1_original,
        l1_swapped,
        decreased: l1_swapped < l1_original,
    })
}

/// Planar instance: target at angle 0, `n` dictionary points at random
/// angles in (−80°, 80°) with at least one on each side.
pub fn planar_neighbour_instance(seed: u64, n: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if n < 2 {
        return Err(SscError::InvalidParameter("need at least two dictionary points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 31]));
    loop {
        let angles: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 160.0 - 80.0).to_radians()).collect();
        let has_both = angles.iter().any(|&a| a > 1e-3) && angles.iter().any(|&a| a < -1e-3);
        let distinct = angles.iter().all(|&a| a.abs() > 1e-3);
        if !has_both || !distinct {
            continue;
        }
        let rot: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let x = DMatrix::from_fn(2, n, |i, j| {
            let t = angles[j] + rot;
            if i == 0 {
                t.cos()
            } else {
                t.sin()
            }
        });
        let y = DVector::from_vec(vec![rot.cos(), rot.sin()]);
        return Ok((x, y));
    }
}

/// Indices of the angle-nearest dictionary point on each side of `y` in
/// the plane.
pub fn nearest_each_side(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<usize> {
    let mut best_pos: Option<(usize, f64)> = None;
    let mut best_neg: Option<(usize, f64)> = None;
    for j in 0..x.ncols() {
        let cross = y[0] * x[(1, j)] - y[1] * x[(0, j)];
        let a = (y[0] * x[(0, j)] + y[1] * x[(1, j)]).clamp(-1.0, 1.0).acos();
        let slot = if cross > 0.0 { &mut best_pos } else { &mut best_neg };
        if slot.is_none_or(|(_, b)| a < b) {
            *slot = Some((j, a));
        }
    }
    let mut out: Vec<usize> = best_pos.into_iter().chain(best_neg).map(|(j, _)| j).collect();
    out.sort_unstable();
    out
}
