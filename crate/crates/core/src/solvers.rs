//! Sparse self-expressive coding.
//!
//! Every estimator writes a target `y` as a sparse combination of the
//! columns of a dictionary `X` (the point cloud with `y`'s own column
//! removed):
//!
//! * basis pursuit: `min ‖c‖₁  s.t.  Xc = y`
//! * basis pursuit denoising: `min ‖c‖₁  s.t.  ‖Xc − y‖₂² ≤ λ`
//! * lasso: `min ‖c‖₁ + λ‖Xc − y‖₂` (or `+ λ‖Xc − y‖₂²`)
//! * orthogonal matching pursuit as a greedy ℓ0 surrogate
//!
//! The first three share one ADMM engine over the splitting
//! `c = z`, `Xc − y = r`; only the proximal step on `r` differs. Converged
//! iterates are polished on their support with the closed-form KKT solution
//! when one exists, which makes the results exact to rounding.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::linalg::{drop_column, jacobi_svd, lstsq_min_norm, select_columns, PointCloud};

/// Residual below which a target counts as lying in the dictionary span.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Residual bound (bpdn) or penalty weight (lasso).
    pub lambda: f64,
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Entries with `|c_k| > support_eps · max|c|` form the support.
    pub support_eps: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            max_iter: 20_000,
            tol_primal: 1e-9,
            tol_dual: 1e-9,
            support_eps: 1e-5,
        }
    }
}

impl SolverSettings {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(SscError::InvalidParameter(format!("lambda = {}", self.lambda)));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0 && self.support_eps > 0.0) {
            return Err(SscError::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(SscError::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// One target's sparse code.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub coefficients: DVector<f64>,
    pub support: Vec<usize>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the coded point itself once embedded into a length-N code.
    pub self_index: Option<usize>,
    /// Optimality certificate where the estimator has a cheap one: the
    /// KKT violation of the squared lasso, `max(0, ‖Xᵀ(y − Xc)‖_∞ − 1/(2λ))`.
    pub kkt_violation: Option<f64>,
}

impl SparseSolution {
    fn from_coefficients(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        coefficients: DVector<f64>,
        support_eps: f64,
        iterations: usize,
        converged: bool,
    ) -> Self {
        let residual_norm = (x * &coefficients - y).norm();
        let support = support_of(&coefficients, support_eps);
        Self {
            coefficients,
            support,
            residual_norm,
            iterations,
            converged,
            self_index: None,
            kkt_violation: None,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }

    /// Re-indexes a dictionary-space code into point space by inserting an
    /// exact zero at `self_index`.
    pub fn embed(mut self, self_index: usize) -> Self {
        let n = self.coefficients.len();
        assert!(self_index <= n, "self index {self_index} out of range");
        let mut full = DVector::zeros(n + 1);
        for (k, &c) in self.coefficients.iter().enumerate() {
            full[if k < self_index { k } else { k + 1 }] = c;
        }
        self.coefficients = full;
        for s in &mut self.support {
            if *s >= self_index {
                *s += 1;
            }
        }
        self.self_index = Some(self_index);
        self
    }
}

/// Indices with `|c_k| > eps · max|c|`.
pub fn support_of(c: &DVector<f64>, eps: f64) -> Vec<usize> {
    let cmax = c.amax();
    if cmax == 0.0 {
        return Vec::new();
    }
    c.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > eps * cmax)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyForm {
    /// `‖c‖₁ + λ‖Xc − y‖₂`
    Unsquared,
    /// `‖c‖₁ + λ‖Xc − y‖₂²`
    Squared,
}

/// Per-point estimator used by [`code_pointcloud`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Estimator {
    Bp,
    Bpdn,
    Lasso(PenaltyForm),
    Omp { k_max: usize, residual_tol: f64 },
}

#[derive(Debug, Clone, Copy)]
enum ResidualModel {
    Exact,
    Ball(f64),
    Penalty(f64),
}

fn check_dims(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(SscError::Dimension(format!(
            "dictionary has {} rows, target has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(SscError::Dimension("empty dictionary".into()));
    }
    Ok(())
}

/// Minimum-ℓ1 exact representation of `y` by the columns of `x`.
pub fn solve_bp_noiseless(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<SparseSolution> {
    check_dims(x, y)?;
    settings.validate()?;
    let ls = lstsq_min_norm(x, y)?;
    let best = (x * &ls - y).norm();
    if best > FEASIBILITY_TOL {
        return Err(SscError::Infeasible { residual: best });
    }
    let eps = settings.support_eps;
    let certify = |z: &DVector<f64>| certify_exact(x, y, z, eps);
    let (c, iterations, converged) = admm(x, y, ResidualModel::Exact, settings, &certify);
    let c = polish_exact(x, y, &c, eps).unwrap_or(c);
    Ok(SparseSolution::from_coefficients(
        x,
        y,
        c,
        settings.support_eps,
        iterations,
        converged,
    ))
}

/// `min ‖c‖₁  s.t.  ‖Xc − y‖₂² ≤ λ`.
pub fn solve_bpdn(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<SparseSolution> {
    check_dims(x, y)?;
    settings.validate()?;
    if settings.lambda <= 0.0 {
        return Err(SscError::InvalidParameter("bpdn needs lambda > 0".into()));
    }
    let radius = settings.lambda.sqrt();
    if y.norm() <= radius {
        return Ok(SparseSolution::from_coefficients(
            x,
            y,
            DVector::zeros(x.ncols()),
            settings.support_eps,
            0,
            true,
        ));
    }
    let eps = settings.support_eps;
    let certify = |z: &DVector<f64>| polish_ball(x, y, z, radius, eps);
    let (c, iterations, converged) = admm(x, y, ResidualModel::Ball(radius), settings, &certify);
    let c = polish_ball(x, y, &c, radius, eps).unwrap_or(c);
    Ok(SparseSolution::from_coefficients(
        x,
        y,
        c,
        settings.support_eps,
        iterations,
        converged,
    ))
}

/// Lasso in either penalty form.
pub fn solve_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    settings: &SolverSettings,
    form: PenaltyForm,
) -> Result<SparseSolution> {
    check_dims(x, y)?;
    settings.validate()?;
    if settings.lambda <= 0.0 {
        return Err(SscError::InvalidParameter("lasso needs lambda > 0".into()));
    }
    match form {
        PenaltyForm::Unsquared => {
            let (lambda, eps) = (settings.lambda, settings.support_eps);
            let certify = |z: &DVector<f64>| polish_penalty(x, y, z, lambda, eps);
            let (c, iterations, converged) =
                admm(x, y, ResidualModel::Penalty(lambda), settings, &certify);
            let c = polish_penalty(x, y, &c, lambda, eps).unwrap_or(c);
            Ok(SparseSolution::from_coefficients(
                x,
                y,
                c,
                settings.support_eps,
                iterations,
                converged,
            ))
        }
        PenaltyForm::Squared => Ok(fista_squared_lasso(x, y, settings)),
    }
}

/// Objective of the lasso in the given form.
pub fn lasso_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
    lambda: f64,
    form: PenaltyForm,
) -> f64 {
    let r = (x * c - y).norm();
    let data = match form {
        PenaltyForm::Unsquared => r,
        PenaltyForm::Squared => r * r,
    };
    c.iter().map(|v| v.abs()).sum::<f64>() + lambda * data
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

const CERTIFY_EVERY: usize = 10;
const MAX_RHO_CHANGES: usize = 40;

/// Scaled ADMM for `min ‖z‖₁ + h(r)  s.t.  c = z, Xc − y = r`.
///
/// The c-update solves `(I + XᵀX) c = z − u₁ + Xᵀ(y + r − u₂)`, whose matrix
/// does not depend on the penalty parameter, so ρ is adapted freely by
/// residual balancing. Every `CERTIFY_EVERY` iterations `certify` gets a
/// chance to turn the current support into a KKT-certified optimum, which
/// ends the loop early. Returns the sparse iterate `z`.
fn admm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: ResidualModel,
    settings: &SolverSettings,
    certify: &dyn Fn(&DVector<f64>) -> Option<DVector<f64>>,
) -> (DVector<f64>, usize, bool) {
    let (m, n) = x.shape();
    let mut system = x.tr_mul(x);
    for i in 0..n {
        system[(i, i)] += 1.0;
    }
    let chol = system
        .cholesky()
        .expect("I + XᵀX is symmetric positive definite");

    let mut rho = 1.0;
    let mut adaptations = 0;
    let mut z = DVector::<f64>::zeros(n);
    let mut r = match model {
        ResidualModel::Exact => DVector::zeros(m),
        _ => -y,
    };
    let mut u1 = DVector::<f64>::zeros(n);
    let mut u2 = DVector::<f64>::zeros(m);
    let mut xc = DVector::<f64>::zeros(m);

    for iter in 1..=settings.max_iter {
        let rhs = &z - &u1 + x.tr_mul(&(y + &r - &u2));
        let c = chol.solve(&rhs);
        x.mul_to(&c, &mut xc);

        let z_old = z.clone();
        let r_old = r.clone();
        let thresh = 1.0 / rho;
        for k in 0..n {
            z[k] = soft_threshold(c[k] + u1[k], thresh);
        }
        let v = &xc - y + &u2;
        r = match model {
            ResidualModel::Exact => DVector::zeros(m),
            ResidualModel::Ball(radius) => {
                let nv = v.norm();
                if nv <= radius {
                    v
                } else {
                    v * (radius / nv)
                }
            }
            ResidualModel::Penalty(weight) => {
                let nv = v.norm();
                let shrink = weight / rho;
                if nv <= shrink {
                    DVector::zeros(m)
                } else {
                    v * (1.0 - shrink / nv)
                }
            }
        };

        let p1 = &c - &z;
        let p2 = &xc - y - &r;
        u1 += &p1;
        u2 += &p2;

        let primal = (p1.norm_squared() + p2.norm_squared()).sqrt();
        let dz = &z - &z_old;
        let dr = &r - &r_old;
        let dual = rho * (&dz + x.tr_mul(&dr)).norm();
        if primal <= settings.tol_primal && dual <= settings.tol_dual {
            return (z, iter, true);
        }
        if iter % CERTIFY_EVERY == 0 {
            if let Some(opt) = certify(&z) {
                return (opt, iter, true);
            }
        }
        // Unbounded adaptation can stall ADMM, so ρ is frozen after a fixed
        // number of changes.
        if adaptations < MAX_RHO_CHANGES && iter % 5 == 0 {
            if primal > 10.0 * dual {
                rho *= 2.0;
                u1 /= 2.0;
                u2 /= 2.0;
                adaptations += 1;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u1 *= 2.0;
                u2 *= 2.0;
                adaptations += 1;
            }
        }
    }
    (z, settings.max_iter, false)
}

/// Support, signs and least-squares pieces needed by the polishing steps.
struct SupportSystem {
    support: Vec<usize>,
    signs: DVector<f64>,
    xs: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    c_ls: DVector<f64>,
    r_ls: DVector<f64>,
}

fn support_system(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
    eps: f64,
) -> Option<SupportSystem> {
    let support = support_of(c, eps);
    if support.is_empty() || support.len() > x.nrows() {
        return None;
    }
    let xs = select_columns(x, &support);
    let gram = xs.tr_mul(&xs);
    let svd = jacobi_svd(&gram);
    let smax = svd.singular_values[0];
    let smin = svd.singular_values[svd.singular_values.len() - 1];
    if smin <= 1e-10 * smax {
        return None;
    }
    let gram_inv = gram.try_inverse()?;
    let c_ls = &gram_inv * xs.tr_mul(y);
    let r_ls = y - &xs * &c_ls;
    let signs = DVector::from_iterator(support.len(), support.iter().map(|&k| c[k].signum()));
    Some(SupportSystem {
        support,
        signs,
        xs,
        gram_inv,
        c_ls,
        r_ls,
    })
}

impl SupportSystem {
    /// `c(t) = c_LS − t·G⁻¹s`; every KKT system below lives on this ray.
    fn along(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let dir = &self.gram_inv * &self.signs;
        let cs = &self.c_ls - &dir * t;
        let r = &self.r_ls + &self.xs * &dir * t;
        (cs, r)
    }

    fn signs_match(&self, cs: &DVector<f64>) -> bool {
        cs.iter().zip(self.signs.iter()).all(|(v, s)| v * s > 0.0)
    }

    fn scatter(&self, n: usize, cs: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(n);
        for (&k, &v) in self.support.iter().zip(cs.iter()) {
            full[k] = v;
        }
        full
    }

    /// Off-support correlations must stay within `bound`.
    fn dual_feasible(&self, x: &DMatrix<f64>, r: &DVector<f64>, bound: f64) -> bool {
        let corr = x.tr_mul(r);
        (0..x.ncols())
            .filter(|k| !self.support.contains(k))
            .all(|k| corr[k].abs() <= bound * (1.0 + 1e-6) + 1e-12)
    }
}

fn accept_if_better(candidate: DVector<f64>, current: &DVector<f64>) -> Option<DVector<f64>> {
    let l1 = |v: &DVector<f64>| v.iter().map(|a| a.abs()).sum::<f64>();
    (l1(&candidate) <= l1(current) + 1e-6).then_some(candidate)
}

fn polish_exact(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
    eps: f64,
) -> Option<DVector<f64>> {
    let sys = support_system(x, y, c, eps)?;
    if sys.r_ls.norm() > 1e-9 {
        return None;
    }
    accept_if_better(sys.scatter(x.ncols(), &sys.c_ls), c)
}

/// Least-squares fit on the support, kept only if the minimum-norm dual
/// vector `X_S G⁻¹ s` certifies it as ℓ1-optimal.
fn certify_exact(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
    eps: f64,
) -> Option<DVector<f64>> {
    let sys = support_system(x, y, c, eps)?;
    if sys.r_ls.norm() > 1e-9 || !sys.signs_match(&sys.c_ls) {
        return None;
    }
    let nu = &sys.xs * (&sys.gram_inv * &sys.signs);
    sys.dual_feasible(x, &nu, 1.0)
        .then(|| sys.scatter(x.ncols(), &sys.c_ls))
}

fn polish_ball(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
    radius: f64,
    eps: f64,
) -> Option<DVector<f64>> {
    let sys = support_system(x, y, c, eps)?;
    let q = (&sys.xs * (&sys.gram_inv * &sys.signs)).norm_squared();
    let slack = radius * radius - sys.r_ls.norm_squared();
    if slack <= 0.0 || q <= 0.0 {
        return None;
    }
    let t = (slack / q).sqrt();
    let (cs, r) = sys.along(t);
    if !sys.signs_match(&cs) || !sys.dual_feasible(x, &r, t) {
        return None;
    }
    Some(sys.scatter(x.ncols(), &cs))
}

fn polish_penalty(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
    lambda: f64,
    eps: f64,
) -> Option<DVector<f64>> {
    let sys = support_system(x, y, c, eps)?;
    let q = sys.signs.dot(&(&sys.gram_inv * &sys.signs));
    let r_ls = sys.r_ls.norm();
    if r_ls <= 1e-12 {
        // Interpolating optimum: needs a dual vector with ‖ν‖ ≤ λ.
        let nu = &sys.xs * (&sys.gram_inv * &sys.signs);
        let ok = sys.signs_match(&sys.c_ls) && nu.norm() <= lambda && sys.dual_feasible(x, &nu, 1.0);
        return ok.then(|| sys.scatter(x.ncols(), &sys.c_ls));
    }
    if lambda * lambda <= q {
        return None;
    }
    let t = r_ls / (lambda * lambda - q).sqrt();
    let (cs, r) = sys.along(t);
    if !sys.signs_match(&cs) || !sys.dual_feasible(x, &r, t) {
        return None;
    }
    let candidate = sys.scatter(x.ncols(), &cs);
    let before = lasso_objective(x, y, c, lambda, PenaltyForm::Unsquared);
    let after = lasso_objective(x, y, &candidate, lambda, PenaltyForm::Unsquared);
    (after <= before + 1e-9).then_some(candidate)
}

/// FISTA with backtracking on `λ‖Xc − y‖² + ‖c‖₁`.
fn fista_squared_lasso(x: &DMatrix<f64>, y: &DVector<f64>, settings: &SolverSettings) -> SparseSolution {
    let lambda = settings.lambda;
    let n = x.ncols();
    let smooth = |c: &DVector<f64>| lambda * (x * c - y).norm_squared();
    let grad = |c: &DVector<f64>| (x.tr_mul(&(x * c - y))) * (2.0 * lambda);

    let mut lip = 1.0;
    let mut c = DVector::<f64>::zeros(n);
    let mut w = c.clone();
    let mut theta: f64 = 1.0;
    let mut converged = false;
    let mut iterations = settings.max_iter;
    for iter in 1..=settings.max_iter {
        let fw = smooth(&w);
        let gw = grad(&w);
        let next = loop {
            let step = 1.0 / lip;
            let cand = (&w - &gw * step).map(|v| soft_threshold(v, step));
            let d = &cand - &w;
            if smooth(&cand) <= fw + gw.dot(&d) + 0.5 * lip * d.norm_squared() + 1e-15 {
                break cand;
            }
            lip *= 2.0;
        };
        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        let change = (&next - &c).norm();
        w = &next + (&next - &c) * ((theta - 1.0) / theta_next);
        c = next;
        theta = theta_next;
        if change <= settings.tol_primal * (1.0 + c.norm()) {
            iterations = iter;
            converged = true;
            break;
        }
    }
    let mut sol = SparseSolution::from_coefficients(x, y, c, settings.support_eps, iterations, converged);
    let corr = x.tr_mul(&(y - x * &sol.coefficients)).amax();
    sol.kkt_violation = Some((corr - 1.0 / (2.0 * lambda)).max(0.0));
    sol
}

/// Orthogonal matching pursuit with a least-squares refit after every
/// selection. Ties in correlation go to the lowest index.
pub fn solve_omp(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k_max: usize,
    residual_tol: f64,
) -> Result<SparseSolution> {
    check_dims(x, y)?;
    let n = x.ncols();
    if k_max > n {
        return Err(SscError::InvalidParameter(format!(
            "k_max = {k_max} exceeds dictionary size {n}"
        )));
    }
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs = DVector::<f64>::zeros(0);
    let mut residual = y.clone();
    let mut steps = 0;
    while support.len() < k_max && residual.norm() > residual_tol {
        let corr = x.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for k in (0..n).filter(|k| !support.contains(k)) {
            let v = corr[k].abs();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        let Some((k, v)) = best else { break };
        if v <= 1e-12 {
            break;
        }
        support.push(k);
        steps += 1;
        let xs = select_columns(x, &support);
        coeffs = lstsq_min_norm(&xs, y)?;
        residual = y - &xs * &coeffs;
    }
    let mut c = DVector::zeros(n);
    for (&k, &v) in support.iter().zip(coeffs.iter()) {
        c[k] = v;
    }
    let mut order = support.clone();
    order.sort_unstable();
    Ok(SparseSolution {
        residual_norm: residual.norm(),
        coefficients: c,
        support: order,
        iterations: steps,
        converged: residual.norm() <= residual_tol || support.len() == k_max,
        self_index: None,
        kkt_violation: None,
    })
}

/// Dispatches one dictionary solve to the chosen estimator.
pub fn solve_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    estimator: Estimator,
    settings: &SolverSettings,
) -> Result<SparseSolution> {
    match estimator {
        Estimator::Bp => solve_bp_noiseless(x, y, settings),
        Estimator::Bpdn => solve_bpdn(x, y, settings),
        Estimator::Lasso(form) => solve_lasso(x, y, settings, form),
        Estimator::Omp { k_max, residual_tol } => {
            solve_omp(x, y, k_max.min(x.ncols()), residual_tol)
        }
    }
}

/// `N×N` matrix of sparse codes with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(DMatrix<f64>);

impl CoefficientMatrix {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if !c.is_square() {
            return Err(SscError::Dimension(format!("{}x{} is not square", c.nrows(), c.ncols())));
        }
        if (0..c.nrows()).any(|i| c[(i, i)] != 0.0) {
            return Err(SscError::Precondition("coefficient diagonal must be zero".into()));
        }
        Ok(Self(c))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    /// Writes an embedded solution into its column.
    pub fn set_column(&mut self, j: usize, sol: &SparseSolution) {
        debug_assert_eq!(sol.self_index, Some(j));
        self.0.set_column(j, &sol.coefficients);
        self.0[(j, j)] = 0.0;
    }
}

/// A column whose solve failed and was replaced by zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnWarning {
    pub column: usize,
    pub error: SscError,
}

#[derive(Debug, Clone)]
pub struct Coding {
    pub coefficients: CoefficientMatrix,
    pub solutions: Vec<Option<SparseSolution>>,
    pub warnings: Vec<ColumnWarning>,
}

/// Codes every point against all the others. Failed columns become zero
/// columns with a warning; the batch never aborts.
pub fn code_pointcloud(
    cloud: &PointCloud,
    estimator: Estimator,
    settings: &SolverSettings,
) -> Result<Coding> {
    let n = cloud.len();
    if n < 2 {
        return Err(SscError::Precondition(format!("need at least 2 points, got {n}")));
    }
    settings.validate()?;
    let x = cloud.data();
    let results: Vec<Result<SparseSolution>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let dict = drop_column(x, j);
            let y = x.column(j).into_owned();
            solve_with(&dict, &y, estimator, settings).map(|s| s.embed(j))
        })
        .collect();
    Ok(assemble(n, results))
}

pub(crate) fn assemble(n: usize, results: Vec<Result<SparseSolution>>) -> Coding {
    let mut coefficients = CoefficientMatrix::zeros(n);
    let mut solutions = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for (j, res) in results.into_iter().enumerate() {
        match res {
            Ok(sol) => {
                coefficients.set_column(j, &sol);
                solutions.push(Some(sol));
            }
            Err(error) => {
                warnings.push(ColumnWarning { column: j, error });
                solutions.push(None);
            }
        }
    }
    Coding {
        coefficients,
        solutions,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalize_columns;
    use approx::assert_abs_diff_eq;

    fn unit(v: &[f64]) -> DVector<f64> {
        let v = DVector::from_row_slice(v);
        let n = v.norm();
        v / n
    }

    fn dictionary(cols: &[&[f64]]) -> DMatrix<f64> {
        let m = cols[0].len();
        let mut x = DMatrix::zeros(m, cols.len());
        for (j, c) in cols.iter().enumerate() {
            x.set_column(j, &unit(c));
        }
        x
    }

    #[test]
    fn bp_single_column_target() {
        let x = dictionary(&[&[1.0, 0.2, 0.0], &[0.0, 1.0, 0.3], &[0.5, 0.5, 0.0]]);
        let y = x.column(1).into_owned();
        let sol = solve_bp_noiseless(&x, &y, &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(sol.l1_norm(), 1.0, epsilon = 1e-9);
        assert_eq!(sol.support, vec![1]);
        assert_abs_diff_eq!(sol.coefficients[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn bp_symmetric_pair() {
        let x = dictionary(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let s = x.column(0) + x.column(1);
        let y = &s / s.norm();
        let sol = solve_bp_noiseless(&x, &y, &SolverSettings::default()).unwrap();
        assert_eq!(sol.support, vec![0, 1]);
        let expected = 1.0 / s.norm();
        assert_abs_diff_eq!(sol.coefficients[0], expected, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.coefficients[1], expected, epsilon = 1e-9);
    }

    #[test]
    fn bp_infeasible_reports_residual() {
        let x = dictionary(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let y = unit(&[0.0, 0.0, 1.0]);
        match solve_bp_noiseless(&x, &y, &SolverSettings::default()) {
            Err(SscError::Infeasible { residual }) => assert_abs_diff_eq!(residual, 1.0, epsilon = 1e-12),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn bpdn_zero_is_optimal_for_large_lambda() {
        let x = dictionary(&[&[1.0, 0.0], &[0.6, 0.8]]);
        let y = unit(&[0.3, 1.0]);
        let sol = solve_bpdn(&x, &y, &SolverSettings::default().with_lambda(1.0)).unwrap();
        assert_eq!(sol.l1_norm(), 0.0);
        assert!(sol.support.is_empty());
        assert!(solve_bpdn(&x, &y, &SolverSettings::default().with_lambda(0.0)).is_err());
    }

    #[test]
    fn bpdn_is_feasible_and_shrinks() {
        let x = dictionary(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 1.0, 0.1]]);
        let y = unit(&[1.0, 0.7, 0.05]);
        let lambda = 0.01;
        let sol = solve_bpdn(&x, &y, &SolverSettings::default().with_lambda(lambda)).unwrap();
        assert!(sol.converged);
        assert!(sol.residual_norm.powi(2) <= lambda + 1e-6);
        let bp = solve_bp_noiseless(&x, &y, &SolverSettings::default()).unwrap();
        assert!(sol.l1_norm() < bp.l1_norm());
    }

    #[test]
    fn unsquared_lasso_small_lambda_is_zero() {
        let x = dictionary(&[&[1.0, 0.1], &[0.2, 1.0]]);
        let y = x.column(0).into_owned();
        let sol = solve_lasso(&x, &y, &SolverSettings::default().with_lambda(1e-3), PenaltyForm::Unsquared)
            .unwrap();
        assert_abs_diff_eq!(sol.l1_norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn unsquared_lasso_large_lambda_is_spike() {
        let x = dictionary(&[&[1.0, 0.1, 0.0], &[0.2, 1.0, 0.3], &[0.0, 0.4, 1.0]]);
        let y = x.column(2).into_owned();
        let sol = solve_lasso(&x, &y, &SolverSettings::default().with_lambda(50.0), PenaltyForm::Unsquared)
            .unwrap();
        assert_eq!(sol.support, vec![2]);
        assert_abs_diff_eq!(sol.coefficients[2], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn squared_lasso_certificate() {
        let x = dictionary(&[&[1.0, 0.1, 0.0], &[0.2, 1.0, 0.3], &[0.0, 0.4, 1.0], &[1.0, 1.0, 1.0]]);
        let y = unit(&[0.3, 0.9, 0.2]);
        let settings = SolverSettings::default().with_lambda(5.0);
        let sol = solve_lasso(&x, &y, &settings, PenaltyForm::Squared).unwrap();
        assert!(sol.converged);
        assert!(sol.kkt_violation.unwrap() < 1e-6);
    }

    #[test]
    fn omp_examples() {
        let x = dictionary(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.6, 0.8, 0.0], &[0.0, 0.0, 1.0]]);
        let sol = solve_omp(&x, &x.column(2).into_owned(), 3, 1e-10).unwrap();
        assert_eq!(sol.support, vec![2]);
        assert_eq!(sol.iterations, 1);
        assert!(sol.residual_norm < 1e-12);

        let y = unit(&[1.0, 0.0, 2.0]);
        let sol = solve_omp(&x, &y, 3, 1e-10).unwrap();
        assert_eq!(sol.support, vec![0, 3]);
        assert_eq!(sol.iterations, 2);
        assert!(sol.residual_norm < 1e-12);

        assert!(solve_omp(&x, &y, 5, 1e-10).is_err());
    }

    #[test]
    fn embed_inserts_zero() {
        let x = dictionary(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let y = unit(&[1.0, 1.0]);
        let sol = solve_bp_noiseless(&x, &y, &SolverSettings::default()).unwrap().embed(1);
        assert_eq!(sol.coefficients.len(), 3);
        assert_eq!(sol.coefficients[1], 0.0);
        assert_eq!(sol.support, vec![0, 2]);
    }

    #[test]
    fn code_two_identical_points() {
        let cloud = normalize_columns(&DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        let coding = code_pointcloud(&cloud, Estimator::Bp, &SolverSettings::default()).unwrap();
        let c = coding.coefficients.matrix();
        assert_abs_diff_eq!(c, &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), epsilon = 1e-9);
        assert!(coding.warnings.is_empty());
    }

    #[test]
    fn code_orthogonal_points_warns_every_column() {
        let cloud = normalize_columns(&DMatrix::identity(3, 3)).unwrap();
        let coding = code_pointcloud(&cloud, Estimator::Bp, &SolverSettings::default()).unwrap();
        assert_eq!(coding.coefficients.matrix(), &DMatrix::zeros(3, 3));
        assert_eq!(coding.warnings.len(), 3);
        assert!(coding
            .warnings
            .iter()
            .all(|w| matches!(w.error, SscError::Infeasible { .. })));
    }

    #[test]
    fn code_needs_two_points() {
        let cloud = normalize_columns(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        assert!(code_pointcloud(&cloud, Estimator::Bp, &SolverSettings::default()).is_err());
    }

    #[test]
    fn coefficient_matrix_rejects_diagonal() {
        assert!(CoefficientMatrix::new(DMatrix::identity(2, 2)).is_err());
    }
}
