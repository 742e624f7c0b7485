//! Support extension for sparse codes.
//!
//! An ℓ1 code of a point usually draws only on its nearest neighbours, so a
//! subspace whose points form separate clumps ends up with nearly
//! disconnected subgraphs. The two rules here grow each point's support
//! greedily with further points that correlate strongly with the current
//! support:
//!
//! * Dantzig rule: with `X⋆ = X_Sᵀ` and `ρ = ‖X⋆‖_F²`, admit
//!   `argmax_j ‖X⋆ x_j‖² / ρ` while it exceeds δ.
//! * Subspace rule: fit an orthonormal basis `B` of dimension `|S_y|` to
//!   the support columns and admit `argmax_j ‖P_B x_j‖²` while it exceeds δ.
//!
//! One candidate is admitted per round and all scores are recomputed on the
//! enlarged support. Ties go to the lowest index.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::linalg::{fit_principal_basis, lstsq_min_norm, select_columns, PointCloud};
use crate::solvers::{
    assemble, code_pointcloud, Coding, Estimator, PenaltyForm, SolverSettings, SparseSolution,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSupport {
    pub point_index: usize,
    pub original_support: Vec<usize>,
    /// Admitted indices in admission order.
    pub added: Vec<usize>,
    /// Score of each admitted index.
    pub scores: Vec<f64>,
    pub delta: f64,
    pub rounds: usize,
}

impl ExtendedSupport {
    /// `S_y ∪ added`, original support first.
    pub fn extended_set(&self) -> Vec<usize> {
        let mut out = self.original_support.clone();
        out.extend_from_slice(&self.added);
        out
    }

    pub fn len(&self) -> usize {
        self.original_support.len() + self.added.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Correlation operator of the Dantzig rule for a given support.
#[derive(Debug, Clone)]
pub struct DantzigState {
    pub xstar: DMatrix<f64>,
    pub rho: f64,
}

impl DantzigState {
    pub fn new(cloud: &PointCloud, support: &[usize]) -> Result<Self> {
        let xstar = select_columns(cloud.data(), support).transpose();
        let rho = dantzig_scale(&xstar)?;
        Ok(Self { xstar, rho })
    }

    pub fn score(&self, x: &DVector<f64>) -> f64 {
        (&self.xstar * x).norm_squared() / self.rho
    }
}

/// `trace(X⋆ᵀ X⋆)`, the squared Frobenius norm.
pub fn dantzig_scale(xstar: &DMatrix<f64>) -> Result<f64> {
    if xstar.is_empty() {
        return Err(SscError::Precondition("empty support matrix".into()));
    }
    Ok(xstar.norm_squared())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMethod {
    Dantzig,
    Subspace,
}

fn check_request(n: usize, y_index: usize, support: &[usize], delta: f64) -> Result<()> {
    if support.is_empty() {
        return Err(SscError::Precondition("empty base support".into()));
    }
    if y_index >= n {
        return Err(SscError::Dimension(format!("point {y_index} out of {n}")));
    }
    if let Some(&k) = support.iter().find(|&&k| k >= n || k == y_index) {
        return Err(SscError::Precondition(format!(
            "support index {k} is out of range or the point itself"
        )));
    }
    if !(delta > 0.0) {
        return Err(SscError::InvalidParameter(format!("delta = {delta} must be > 0")));
    }
    Ok(())
}

fn argmax_eligible(scores: &[f64], excluded: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in scores.iter().enumerate() {
        if excluded[j] {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best
}

fn start(n: usize, y_index: usize, support: &[usize], delta: f64) -> (ExtendedSupport, Vec<bool>) {
    let mut excluded = vec![false; n];
    excluded[y_index] = true;
    for &k in support {
        excluded[k] = true;
    }
    let ext = ExtendedSupport {
        point_index: y_index,
        original_support: support.to_vec(),
        added: Vec::new(),
        scores: Vec::new(),
        delta,
        rounds: 0,
    };
    (ext, excluded)
}

/// Greedy extension under the Dantzig correlation rule.
pub fn selective_dantzig_extend(
    cloud: &PointCloud,
    y_index: usize,
    support: &[usize],
    delta: f64,
    max_rounds: usize,
) -> Result<ExtendedSupport> {
    let gram = cloud.data().tr_mul(cloud.data());
    dantzig_extend_with_gram(&gram, y_index, support, delta, max_rounds)
}

fn dantzig_extend_with_gram(
    gram: &DMatrix<f64>,
    y_index: usize,
    support: &[usize],
    delta: f64,
    max_rounds: usize,
) -> Result<ExtendedSupport> {
    let n = gram.nrows();
    check_request(n, y_index, support, delta)?;
    let (mut ext, mut excluded) = start(n, y_index, support, delta);

    // ‖X⋆x_j‖² = Σ_{k∈S} (x_kᵀx_j)², accumulated as the support grows.
    let mut corr = vec![0.0; n];
    let mut rho = 0.0;
    let absorb = |k: usize, corr: &mut [f64], rho: &mut f64| {
        *rho += gram[(k, k)];
        for (j, c) in corr.iter_mut().enumerate() {
            *c += gram[(k, j)] * gram[(k, j)];
        }
    };
    for &k in support {
        absorb(k, &mut corr, &mut rho);
    }
    while ext.rounds < max_rounds {
        let scores: Vec<f64> = corr.iter().map(|c| c / rho).collect();
        let Some((j, s)) = argmax_eligible(&scores, &excluded) else {
            break;
        };
        if s <= delta {
            break;
        }
        ext.added.push(j);
        ext.scores.push(s);
        ext.rounds += 1;
        excluded[j] = true;
        absorb(j, &mut corr, &mut rho);
    }
    Ok(ext)
}

/// Greedy extension under the fitted-subspace projection rule.
pub fn subspace_selector_extend(
    cloud: &PointCloud,
    y_index: usize,
    support: &[usize],
    delta: f64,
    max_rounds: usize,
) -> Result<ExtendedSupport> {
    let n = cloud.len();
    check_request(n, y_index, support, delta)?;
    let x = cloud.data();
    let d = support.len().clamp(1, cloud.dim());
    let (mut ext, mut excluded) = start(n, y_index, support, delta);
    while ext.rounds < max_rounds {
        if excluded.iter().all(|&e| e) {
            break;
        }
        let members = ext.extended_set();
        let fit = fit_principal_basis(&select_columns(x, &members), d)?;
        let coords = fit.basis.matrix().tr_mul(x);
        let scores: Vec<f64> = coords.column_iter().map(|c| c.norm_squared()).collect();
        let Some((j, s)) = argmax_eligible(&scores, &excluded) else {
            break;
        };
        if s <= delta {
            break;
        }
        ext.added.push(j);
        ext.scores.push(s);
        ext.rounds += 1;
        excluded[j] = true;
    }
    Ok(ext)
}

/// Edge weights from an extended support: absolute minimum-norm
/// least-squares coefficients of `y` on the extended columns.
pub fn reweight_extended(
    cloud: &PointCloud,
    y_index: usize,
    extended: &ExtendedSupport,
) -> Result<DVector<f64>> {
    let n = cloud.len();
    if y_index >= n {
        return Err(SscError::Dimension(format!("point {y_index} out of {n}")));
    }
    let set = extended.extended_set();
    if set.is_empty() {
        return Err(SscError::Precondition("empty extended support".into()));
    }
    if let Some(&k) = set.iter().find(|&&k| k >= n || k == y_index) {
        return Err(SscError::Dimension(format!("support index {k} invalid")));
    }
    let coeffs = lstsq_min_norm(&select_columns(cloud.data(), &set), &cloud.point(y_index))?;
    let mut w = DVector::zeros(n);
    for (&k, &c) in set.iter().zip(coeffs.iter()) {
        w[k] = c.abs();
    }
    w[y_index] = 0.0;
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct SelectiveCoding {
    pub coding: Coding,
    pub extensions: Vec<Option<ExtendedSupport>>,
}

/// Lasso base codes, extended point by point and reweighted.
pub fn code_pointcloud_selective(
    cloud: &PointCloud,
    method: SelectionMethod,
    base_settings: &SolverSettings,
    delta: f64,
    max_rounds: usize,
) -> Result<SelectiveCoding> {
    let base = code_pointcloud(cloud, Estimator::Lasso(PenaltyForm::Unsquared), base_settings)?;
    extend_coding(cloud, &base, method, delta, max_rounds)
}

/// Extends an existing coding; columns whose base solve failed or whose
/// support is empty become zero columns with a warning.
pub fn extend_coding(
    cloud: &PointCloud,
    base: &Coding,
    method: SelectionMethod,
    delta: f64,
    max_rounds: usize,
) -> Result<SelectiveCoding> {
    let n = cloud.len();
    if base.solutions.len() != n {
        return Err(SscError::Dimension(format!(
            "base coding has {} columns for {n} points",
            base.solutions.len()
        )));
    }
    let gram = cloud.data().tr_mul(cloud.data());
    let per_point: Vec<Result<(SparseSolution, ExtendedSupport)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let sol = base.solutions[j].as_ref().ok_or_else(|| {
                SscError::Precondition(format!("base code for point {j} is missing"))
            })?;
            let ext = match method {
                SelectionMethod::Dantzig => {
                    dantzig_extend_with_gram(&gram, j, &sol.support, delta, max_rounds)?
                }
                SelectionMethod::Subspace => {
                    subspace_selector_extend(cloud, j, &sol.support, delta, max_rounds)?
                }
            };
            let weights = reweight_extended(cloud, j, &ext)?;
            let set = ext.extended_set();
            let mut support = set.clone();
            support.sort_unstable();
            let residual = {
                let xs = select_columns(cloud.data(), &set);
                let c = lstsq_min_norm(&xs, &cloud.point(j))?;
                (xs * c - cloud.point(j)).norm()
            };
            Ok((
                SparseSolution {
                    coefficients: weights,
                    support,
                    residual_norm: residual,
                    iterations: ext.rounds,
                    converged: true,
                    self_index: Some(j),
                    kkt_violation: None,
                },
                ext,
            ))
        })
        .collect();
    let mut extensions = Vec::with_capacity(n);
    let mut solutions = Vec::with_capacity(n);
    for r in per_point {
        match r {
            Ok((sol, ext)) => {
                extensions.push(Some(ext));
                solutions.push(Ok(sol));
            }
            Err(e) => {
                extensions.push(None);
                solutions.push(Err(e));
            }
        }
    }
    Ok(SelectiveCoding {
        coding: assemble(n, solutions),
        extensions,
    })
}
