//! Dense linear-algebra primitives shared by the solvers, the support
//! extension rules and the graph code.
//!
//! Matrices are small (ambient dimension around 20, a few dozen points), so
//! everything here favours robustness over speed: singular values come from
//! one-sided Jacobi rotations and symmetric eigenproblems from cyclic Jacobi.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SscError};

/// Off-diagonal convergence tolerance for the Jacobi sweeps.
pub const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 60;
const UNIT_NORM_TOL: f64 = 1e-6;

/// Unit-norm data points stored as matrix columns, with optional
/// ground-truth cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    data: DMatrix<f64>,
    labels: Option<Vec<usize>>,
}

impl PointCloud {
    /// Wraps columns that are already unit length (within 1e-9).
    pub fn new(data: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        for (j, col) in data.column_iter().enumerate() {
            let n = col.norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(SscError::Precondition(format!(
                    "column {j} has norm {n}, expected 1"
                )));
            }
        }
        let cloud = Self { data, labels: None };
        match labels {
            Some(l) => cloud.with_labels(l),
            None => Ok(cloud),
        }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(SscError::Dimension(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Ambient dimension m.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of points N.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn point(&self, j: usize) -> DVector<f64> {
        self.data.column(j).into_owned()
    }

    /// Number of distinct clusters implied by the labels.
    pub fn cluster_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Applies `f` to the raw matrix and renormalizes the result.
    pub fn map_data(&self, f: impl FnOnce(&DMatrix<f64>) -> DMatrix<f64>) -> Result<Self> {
        let mut out = normalize_columns(&f(&self.data))?;
        out.labels = self.labels.clone();
        Ok(out)
    }
}

/// Orthonormal basis of a linear subspace, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Accepts `basis` if `basisᵀ·basis = I` within 1e-9 elementwise.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let gram = basis.transpose() * &basis;
        let d = gram.nrows();
        let err = (gram - DMatrix::<f64>::identity(d, d)).amax();
        if err > 1e-9 {
            return Err(SscError::Precondition(format!(
                "basis columns are not orthonormal (max deviation {err:.3e})"
            )));
        }
        Ok(Self { basis })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Subspace dimension d.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }
}

/// Angle between two unit vectors in radians, `acos` of the clamped dot
/// product.
pub fn angle(x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(SscError::Dimension(format!("{} vs {}", x.len(), y.len())));
    }
    for v in [x, y] {
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(SscError::Precondition(format!(
                "angle requires unit vectors, got norm {n}"
            )));
        }
    }
    Ok(x.dot(y).clamp(-1.0, 1.0).acos())
}

/// Scales every column to unit Euclidean length.
pub fn normalize_columns(m: &DMatrix<f64>) -> Result<PointCloud> {
    let mut data = m.clone();
    for (j, mut col) in data.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(SscError::ZeroColumn { index: j });
        }
        col /= n;
    }
    Ok(PointCloud { data, labels: None })
}

/// `B·Bᵀ·y`.
pub fn orthogonal_project(b: &SubspaceBasis, y: &DVector<f64>) -> Result<DVector<f64>> {
    if b.ambient_dim() != y.len() {
        return Err(SscError::Dimension(format!(
            "basis lives in R^{} but vector has length {}",
            b.ambient_dim(),
            y.len()
        )));
    }
    let coords = b.basis.tr_mul(y);
    Ok(&b.basis * coords)
}

/// Result of [`fit_principal_basis`].
#[derive(Debug, Clone)]
pub struct PrincipalFit {
    pub basis: SubspaceBasis,
    /// `Σ_j ‖Bᵀ m_j‖²` over the input columns.
    pub captured_energy: f64,
    /// Set when `d` exceeded the numerical rank and the basis was completed
    /// with directions carrying no energy.
    pub padded: bool,
}

/// Top-`d` left singular subspace of `m`.
pub fn fit_principal_basis(m: &DMatrix<f64>, d: usize) -> Result<PrincipalFit> {
    let (rows, cols) = m.shape();
    if d == 0 || d > rows.min(cols) {
        return Err(SscError::InvalidParameter(format!(
            "basis dimension {d} outside [1, {}]",
            rows.min(cols)
        )));
    }
    let svd = jacobi_svd(m);
    let rank = svd.rank(1e-12);
    let basis = svd.u.columns(0, d).into_owned();
    let captured_energy = svd.singular_values.iter().take(d).map(|s| s * s).sum();
    Ok(PrincipalFit {
        basis: SubspaceBasis { basis },
        captured_energy,
        padded: d > rank,
    })
}

/// Orthonormalized seeded Gaussian `m×d` matrix.
pub fn random_orthonormal_basis(m: usize, d: usize, seed: u64) -> Result<SubspaceBasis> {
    if d > m {
        return Err(SscError::InvalidParameter(format!(
            "cannot fit {d} orthonormal columns in R^{m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng));
    let q = gram_schmidt(&g)
        .ok_or_else(|| SscError::Precondition("Gaussian draw was rank deficient".into()))?;
    Ok(SubspaceBasis { basis: q })
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Returns `None`
/// if a column collapses.
pub fn gram_schmidt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        for _pass in 0..2 {
            for k in 0..j {
                let r = q.column(k).dot(&q.column(j));
                let qk = q.column(k).into_owned();
                q.column_mut(j).axpy(-r, &qk, 1.0);
            }
        }
        let n = q.column(j).norm();
        if n <= 1e-12 * a.column(j).norm().max(1.0) {
            return None;
        }
        q.column_mut(j).scale_mut(1.0 / n);
    }
    Some(q)
}

/// Thin singular value decomposition `A = U·diag(s)·Vᵀ` with singular values
/// in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m×r` orthonormal, `r = min(m, n)`.
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// `n×r` orthonormal.
    pub v: DMatrix<f64>,
}

impl Svd {
    /// Number of singular values above `rel_tol · σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.singular_values.iter().copied().fold(0.0, f64::max);
        if smax == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s > rel_tol * smax)
            .count()
    }

    /// Minimum-norm least-squares solution of `A x = b`, discarding singular
    /// values below `rel_tol · σ_max`.
    pub fn solve_min_norm(&self, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
        let smax = self.singular_values.iter().copied().fold(0.0, f64::max);
        let mut coeffs = self.u.tr_mul(b);
        for (c, &s) in coeffs.iter_mut().zip(self.singular_values.iter()) {
            *c = if s > rel_tol * smax && s > 0.0 { *c / s } else { 0.0 };
        }
        &self.v * coeffs
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Left singular vectors belonging to zero singular values are completed to
/// an orthonormal set, so `u` always has orthonormal columns.
pub fn jacobi_svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_svd(&a.transpose());
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    // m >= n: orthogonalize the n columns.
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        // Squared column norms, refreshed every sweep and updated in closed
        // form after each rotation.
        let mut sq: Vec<f64> = (0..n).map(|j| w.column(j).norm_squared()).collect();
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta) = (sq[p], sq[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
                sq[p] = (alpha - t * gamma).max(0.0);
                sq[q] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the lowest column index first among equal values.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let smax = norms.iter().copied().fold(0.0, f64::max);
    let floor = smax * (m.max(n) as f64) * f64::EPSILON;
    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut s = DVector::<f64>::zeros(n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        vs.set_column(dst, &v.column(src));
        if sigma > floor && sigma > 0.0 {
            s[dst] = sigma;
            u.set_column(dst, &(w.column(src) / sigma));
        } else {
            missing.push(dst);
        }
    }
    if !missing.is_empty() {
        complete_orthonormal(&mut u, &missing);
    }
    Svd {
        u,
        singular_values: s,
        v: vs,
    }
}

fn rotate_columns(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let rows = a.nrows();
    let data = a.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * rows);
    let cp = &mut head[p * rows..(p + 1) * rows];
    let cq = &mut tail[..rows];
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let (ap, aq) = (*xp, *xq);
        *xp = c * ap - s * aq;
        *xq = s * ap + c * aq;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column, drawing candidates from the standard basis in index order.
fn complete_orthonormal(u: &mut DMatrix<f64>, missing: &[usize]) {
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &slot in missing {
        while candidate < m {
            let mut e = DVector::<f64>::zeros(m);
            e[candidate] = 1.0;
            candidate += 1;
            for _pass in 0..2 {
                for &k in &filled {
                    let r = u.column(k).dot(&e);
                    e.axpy(-r, &u.column(k).into_owned(), 1.0);
                }
            }
            let n = e.norm();
            if n > 1e-8 {
                u.set_column(slot, &(e / n));
                filled.push(slot);
                break;
            }
        }
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues are returned in ascending order (ties keep the lower index
/// first), with matching eigenvector columns.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SscError::Dimension(format!("{}x{} is not square", n, a.ncols())));
    }
    let mut s = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += s[(p, q)] * s[(p, q)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * 1e-3 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = s[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                // S <- Jᵀ S J
                for k in 0..n {
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[(p, k)];
                    let sqk = s[(q, k)];
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
                rotate_columns(&mut v, p, q, c, sn);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| s[(i, i)]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok((values, vectors))
}

/// Minimum-norm least-squares solve of `A x = b` through the Jacobi SVD.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(SscError::Dimension(format!(
            "matrix has {} rows, rhs has {}",
            a.nrows(),
            b.len()
        )));
    }
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    Ok(jacobi_svd(a).solve_min_norm(b, 1e-10))
}

/// Copy of `x` with column `skip` removed.
pub fn drop_column(x: &DMatrix<f64>, skip: usize) -> DMatrix<f64> {
    x.clone().remove_column(skip)
}

/// Columns of `x` at `idx`, in order.
pub fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |i, k| x[(i, idx[k])])
}
