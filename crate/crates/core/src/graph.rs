//! Affinity graphs built from sparse codes, the relative connectivity
//! between two known clusters, spectral clustering and label scoring.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::linalg::symmetric_eigen;
use crate::solvers::CoefficientMatrix;

/// Symmetric nonnegative edge weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(DMatrix<f64>);

impl AffinityMatrix {
    /// Validates symmetry, nonnegativity and the zero diagonal exactly.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(SscError::Dimension(format!("{}x{} is not square", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        for i in 0..n {
            if a[(i, i)] != 0.0 {
                return Err(SscError::Precondition(format!("A({i},{i}) = {} != 0", a[(i, i)])));
            }
            for j in 0..n {
                if a[(i, j)] < 0.0 || a[(i, j)] != a[(j, i)] {
                    return Err(SscError::Precondition(format!(
                        "A({i},{j}) breaks symmetry or nonnegativity"
                    )));
                }
            }
        }
        Ok(Self(a))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }
}

/// `A = |C| + |C|ᵀ`.
pub fn build_affinity(c: &CoefficientMatrix) -> AffinityMatrix {
    let abs = c.matrix().abs();
    let mut a = &abs + abs.transpose();
    for i in 0..a.nrows() {
        a[(i, i)] = 0.0;
    }
    AffinityMatrix(a)
}

/// Which rows enter the connectivity average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum XiReading {
    /// Every point contributes the share of its mass that crosses to the
    /// other cluster.
    #[default]
    AllPoints,
    /// Only first-cluster rows contribute; the sum is still divided by N.
    FirstClusterRows,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connectivity {
    pub xi: f64,
    /// Rows with zero total mass (contribute 0).
    pub zero_rows: usize,
    /// Set when the whole matrix is zero.
    pub all_zero: bool,
}

/// Relative connectivity ξ between the leading `n1` points and the
/// trailing `n2` points.
pub fn connectivity_xi(a: &AffinityMatrix, n1: usize, n2: usize) -> Result<Connectivity> {
    connectivity_xi_with(a, n1, n2, XiReading::AllPoints)
}

pub fn connectivity_xi_with(
    a: &AffinityMatrix,
    n1: usize,
    n2: usize,
    reading: XiReading,
) -> Result<Connectivity> {
    let n = a.len();
    if n1 + n2 != n {
        return Err(SscError::Dimension(format!("{n1} + {n2} != {n}")));
    }
    if n == 0 {
        return Err(SscError::Dimension("empty affinity".into()));
    }
    let m = a.matrix();
    let rows = match reading {
        XiReading::AllPoints => 0..n,
        XiReading::FirstClusterRows => 0..n1,
    };
    let mut sum = 0.0;
    let mut zero_rows = 0;
    for i in rows {
        let row = m.row(i);
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            zero_rows += 1;
            continue;
        }
        let cross: f64 = if i < n1 {
            row.columns(n1, n2).iter().sum()
        } else {
            row.columns(0, n1).iter().sum()
        };
        sum += cross / total;
    }
    Ok(Connectivity {
        xi: sum / n as f64,
        zero_rows,
        all_zero: m.iter().all(|&v| v == 0.0),
    })
}

/// Cluster assignment with labels in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterLabels {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(SscError::InvalidParameter(format!("label {bad} outside [0, {k})")));
        }
        Ok(Self { labels, k })
    }

    /// Infers `k` as `max + 1`.
    pub fn from_vec(labels: Vec<usize>) -> Self {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSettings {
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        Self {
            n_init: 20,
            max_iter: 300,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub labels: ClusterLabels,
    /// Zero-degree vertices, assigned to their nearest embedded centroid.
    pub isolated: Vec<usize>,
}

pub fn spectral_cluster(a: &AffinityMatrix, k: usize, seed: u64) -> Result<SpectralResult> {
    spectral_cluster_with(a, k, seed, &SpectralSettings::default())
}

/// Normalized-Laplacian embedding followed by seeded k-means.
pub fn spectral_cluster_with(
    a: &AffinityMatrix,
    k: usize,
    seed: u64,
    settings: &SpectralSettings,
) -> Result<SpectralResult> {
    let n = a.len();
    if k < 2 || k > n {
        return Err(SscError::InvalidParameter(format!("k = {k} outside [2, {n}]")));
    }
    let m = a.matrix();
    let degrees: Vec<f64> = (0..n).map(|i| m.row(i).sum()).collect();
    let isolated: Vec<usize> = (0..n).filter(|&i| degrees[i] <= 0.0).collect();
    let active: Vec<usize> = (0..n).filter(|&i| degrees[i] > 0.0).collect();

    let mut embedding = DMatrix::<f64>::zeros(n, k);
    if !active.is_empty() {
        let na = active.len();
        let inv_sqrt: Vec<f64> = active.iter().map(|&i| 1.0 / degrees[i].sqrt()).collect();
        let lap = DMatrix::from_fn(na, na, |p, q| {
            let w = m[(active[p], active[q])] * inv_sqrt[p] * inv_sqrt[q];
            if p == q {
                1.0 - w
            } else {
                -w
            }
        });
        let (_, vectors) = symmetric_eigen(&lap)?;
        let kk = k.min(na);
        for (p, &i) in active.iter().enumerate() {
            let row = vectors.view((p, 0), (1, kk));
            let norm = row.norm();
            if norm > 0.0 {
                embedding.view_mut((i, 0), (1, kk)).copy_from(&(row / norm));
            }
        }
    }

    let mut labels = vec![0usize; n];
    if active.len() >= k {
        let points = select_rows(&embedding, &active);
        let fit = kmeans(&points, k, seed, settings);
        for (p, &i) in active.iter().enumerate() {
            labels[i] = fit.labels[p];
        }
        for &i in &isolated {
            labels[i] = nearest_centroid(&embedding.row(i).transpose(), &fit.centroids);
        }
    } else {
        let fit = kmeans(&embedding, k, seed, settings);
        labels = fit.labels;
    }
    Ok(SpectralResult {
        labels: ClusterLabels {
            labels: canonicalize(&labels),
            k,
        },
        isolated,
    })
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |p, q| m[(rows[p], q)])
}

/// Relabels clusters in order of first appearance.
fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

struct KMeansFit {
    labels: Vec<usize>,
    centroids: DMatrix<f64>,
    inertia: f64,
}

fn sq_dist_row(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|q| (points[(i, q)] - centroids[(c, q)]).powi(2))
        .sum()
}

fn nearest_centroid(x: &nalgebra::DVector<f64>, centroids: &DMatrix<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d: f64 = (0..x.len()).map(|q| (x[q] - centroids[(c, q)]).powi(2)).sum();
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Lloyd's k-means with k-means++ seeding and `n_init` restarts; the
/// restart with the lowest inertia wins (earliest on ties). Every cluster
/// is kept nonempty as long as there are at least `k` points.
fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, settings: &SpectralSettings) -> KMeansFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..settings.n_init.max(1) {
        let fit = kmeans_once(points, k, &mut rng, settings);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}

fn kmeans_once(
    points: &DMatrix<f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
    settings: &SpectralSettings,
) -> KMeansFit {
    let (n, dim) = points.shape();
    let mut centroids = DMatrix::<f64>::zeros(k, dim);

    // k-means++ seeding
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist_row(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist_row(points, i, &centroids, c));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..settings.max_iter {
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist_row(points, i, &centroids, c);
                if d < best.1 {
                    best = (c, d);
                }
            }
            *label = best.0;
        }
        fill_empty_clusters(points, &mut labels, &centroids, k);

        let mut next = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for q in 0..dim {
                next[(l, q)] += points[(i, q)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for q in 0..dim {
                    next[(c, q)] *= inv;
                }
            } else {
                next.set_row(c, &centroids.row(c));
            }
        }
        let shift = (&next - &centroids).norm();
        centroids = next;
        if shift <= settings.tol {
            break;
        }
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist_row(points, i, &centroids, l))
        .sum();
    KMeansFit {
        labels,
        centroids,
        inertia,
    }
}

/// Moves the worst-fitting point of a multi-member cluster into each empty
/// cluster.
fn fill_empty_clusters(points: &DMatrix<f64>, labels: &mut [usize], centroids: &DMatrix<f64>, k: usize) {
    if labels.len() < k {
        return;
    }
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut worst: Option<(usize, f64)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = sq_dist_row(points, i, centroids, l);
            if worst.is_none_or(|(_, w)| d > w) {
                worst = Some((i, d));
            }
        }
        match worst {
            Some((i, _)) => labels[i] = empty,
            None => return,
        }
    }
}

/// Fraction of points misassigned under the best one-to-one matching of
/// predicted to true clusters.
pub fn clustering_error(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(SscError::Dimension(format!(
            "{} predicted vs {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len();
    if n == 0 {
        return Ok(0.0);
    }
    let size = pred.k().max(truth.k()).max(1);
    let mut overlap = vec![vec![0i64; size]; size];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        overlap[p][t] += 1;
    }
    let cost: Vec<Vec<i64>> = overlap
        .iter()
        .map(|row| row.iter().map(|&v| -v).collect())
        .collect();
    let assignment = hungarian_min(&cost);
    let matched: i64 = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| overlap[r][c])
        .sum();
    Ok(1.0 - matched as f64 / n as f64)
}

/// Minimum-cost perfect assignment on a square matrix (potentials-based
/// Hungarian algorithm, O(n³)). Returns the column assigned to each row.
pub fn hungarian_min(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn affinity(rows: &[&[f64]]) -> AffinityMatrix {
        let n = rows.len();
        AffinityMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn affinity_examples() {
        let a = build_affinity(&CoefficientMatrix::zeros(3));
        assert_eq!(a.matrix(), &DMatrix::zeros(3, 3));

        let mut c = DMatrix::zeros(3, 3);
        c[(0, 1)] = -0.5;
        let a = build_affinity(&CoefficientMatrix::new(c).unwrap());
        assert_eq!(a.matrix()[(0, 1)], 0.5);
        assert_eq!(a.matrix()[(1, 0)], 0.5);

        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = 0.3;
        c[(1, 0)] = 0.4;
        let a = build_affinity(&CoefficientMatrix::new(c).unwrap());
        assert_abs_diff_eq!(a.matrix()[(0, 1)], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn affinity_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(AffinityMatrix::new(m).is_err());
    }

    #[test]
    fn xi_examples() {
        let block = affinity(&[
            &[0.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 2.0],
            &[0.0, 0.0, 2.0, 0.0],
        ]);
        assert_eq!(connectivity_xi(&block, 2, 2).unwrap().xi, 0.0);

        let cross = affinity(&[
            &[0.0, 0.0, 1.0, 1.0],
            &[0.0, 0.0, 1.0, 1.0],
            &[1.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
        ]);
        assert_eq!(connectivity_xi(&cross, 2, 2).unwrap().xi, 1.0);

        let mixed = affinity(&[
            &[0.0, 2.0, 1.0, 0.0],
            &[2.0, 0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0, 2.0],
            &[0.0, 1.0, 2.0, 0.0],
        ]);
        assert_abs_diff_eq!(connectivity_xi(&mixed, 2, 2).unwrap().xi, 1.0 / 3.0, epsilon = 1e-15);
        let first = connectivity_xi_with(&mixed, 2, 2, XiReading::FirstClusterRows).unwrap();
        assert_abs_diff_eq!(first.xi, 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn xi_zero_rows_and_all_zero() {
        let zero = AffinityMatrix::new(DMatrix::zeros(4, 4)).unwrap();
        let c = connectivity_xi(&zero, 2, 2).unwrap();
        assert_eq!(c.xi, 0.0);
        assert!(c.all_zero);
        assert_eq!(c.zero_rows, 4);
        assert!(connectivity_xi(&zero, 1, 2).is_err());
    }

    #[test]
    fn spectral_recovers_blocks() {
        let a = affinity(&[
            &[0.0, 1.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0, 3.0],
            &[0.0, 0.0, 0.0, 3.0, 0.0],
        ]);
        let res = spectral_cluster(&a, 2, 1).unwrap();
        assert_eq!(res.labels.labels(), &[0, 0, 0, 1, 1]);
        assert!(res.isolated.is_empty());
    }

    #[test]
    fn spectral_k_equals_n() {
        let a = affinity(&[
            &[0.0, 1.0, 0.2, 0.1],
            &[1.0, 0.0, 0.5, 0.3],
            &[0.2, 0.5, 0.0, 0.7],
            &[0.1, 0.3, 0.7, 0.0],
        ]);
        let res = spectral_cluster(&a, 4, 9).unwrap();
        let mut l = res.labels.labels().to_vec();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2, 3]);
    }

    #[test]
    fn spectral_flags_isolated() {
        let a = affinity(&[
            &[0.0, 1.0, 0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0, 0.0],
        ]);
        let res = spectral_cluster(&a, 2, 3).unwrap();
        assert_eq!(res.isolated, vec![4]);
        assert_eq!(res.labels.labels()[0], res.labels.labels()[1]);
        assert_eq!(res.labels.labels()[2], res.labels.labels()[3]);
        assert_ne!(res.labels.labels()[0], res.labels.labels()[2]);
        assert!(spectral_cluster(&a, 1, 3).is_err());
        assert!(spectral_cluster(&a, 6, 3).is_err());
    }

    #[test]
    fn error_examples() {
        let truth = ClusterLabels::from_vec(vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(clustering_error(&truth, &truth).unwrap(), 0.0);
        let swapped = ClusterLabels::from_vec(vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(clustering_error(&swapped, &truth).unwrap(), 0.0);
        let one_off = ClusterLabels::from_vec(vec![0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
        assert_abs_diff_eq!(clustering_error(&one_off, &truth).unwrap(), 0.1, epsilon = 1e-15);
        let short = ClusterLabels::from_vec(vec![0, 1]);
        assert!(clustering_error(&short, &truth).is_err());
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = hungarian_min(&cost);
        let total: i64 = a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5);
    }
}
