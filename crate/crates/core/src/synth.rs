//! Seeded generators for the benchmark geometries: two planar arcs of unit
//! vectors, and two Gaussian clusters on a low-dimensional unit sphere
//! embedded in a higher-dimensional ambient space.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::linalg::{normalize_columns, random_orthonormal_basis, PointCloud};

/// Parameters of the two-cluster connectivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub points_per_cluster: usize,
    pub angle_grid_deg: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub trials: usize,
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    /// Lasso penalty weight used for the base codes.
    pub lambda: f64,
    /// Acceptance threshold of the support-extension rules.
    pub delta: f64,
    pub seed: u64,
    /// Per-coordinate stddev of the cloud samples before they are projected
    /// onto the sphere; roughly the angular spread in radians.
    pub cloud_spread: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            points_per_cluster: 20,
            angle_grid_deg: (0..=36).map(|k| 5.0 * k as f64).collect(),
            noise_sigmas: vec![0.0, 0.02, 0.03],
            trials: 10,
            ambient_dim: 20,
            subspace_dim: 3,
            lambda: 20.0,
            delta: 0.3,
            seed: 2024,
            cloud_spread: 0.2,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SscError::InvalidParameter(msg));
        if self.points_per_cluster == 0 || self.trials == 0 {
            return bad("counts must be positive".into());
        }
        if self.subspace_dim < 2 || self.subspace_dim > self.ambient_dim {
            return bad(format!(
                "subspace_dim {} must lie in [2, ambient_dim = {}]",
                self.subspace_dim, self.ambient_dim
            ));
        }
        if let Some(a) = self.angle_grid_deg.iter().find(|a| !(0.0..=180.0).contains(*a)) {
            return bad(format!("angle {a} outside [0, 180]"));
        }
        if let Some(s) = self.noise_sigmas.iter().find(|s| !(**s >= 0.0)) {
            return bad(format!("negative noise sigma {s}"));
        }
        if !(self.lambda > 0.0) || !(self.delta > 0.0) || !(self.cloud_spread >= 0.0) {
            return bad("lambda and delta must be positive, cloud_spread nonnegative".into());
        }
        Ok(())
    }
}

/// SplitMix64 finalizer folded over `parts`; used to derive independent
/// stream seeds from (seed, trial, angle, sigma) tuples.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

const GEOMETRY_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const ARC_STREAM: u64 = 3;
const UNION_STREAM: u64 = 4;

/// Two clusters on the unit sphere of a `subspace_dim`-dimensional subspace
/// of `R^ambient_dim`, the second rotated by `angle_deg` away from the
/// first, with optional ambient Gaussian noise.
///
/// The cloud samples and the embedding basis depend only on
/// `(cfg.seed, trial)`, so one trial index gives the same clusters at every
/// angle; the noise stream also mixes in the angle and sigma.
pub fn generate_two_cluster_sphere(
    cfg: &SweepConfig,
    angle_deg: f64,
    sigma: f64,
    trial: u64,
) -> Result<PointCloud> {
    cfg.validate()?;
    if !(0.0..=180.0).contains(&angle_deg) {
        return Err(SscError::InvalidParameter(format!("angle {angle_deg} outside [0, 180]")));
    }
    if !(sigma >= 0.0) {
        return Err(SscError::InvalidParameter(format!("sigma {sigma} < 0")));
    }
    let d = cfg.subspace_dim;
    let n = cfg.points_per_cluster;
    let geometry_seed = mix_seed(&[cfg.seed, trial, GEOMETRY_STREAM]);
    let mut rng = ChaCha8Rng::seed_from_u64(geometry_seed);

    // Shared mean direction e_{d-1}; the rotation acts in the (e_{d-2}, e_{d-1})
    // plane, whose normal complement contains no component of the mean.
    let top = d - 1;
    let side = d - 2;
    let sample_cloud = |rng: &mut ChaCha8Rng| -> DMatrix<f64> {
        let mut cloud = DMatrix::<f64>::zeros(d, n);
        for j in 0..n {
            for i in 0..d {
                let g: f64 = StandardNormal.sample(rng);
                cloud[(i, j)] = cfg.cloud_spread * g;
            }
            cloud[(top, j)] += 1.0;
        }
        cloud
    };
    let first = sample_cloud(&mut rng);
    let mut second = sample_cloud(&mut rng);
    let theta = angle_deg.to_radians();
    let (s, c) = theta.sin_cos();
    for j in 0..n {
        let a = second[(top, j)];
        let b = second[(side, j)];
        second[(top, j)] = c * a - s * b;
        second[(side, j)] = s * a + c * b;
    }
    let mut low = DMatrix::<f64>::zeros(d, 2 * n);
    low.columns_mut(0, n).copy_from(&first);
    low.columns_mut(n, n).copy_from(&second);
    let low = normalize_columns(&low)?;

    let basis = random_orthonormal_basis(cfg.ambient_dim, d, mix_seed(&[geometry_seed, 7]))?;
    let mut x = normalize_columns(&(basis.matrix() * low.data()))?.data().clone();

    if sigma > 0.0 {
        let noise_seed = mix_seed(&[cfg.seed, trial, angle_deg.to_bits(), sigma.to_bits(), NOISE_STREAM]);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for v in x.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut noise_rng);
            *v += sigma * g;
        }
    }
    let labels = (0..2 * n).map(|j| usize::from(j >= n)).collect();
    normalize_columns(&x)?.with_labels(labels)
}

/// Two sets of `n_per_set` unit vectors in the plane, each spread evenly
/// over an arc of `arc_span_deg`, with `gap_deg` between the last point of
/// the first set and the first point of the second. Points are numbered in
/// angular order; the seed only fixes a global rotation.
pub fn generate_planar_arcs(
    n_per_set: usize,
    gap_deg: f64,
    arc_span_deg: f64,
    seed: u64,
) -> Result<PointCloud> {
    if n_per_set == 0 {
        return Err(SscError::InvalidParameter("need at least one point per set".into()));
    }
    if !(gap_deg >= 0.0) || !(arc_span_deg >= 0.0) {
        return Err(SscError::InvalidParameter("gap and span must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, ARC_STREAM]));
    let offset: f64 = rand::Rng::random::<f64>(&mut rng) * std::f64::consts::TAU;
    let step = if n_per_set > 1 {
        arc_span_deg / (n_per_set - 1) as f64
    } else {
        0.0
    };
    let angles: Vec<f64> = (0..2 * n_per_set)
        .map(|j| {
            let set = j / n_per_set;
            let k = (j % n_per_set) as f64;
            let start = set as f64 * (arc_span_deg + gap_deg);
            offset + (start + k * step).to_radians()
        })
        .collect();
    let data = DMatrix::from_fn(2, angles.len(), |i, j| {
        if i == 0 {
            angles[j].cos()
        } else {
            angles[j].sin()
        }
    });
    let labels = (0..2 * n_per_set).map(|j| usize::from(j >= n_per_set)).collect();
    normalize_columns(&data)?.with_labels(labels)
}

/// `n_per_subspace` unit vectors on each of `k` random `d`-dimensional
/// subspaces of `R^m`, redrawing the bases until every pair has smallest
/// principal angle at least `min_angle_deg`. Points are ordered by
/// subspace.
pub fn generate_union_of_subspaces(
    m: usize,
    d: usize,
    k: usize,
    n_per_subspace: usize,
    min_angle_deg: f64,
    seed: u64,
) -> Result<PointCloud> {
    if d == 0 || k * d > m || n_per_subspace == 0 {
        return Err(SscError::InvalidParameter(format!(
            "cannot place {k} subspaces of dimension {d} in R^{m}"
        )));
    }
    let max_cos = min_angle_deg.to_radians().cos();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, UNION_STREAM]));
    for attempt in 0..1000u64 {
        let bases: Vec<DMatrix<f64>> = (0..k)
            .map(|i| random_orthonormal_basis(m, d, mix_seed(&[seed, attempt, i as u64])).map(|b| b.matrix().clone()))
            .collect::<Result<_>>()?;
        let separated = (0..k).all(|a| {
            (a + 1..k).all(|b| {
                let cos = crate::linalg::jacobi_svd(&bases[a].tr_mul(&bases[b])).singular_values[0];
                cos <= max_cos
            })
        });
        if !separated {
            continue;
        }
        let mut data = DMatrix::<f64>::zeros(m, k * n_per_subspace);
        for (i, b) in bases.iter().enumerate() {
            let coeffs = DMatrix::from_fn(d, n_per_subspace, |_, _| StandardNormal.sample(&mut rng));
            data.columns_mut(i * n_per_subspace, n_per_subspace).copy_from(&(b * coeffs));
        }
        let labels = (0..k * n_per_subspace).map(|j| j / n_per_subspace).collect();
        return normalize_columns(&data)?.with_labels(labels);
    }
    Err(SscError::Precondition(format!(
        "no subspaces {min_angle_deg}° apart found for seed {seed}"
    )))
}

/// Angle in degrees between the (unnormalized) centroids of clusters 0 and 1.
pub fn centroid_separation_deg(cloud: &PointCloud) -> Option<f64> {
    let labels = cloud.labels()?;
    let m = cloud.dim();
    let mut sums = [nalgebra::DVector::<f64>::zeros(m), nalgebra::DVector::<f64>::zeros(m)];
    for (j, &l) in labels.iter().enumerate() {
        if l < 2 {
            sums[l] += cloud.data().column(j);
        }
    }
    let denom = sums[0].norm() * sums[1].norm();
    if denom == 0.0 {
        return None;
    }
    Some((sums[0].dot(&sums[1]) / denom).clamp(-1.0, 1.0).acos().to_degrees())
}

/// One point per row, coordinates followed by the label (empty if absent).
pub fn to_csv(cloud: &PointCloud) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..cloud.dim()).map(|i| format!("x{i}")).collect();
    let _ = writeln!(out, "{},label", header.join(","));
    for j in 0..cloud.len() {
        let coords: Vec<String> = cloud.data().column(j).iter().map(|v| format!("{v:.17e}")).collect();
        let label = cloud.labels().map(|l| l[j].to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{label}", coords.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{angle, jacobi_svd};
    use approx::assert_abs_diff_eq;

    #[test]
    fn sphere_is_deterministic_and_labelled() {
        let cfg = SweepConfig::default();
        let a = generate_two_cluster_sphere(&cfg, 30.0, 0.02, 4).unwrap();
        let b = generate_two_cluster_sphere(&cfg, 30.0, 0.02, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        assert_eq!(a.dim(), 20);
        let labels = a.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 20);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 20);
        for j in 0..a.len() {
            assert_abs_diff_eq!(a.data().column(j).norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn noiseless_sphere_has_rank_three() {
        let cfg = SweepConfig::default();
        let x = generate_two_cluster_sphere(&cfg, 45.0, 0.0, 0).unwrap();
        let s = jacobi_svd(x.data()).singular_values;
        assert!(s[2] > 1e-3);
        assert!(s.iter().skip(3).all(|&v| v < 1e-9));
    }

    #[test]
    fn centroid_separation_tracks_angle() {
        let cfg = SweepConfig::default();
        let mean = |angle: f64| {
            (0..10)
                .map(|t| centroid_separation_deg(&generate_two_cluster_sphere(&cfg, angle, 0.0, t).unwrap()).unwrap())
                .sum::<f64>()
                / 10.0
        };
        assert!(mean(0.0) < 5.0);
        assert!((mean(90.0) - 90.0).abs() < 5.0);
    }

    #[test]
    fn sphere_rejects_bad_angle() {
        assert!(generate_two_cluster_sphere(&SweepConfig::default(), 181.0, 0.0, 0).is_err());
    }

    #[test]
    fn arcs_examples() {
        let pc = generate_planar_arcs(5, 0.0, 40.0, 1).unwrap();
        let a = angle(&pc.point(4), &pc.point(5)).unwrap();
        assert!(a < 1e-7);

        let pc = generate_planar_arcs(1, 20.0, 0.0, 1).unwrap();
        assert_abs_diff_eq!(angle(&pc.point(0), &pc.point(1)).unwrap().to_degrees(), 20.0, epsilon = 1e-9);
    }

    #[test]
    fn mix_seed_separates_streams() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_eq!(mix_seed(&[5, 6, 7]), mix_seed(&[5, 6, 7]));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let pc = generate_planar_arcs(2, 10.0, 10.0, 0).unwrap();
        let csv = to_csv(&pc);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x0,x1,label");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].ends_with(",1"));
    }
}
