//! Two planar arcs separated by a gap, coded with bpdn; affinity heatmaps
//! and block statistics per gap.

use std::path::Path;

use serde::{Deserialize, Serialize};
use ssc_core::graph::{build_affinity, AffinityMatrix};
use ssc_core::solvers::code_pointcloud;
use ssc_core::synth::generate_planar_arcs;
use ssc_core::{Estimator, SolverSettings};

use crate::svg::Heatmap;
use crate::CliError;

pub const POINTS_PER_SET: usize = 5;
pub const ARC_SPAN_DEG: f64 = 40.0;
pub const SEED: u64 = 0;

/// Entries below this count as zero affinity.
const NONZERO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub gap_deg: f64,
    /// Mean over all cross-block entries.
    pub mean_cross: f64,
    pub mean_within_nonzero: f64,
    /// `mean_cross / mean_within_nonzero`.
    pub ratio: f64,
    /// Mean nonzero cross entry over mean nonzero within entry.
    pub nonzero_ratio: f64,
    /// Largest cross entry over mean nonzero within entry.
    pub max_ratio: f64,
}

pub fn block_stats(a: &AffinityMatrix, n1: usize, gap_deg: f64) -> GapSummary {
    let m = a.matrix();
    let n = m.nrows();
    let (mut cross, mut cross_nz, mut within_nz, mut max_cross) = (Vec::new(), Vec::new(), Vec::new(), 0.0f64);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = m[(i, j)];
            if (i < n1) != (j < n1) {
                cross.push(v);
                max_cross = max_cross.max(v);
                if v > NONZERO {
                    cross_nz.push(v);
                }
            } else if v > NONZERO {
                within_nz.push(v);
            }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mean_cross = mean(&cross);
    let mean_within_nonzero = mean(&within_nz);
    let over = |x: f64| if mean_within_nonzero > 0.0 { x / mean_within_nonzero } else { f64::NAN };
    GapSummary {
        gap_deg,
        mean_cross,
        mean_within_nonzero,
        ratio: over(mean_cross),
        nonzero_ratio: over(mean(&cross_nz)),
        max_ratio: over(max_cross),
    }
}

pub fn affinity_for_gap(gap_deg: f64, lambda: f64) -> Result<AffinityMatrix, CliError> {
    if !(gap_deg >= 0.0) {
        return Err(CliError::Usage(format!("gap must be nonnegative, got {gap_deg}")));
    }
    let cloud = generate_planar_arcs(POINTS_PER_SET, gap_deg, ARC_SPAN_DEG, SEED)?;
    let settings = SolverSettings::default().with_lambda(lambda);
    settings.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let coding = code_pointcloud(&cloud, Estimator::Bpdn, &settings)?;
    Ok(build_affinity(&coding.coefficients))
}

pub fn run_fig1(gaps: &[f64], lambda: f64) -> Result<Vec<(GapSummary, AffinityMatrix)>, CliError> {
    gaps.iter()
        .map(|&g| {
            let a = affinity_for_gap(g, lambda)?;
            Ok((block_stats(&a, POINTS_PER_SET, g), a))
        })
        .collect()
}

/// Per gap: `fig1_gap_<g>.svg` and `fig1_gap_<g>.csv`, plus
/// `fig1_summary.csv`. Nothing is written for an empty gap list.
pub fn write_fig1(rows: &[(GapSummary, AffinityMatrix)], lambda: f64, dir: &Path) -> Result<(), CliError> {
    if rows.is_empty() {
        return Ok(());
    }
    std::fs::create_dir_all(dir)?;
    for (s, a) in rows {
        let m = a.matrix();
        let values: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        let map = Heatmap {
            title: format!("|C| + |C|^T, gap {} deg, lambda {lambda}", s.gap_deg),
            values: values.clone(),
            split: Some(POINTS_PER_SET),
        };
        std::fs::write(dir.join(format!("fig1_gap_{}.svg", s.gap_deg)), map.render())?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join(format!("fig1_gap_{}.csv", s.gap_deg)))?;
        for row in &values {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("fig1_summary.csv"))?;
    for (s, _) in rows {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn block_stats_on_a_known_matrix() {
        let m = DMatrix::from_row_slice(4, 4, &[
            0.0, 2.0, 0.5, 0.0,
            2.0, 0.0, 0.0, 0.0,
            0.5, 0.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
        ]);
        let s = block_stats(&AffinityMatrix::new(m).unwrap(), 2, 1.0);
        assert!((s.mean_cross - 1.0 / 8.0).abs() < 1e-15);
        assert!((s.mean_within_nonzero - 1.5).abs() < 1e-15);
        assert!((s.nonzero_ratio - 0.5 / 1.5).abs() < 1e-15);
        assert!((s.max_ratio - 0.5 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn empty_gap_list_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        write_fig1(&run_fig1(&[], 0.01).unwrap(), 0.01, &out).unwrap();
        assert!(!out.exists());
    }

    #[test]
    fn negative_gap_is_a_usage_error() {
        assert!(matches!(affinity_for_gap(-1.0, 0.01), Err(CliError::Usage(_))));
    }
}
