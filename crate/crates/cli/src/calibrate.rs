//! Pilot grid for the extension threshold δ.
//!
//! For each δ the selective methods are run at angle 0 (no gap) and 45°.
//! A δ is admissible when the angle-0 connectivity stays within
//! [`ANGLE_ZERO_TOLERANCE`] of the lasso base; among admissible values the
//! one with the largest 45° connectivity is recommended.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssc_core::graph::{build_affinity, connectivity_xi};
use ssc_core::selective::{extend_coding, SelectionMethod};
use ssc_core::solvers::{code_pointcloud, Coding};
use ssc_core::synth::generate_two_cluster_sphere;
use ssc_core::{Estimator, PenaltyForm, PointCloud};

use crate::config::{Method, RunConfig};
use crate::CliError;

pub const ANGLE_ZERO_TOLERANCE: f64 = 0.05;
pub const PROBE_ANGLE: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub method: Method,
    pub delta: f64,
    pub xi_angle0: f64,
    pub xi_probe: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub trials: usize,
    pub lasso_xi_angle0: f64,
    pub lasso_xi_probe: f64,
    pub rows: Vec<CalibrationRow>,
    /// Best admissible δ per selective method.
    pub recommended: Vec<(Method, Option<f64>)>,
}

fn xi_of(coding: &Coding, n1: usize) -> Result<f64, CliError> {
    let a = build_affinity(&coding.coefficients);
    Ok(connectivity_xi(&a, n1, a.len() - n1)?.xi)
}

pub fn calibrate(cfg: &RunConfig) -> Result<CalibrationReport, CliError> {
    cfg.validate()?;
    let n1 = cfg.sweep.points_per_cluster;
    let trials = cfg.calibration_trials;
    let settings = cfg.base_settings();
    let bases: Vec<((f64, usize), PointCloud, Coding)> = [0.0, PROBE_ANGLE]
        .into_iter()
        .flat_map(|a| (0..trials).map(move |t| (a, t)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(a, t)| {
            let cloud = generate_two_cluster_sphere(&cfg.sweep, a, 0.0, t as u64)?;
            let base = code_pointcloud(&cloud, Estimator::Lasso(PenaltyForm::Unsquared), &settings)?;
            Ok(((a, t), cloud, base))
        })
        .collect::<Result<_, CliError>>()?;

    let mean_at = |angle: f64, f: &dyn Fn(&PointCloud, &Coding) -> Result<f64, CliError>| -> Result<f64, CliError> {
        let vals: Vec<f64> = bases
            .iter()
            .filter(|((a, _), _, _)| *a == angle)
            .map(|(_, cloud, base)| f(cloud, base))
            .collect::<Result<_, _>>()?;
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let lasso_xi_angle0 = mean_at(0.0, &|_, b| xi_of(b, n1))?;
    let lasso_xi_probe = mean_at(PROBE_ANGLE, &|_, b| xi_of(b, n1))?;

    let mut rows = Vec::new();
    for (method, sel) in [(Method::Dantzig, SelectionMethod::Dantzig), (Method::Subspace, SelectionMethod::Subspace)] {
        for &delta in &cfg.delta_grid {
            let ext = |cloud: &PointCloud, base: &Coding| -> Result<f64, CliError> {
                xi_of(&extend_coding(cloud, base, sel, delta, cfg.max_rounds)?.coding, n1)
            };
            let xi_angle0 = mean_at(0.0, &ext)?;
            let xi_probe = mean_at(PROBE_ANGLE, &ext)?;
            rows.push(CalibrationRow {
                method,
                delta,
                xi_angle0,
                xi_probe,
                admissible: (xi_angle0 - lasso_xi_angle0).abs() <= ANGLE_ZERO_TOLERANCE,
            });
        }
    }
    let recommended = [Method::Dantzig, Method::Subspace]
        .into_iter()
        .map(|m| {
            let best = rows
                .iter()
                .filter(|r| r.method == m && r.admissible)
                .max_by(|a, b| a.xi_probe.total_cmp(&b.xi_probe))
                .map(|r| r.delta);
            (m, best)
        })
        .collect();
    Ok(CalibrationReport { trials, lasso_xi_angle0, lasso_xi_probe, rows, recommended })
}

impl CalibrationReport {
    /// Plain-text table for the terminal.
    pub fn table(&self) -> String {
        let mut out = format!(
            "lasso: xi(0) = {:.4}, xi({PROBE_ANGLE}) = {:.4} over {} trial(s)\n{:<10} {:>6} {:>8} {:>8}  admissible\n",
            self.lasso_xi_angle0, self.lasso_xi_probe, self.trials, "method", "delta", "xi(0)", "xi(45)"
        );
        for r in &self.rows {
            out += &format!(
                "{:<10} {:>6} {:>8.4} {:>8.4}  {}\n",
                r.method.name(),
                r.delta,
                r.xi_angle0,
                r.xi_probe,
                if r.admissible { "yes" } else { "no" }
            );
        }
        for (m, d) in &self.recommended {
            match d {
                Some(d) => out += &format!("recommended delta for {m}: {d}\n"),
                None => out += &format!("no admissible delta for {m}\n"),
            }
        }
        out
    }
}
