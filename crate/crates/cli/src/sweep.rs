//! Connectivity sweep over (angle, σ, trial, method).

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssc_core::graph::{build_affinity, clustering_error, connectivity_xi, spectral_cluster, ClusterLabels};
use ssc_core::selective::{extend_coding, SelectionMethod};
use ssc_core::solvers::{code_pointcloud, Coding, CoefficientMatrix};
use ssc_core::synth::{generate_two_cluster_sphere, mix_seed};
use ssc_core::{Estimator, PenaltyForm, SolverSettings};

use crate::config::{Method, RunConfig};
use crate::svg::{LineChart, Series, Style};
use crate::CliError;

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityRecord {
    pub angle_deg: f64,
    pub sigma: f64,
    pub trial: usize,
    pub method: Method,
    pub xi: f64,
    pub clustering_error: f64,
    pub wall_time_ms: f64,
}

/// A cell that could not be computed; its record carries NaN values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub angle_deg: f64,
    pub sigma: f64,
    pub trial: usize,
    pub method: Method,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub angle_deg: f64,
    pub sigma: f64,
    pub method: Method,
    pub trials: usize,
    pub xi_mean: f64,
    pub xi_std: f64,
    pub error_mean: f64,
    pub error_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutput {
    pub config: RunConfig,
    pub records: Vec<ConnectivityRecord>,
    pub failures: Vec<CellFailure>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepOutput {
    /// Aggregate for one (angle, σ, method) cell.
    pub fn aggregate(&self, angle_deg: f64, sigma: f64, method: Method) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.angle_deg == angle_deg && a.sigma == sigma && a.method == method)
    }
}

fn measure(
    a: &CoefficientMatrix,
    n1: usize,
    truth: &ClusterLabels,
    seed: u64,
) -> Result<(f64, f64), CliError> {
    let affinity = build_affinity(a);
    let xi = connectivity_xi(&affinity, n1, affinity.len() - n1)?.xi;
    let labels = spectral_cluster(&affinity, 2, seed)?.labels;
    Ok((xi, clustering_error(&labels, truth)?))
}

struct TrialOutcome {
    records: Vec<ConnectivityRecord>,
    failures: Vec<CellFailure>,
}

fn run_trial(cfg: &RunConfig, angle: f64, sigma: f64, trial: usize) -> TrialOutcome {
    let mut out = TrialOutcome { records: Vec::new(), failures: Vec::new() };
    let mut push = |method: Method, result: Result<(f64, f64), CliError>, ms: f64| {
        let (xi, err) = match result {
            Ok(v) => v,
            Err(e) => {
                out.failures.push(CellFailure { angle_deg: angle, sigma, trial, method, error: e.to_string() });
                (f64::NAN, f64::NAN)
            }
        };
        out.records.push(ConnectivityRecord {
            angle_deg: angle,
            sigma,
            trial,
            method,
            xi,
            clustering_error: err,
            wall_time_ms: if cfg.timing { (ms * 1000.0).round() / 1000.0 } else { 0.0 },
        });
    };
    let cloud = match generate_two_cluster_sphere(&cfg.sweep, angle, sigma, trial as u64) {
        Ok(c) => c,
        Err(e) => {
            for &m in &cfg.methods {
                push(m, Err(e.clone().into()), 0.0);
            }
            return out;
        }
    };
    let n1 = cfg.sweep.points_per_cluster;
    let truth = ClusterLabels::from_vec(cloud.labels().unwrap_or_default().to_vec());
    let cluster_seed = mix_seed(&[cfg.sweep.seed, trial as u64, angle.to_bits(), sigma.to_bits()]);
    let base_settings = cfg.base_settings();

    // The lasso codes are shared by the lasso row and both selective
    // methods; each of those rows is charged the base solve time.
    let (base, base_ms) = if cfg.methods.iter().any(|m| m.needs_lasso_base()) {
        let t = Instant::now();
        let r = code_pointcloud(&cloud, Estimator::Lasso(PenaltyForm::Unsquared), &base_settings);
        (Some(r), t.elapsed().as_secs_f64() * 1e3)
    } else {
        (None, 0.0)
    };
    let lasso_base = || -> Result<&Coding, CliError> {
        match base.as_ref().expect("computed when needed") {
            Ok(c) => Ok(c),
            Err(e) => Err(e.clone().into()),
        }
    };

    for &method in &cfg.methods {
        let t = Instant::now();
        let result = match method {
            Method::Lasso => lasso_base().and_then(|c| measure(&c.coefficients, n1, &truth, cluster_seed)),
            Method::Bpdn => {
                let s = SolverSettings { lambda: cfg.bpdn_lambda, ..base_settings };
                code_pointcloud(&cloud, Estimator::Bpdn, &s)
                    .map_err(CliError::from)
                    .and_then(|c| measure(&c.coefficients, n1, &truth, cluster_seed))
            }
            Method::Omp => {
                let est = Estimator::Omp { k_max: cfg.omp_k(), residual_tol: cfg.omp_residual_tol };
                code_pointcloud(&cloud, est, &base_settings)
                    .map_err(CliError::from)
                    .and_then(|c| measure(&c.coefficients, n1, &truth, cluster_seed))
            }
            Method::Dantzig | Method::Subspace => {
                let sel = if method == Method::Dantzig { SelectionMethod::Dantzig } else { SelectionMethod::Subspace };
                lasso_base().and_then(|b| {
                    let e = extend_coding(&cloud, b, sel, cfg.sweep.delta, cfg.max_rounds)?;
                    measure(&e.coding.coefficients, n1, &truth, cluster_seed)
                })
            }
        };
        let shared = if method.needs_lasso_base() { base_ms } else { 0.0 };
        push(method, result, t.elapsed().as_secs_f64() * 1e3 + shared);
    }
    out
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let vals: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = if vals.len() > 1 {
        vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn aggregate(records: &[ConnectivityRecord]) -> Vec<Aggregate> {
    // Keys keep first-appearance order of angle/σ and the method enum order.
    let mut groups: BTreeMap<(usize, usize, Method), Vec<&ConnectivityRecord>> = BTreeMap::new();
    let mut angles: Vec<f64> = Vec::new();
    let mut sigmas: Vec<f64> = Vec::new();
    for r in records {
        let ai = angles.iter().position(|&a| a == r.angle_deg).unwrap_or_else(|| {
            angles.push(r.angle_deg);
            angles.len() - 1
        });
        let si = sigmas.iter().position(|&s| s == r.sigma).unwrap_or_else(|| {
            sigmas.push(r.sigma);
            sigmas.len() - 1
        });
        groups.entry((ai, si, r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((ai, si, method), rs)| {
            let xi: Vec<f64> = rs.iter().map(|r| r.xi).collect();
            let err: Vec<f64> = rs.iter().map(|r| r.clustering_error).collect();
            let (xi_mean, xi_std) = mean_std(&xi);
            let (error_mean, error_std) = mean_std(&err);
            Aggregate {
                angle_deg: angles[ai],
                sigma: sigmas[si],
                method,
                trials: rs.len(),
                xi_mean,
                xi_std,
                error_mean,
                error_std,
            }
        })
        .collect()
}

/// Runs every cell. Cells are computed in parallel and merged in
/// (angle, σ, trial, method) order.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutput, CliError> {
    cfg.validate()?;
    let s = &cfg.sweep;
    let jobs: Vec<(f64, f64, usize)> = s
        .angle_grid_deg
        .iter()
        .flat_map(|&a| s.noise_sigmas.iter().flat_map(move |&sg| (0..s.trials).map(move |t| (a, sg, t))))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(a, sg, t)| run_trial(cfg, a, sg, t))
        .collect();
    let mut records = Vec::with_capacity(jobs.len() * cfg.methods.len());
    let mut failures = Vec::new();
    for o in outcomes {
        records.extend(o.records);
        failures.extend(o.failures);
    }
    let aggregates = aggregate(&records);
    Ok(SweepOutput { config: cfg.clone(), records, failures, aggregates })
}

fn style(method: Method) -> Style {
    match method {
        Method::Lasso => Style { color: "#2ca02c", dash: Some("2 3") },
        Method::Omp => Style { color: "#d62728", dash: Some("8 3 2 3") },
        Method::Dantzig => Style { color: "#1f77b4", dash: Some("7 4") },
        Method::Subspace => Style { color: "black", dash: None },
        Method::Bpdn => Style { color: "#ff7f0e", dash: Some("1 2") },
    }
}

pub fn chart_for_sigma(out: &SweepOutput, sigma: f64) -> LineChart {
    let angles = &out.config.sweep.angle_grid_deg;
    let (lo, hi) = angles
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let step = if hi - lo > 90.0 { 30.0 } else if hi - lo > 30.0 { 10.0 } else { 5.0 };
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    let series = out
        .config
        .methods
        .iter()
        .map(|&m| Series {
            name: m.name().to_string(),
            style: style(m),
            points: angles
                .iter()
                .filter_map(|&a| out.aggregate(a, sigma, m).map(|g| (a, g.xi_mean, g.xi_std)))
                .collect(),
        })
        .collect();
    LineChart {
        title: format!("Connectivity between the clusters, sigma = {sigma}"),
        x_label: "angle between clusters (degrees)".into(),
        y_label: "xi".into(),
        x_range: (lo, hi),
        y_range: (0.0, 0.7),
        x_ticks: (first..=last).map(|k| k as f64 * step).collect(),
        y_ticks: (0..=7).map(|k| k as f64 * 0.1).collect(),
        series,
    }
}

/// Writes `records.csv`, `summary.csv`, `sweep.json` and one
/// `xi_sigma_<σ>.svg` per noise level.
pub fn write_outputs(out: &SweepOutput, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
    for r in &out.records {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for a in &out.aggregates {
        w.serialize(a)?;
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(out)?;
    std::fs::write(dir.join("sweep.json"), json + "\n")?;
    for &sigma in &out.config.sweep.noise_sigmas {
        let svg = chart_for_sigma(out, sigma).render();
        std::fs::write(dir.join(format!("xi_sigma_{sigma}.svg")), svg)?;
    }
    Ok(())
}
