//! Flat `key = value` run configuration. Lists are comma separated; angle
//! lists also accept `start:stop:step`. `#` starts a comment.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use ssc_core::synth::SweepConfig;
use ssc_core::SolverSettings;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lasso,
    Bpdn,
    Omp,
    Dantzig,
    Subspace,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Lasso,
        Method::Bpdn,
        Method::Omp,
        Method::Dantzig,
        Method::Subspace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::Bpdn => "bpdn",
            Method::Omp => "omp",
            Method::Dantzig => "dantzig",
            Method::Subspace => "subspace",
        }
    }

    /// Whether the method is built on top of the lasso base codes.
    pub fn needs_lasso_base(self) -> bool {
        matches!(self, Method::Lasso | Method::Dantzig | Method::Subspace)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sweep: SweepConfig,
    pub methods: Vec<Method>,
    /// Extension rounds for the selective methods.
    pub max_rounds: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// OMP sparsity cap; defaults to the subspace dimension.
    pub omp_k: Option<usize>,
    pub omp_residual_tol: f64,
    /// Squared residual bound when `bpdn` is among the methods.
    pub bpdn_lambda: f64,
    /// Record measured wall time. Off by default so that repeated runs
    /// write byte-identical files.
    pub timing: bool,
    pub delta_grid: Vec<f64>,
    pub calibration_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sweep: SweepConfig::default(),
            methods: vec![Method::Lasso, Method::Omp, Method::Dantzig, Method::Subspace],
            max_rounds: 20,
            max_iter: 2000,
            tol: 1e-6,
            omp_k: None,
            omp_residual_tol: 1e-6,
            bpdn_lambda: 0.01,
            timing: false,
            delta_grid: vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9],
            calibration_trials: 3,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn base_settings(&self) -> SolverSettings {
        SolverSettings {
            lambda: self.sweep.lambda,
            max_iter: self.max_iter,
            tol_primal: self.tol,
            tol_dual: self.tol,
            ..SolverSettings::default()
        }
    }

    pub fn omp_k(&self) -> usize {
        self.omp_k.unwrap_or(self.sweep.subspace_dim)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sweep.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.base_settings()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.methods.is_empty() {
            return Err(CliError::Usage("methods must not be empty".into()));
        }
        if !(self.sweep.lambda > 0.0) || !(self.bpdn_lambda > 0.0) {
            return Err(CliError::Usage("lambda and bpdn_lambda must be positive".into()));
        }
        if !(self.sweep.delta > 0.0) || self.delta_grid.iter().any(|d| !(*d > 0.0)) {
            return Err(CliError::Usage("delta values must be positive".into()));
        }
        let n = 2 * self.sweep.points_per_cluster;
        if self.omp_k() == 0 || self.omp_k() >= n {
            return Err(CliError::Usage(format!("omp_k must lie in [1, {}]", n - 1)));
        }
        if self.calibration_trials == 0 {
            return Err(CliError::Usage("calibration_trials must be positive".into()));
        }
        Ok(())
    }
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}

fn parse_angles(v: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    if parts.len() == 1 {
        return parse_list("angles", v);
    }
    let [start, stop, step] = parts[..] else {
        return Err(CliError::Usage(format!("angles: expected start:stop:step, got '{v}'")));
    };
    let (start, stop, step): (f64, f64, f64) = (
        parse_one("angles", start)?,
        parse_one("angles", stop)?,
        parse_one("angles", step)?,
    );
    if !(step > 0.0) || stop < start {
        return Err(CliError::Usage(format!("angles: bad range '{v}'")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + step * k as f64).collect())
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

impl FromStr for RunConfig {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("line {}: expected key = value", lineno + 1)));
            };
            let (key, v) = (key.trim(), value.trim());
            let s = &mut cfg.sweep;
            match key {
                "points_per_cluster" => s.points_per_cluster = parse_one(key, v)?,
                "angles" | "angle_grid_deg" => s.angle_grid_deg = parse_angles(v)?,
                "sigmas" | "noise_sigmas" => s.noise_sigmas = parse_list(key, v)?,
                "trials" => s.trials = parse_one(key, v)?,
                "ambient_dim" => s.ambient_dim = parse_one(key, v)?,
                "subspace_dim" => s.subspace_dim = parse_one(key, v)?,
                "lambda" => s.lambda = parse_one(key, v)?,
                "delta" => s.delta = parse_one(key, v)?,
                "seed" => s.seed = parse_one(key, v)?,
                "cloud_spread" => s.cloud_spread = parse_one(key, v)?,
                "methods" => cfg.methods = parse_list(key, v)?,
                "max_rounds" => cfg.max_rounds = parse_one(key, v)?,
                "max_iter" => cfg.max_iter = parse_one(key, v)?,
                "tol" => cfg.tol = parse_one(key, v)?,
                "omp_k" => cfg.omp_k = Some(parse_one(key, v)?),
                "omp_residual_tol" => cfg.omp_residual_tol = parse_one(key, v)?,
                "bpdn_lambda" => cfg.bpdn_lambda = parse_one(key, v)?,
                "timing" => cfg.timing = parse_bool(key, v)?,
                "delta_grid" => cfg.delta_grid = parse_list(key, v)?,
                "calibration_trials" => cfg.calibration_trials = parse_one(key, v)?,
                _ => {
                    return Err(CliError::Usage(format!("line {}: unknown key '{key}'", lineno + 1)));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = "# nothing\n\n".parse().unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.sweep.angle_grid_deg.len(), 37);
    }

    #[test]
    fn parses_lists_and_ranges() {
        let cfg: RunConfig = "angles = 0:20:10\nsigmas = 0, 0.02\nmethods = lasso,subspace\ntiming = yes\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.sweep.angle_grid_deg, vec![0.0, 10.0, 20.0]);
        assert_eq!(cfg.sweep.noise_sigmas, vec![0.0, 0.02]);
        assert_eq!(cfg.methods, vec![Method::Lasso, Method::Subspace]);
        assert!(cfg.timing);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!("colour = red".parse::<RunConfig>().is_err());
        assert!("methods = lasso,l0".parse::<RunConfig>().is_err());
        assert!("trials = many".parse::<RunConfig>().is_err());
        assert!("angles = 0,200".parse::<RunConfig>().is_err());
        assert!("just words".parse::<RunConfig>().is_err());
    }
}
