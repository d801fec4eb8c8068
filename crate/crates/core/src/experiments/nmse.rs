//! NMSE sweeps: for every (d, n) cell, sample n log-normal vectors, quantize
//! them with a shared transform, aggregate through the configured pipeline
//! and compare with the true mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{quantize_round, simulate_secure_mean};
use super::{lognormal_vectors, ExperimentConfig, ScaleMode};
use crate::error::Result;
use crate::quantize::{nmse, QuantizeConfig, Scheme, Transform};
use crate::ring::{Role, SharedRandomness};

/// One cell of an NMSE sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmseRow {
    pub scheme: Scheme,
    pub scales: ScaleMode,
    /// Conversion and pipeline, e.g. `approx/III`.
    pub mode: String,
    pub d: usize,
    pub n: usize,
    pub trials: usize,
    pub nmse_mean: f64,
    /// Standard error of the mean over trials (0 for a single trial).
    pub nmse_stderr: f64,
}

/// Randomness of one trial. It depends on the scheme, d, n and trial index
/// but not on the conversion or pipeline, so pipelines compared under one
/// seed see identical data and quantization bits.
fn trial_randomness(cfg: &ExperimentConfig, d: usize, n: usize, trial: usize) -> SharedRandomness {
    SharedRandomness::new(cfg.seed)
        .derive(cfg.scheme.tag() as u64)
        .derive(d as u64)
        .derive(n as u64)
        .derive(trial as u64)
}

/// NMSE of one trial of one cell.
pub fn nmse_trial(cfg: &ExperimentConfig, d: usize, n: usize, trial: usize) -> Result<f64> {
    let shared = trial_randomness(cfg, d, n, trial);
    let xs = lognormal_vectors(n, d, &cfg.distribution, &shared.derive(1))?;
    let transform = Transform::new(
        cfg.scheme,
        d,
        shared.derive(2).seed,
        &QuantizeConfig::default(),
    )?;
    let quant = shared.derive(3);
    let qvs = quantize_round(&transform, &xs, cfg.scales == ScaleMode::Global, |i| {
        quant.stream(Role::Quantizer(i), 0)
    })?;
    let mut rng = shared.stream(Role::Dealer, 0);
    let agg = simulate_secure_mean(&qvs, cfg.approach, cfg.conversion, cfg.servers, &mut rng)?;
    nmse(&agg, &xs)
}

/// Runs every (d, n) cell of `cfg` for `cfg.trials` trials. Rows are sorted
/// by (d, n).
pub fn run_nmse_sweep(cfg: &ExperimentConfig) -> Result<Vec<NmseRow>> {
    cfg.validate()?;
    let mut cells: Vec<(usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&d| cfg.clients.iter().map(move |&n| (d, n)))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let jobs: Vec<(usize, usize, usize)> = cells
        .iter()
        .flat_map(|&(d, n)| (0..cfg.trials).map(move |t| (d, n, t)))
        .collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(d, n, t)| nmse_trial(cfg, d, n, t))
        .collect::<Result<_>>()?;
    let mode = format!("{}/{}", cfg.conversion, cfg.approach);
    Ok(cells
        .iter()
        .zip(values.chunks(cfg.trials))
        .map(|(&(d, n), v)| {
            let (mean, stderr) = mean_stderr(v);
            NmseRow {
                scheme: cfg.scheme,
                scales: cfg.scales,
                mode: mode.clone(),
                d,
                n,
                trials: cfg.trials,
                nmse_mean: mean,
                nmse_stderr: stderr,
            }
        })
        .collect())
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Least-squares slope of log NMSE against log n.
pub fn log_log_slope(rows: &[NmseRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.nmse_mean.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
