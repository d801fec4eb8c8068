//! Experiment harness: NMSE sweeps over log-normal gradient surrogates,
//! desk-scale federated training with optional poisoning and defense, cost
//! tables and CSV/JSON report emission.
//!
//! Every experiment draws its randomness from [`SharedRandomness`] streams
//! keyed by the configured seed and by the cell, trial, round and client it
//! belongs to, so results do not depend on thread scheduling.

pub mod check;
pub mod fl;
pub mod nmse;
pub mod pipeline;
pub mod report;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::bitconv::ConversionMode;
use crate::error::{Error, Result};
use crate::mpc::protocols::MAX_EXACT_SERVERS;
use crate::mpc::Approach;
use crate::quantize::Scheme;
use crate::ring::{Role, SharedRandomness};

pub use check::{self_check, CheckOutcome};
pub use fl::{
    run_defense_experiment, run_fl_training, Dataset, DefenseResult, FlTask, RoundRecord,
};
pub use nmse::{run_nmse_sweep, NmseRow};
pub use pipeline::{quantize_round, simulate_secure_mean};
pub use report::{cost_table, emit_report, write_report, CostRow, ReportFormat, ReportRow};

/// Whether clients use their own scales or one public pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    Global,
    Local,
}

impl fmt::Display for ScaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleMode::Global => "global",
            ScaleMode::Local => "local",
        })
    }
}

impl FromStr for ScaleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(ScaleMode::Global),
            "local" => Ok(ScaleMode::Local),
            other => Err(Error::Parameter(format!("unknown scale mode {other}"))),
        }
    }
}

/// Log-normal surrogate for gradient coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientDistribution {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for GradientDistribution {
    fn default() -> Self {
        GradientDistribution {
            mu: 0.0,
            sigma: 1.0,
        }
    }
}

/// `n` vectors of dimension `d` with i.i.d. log-normal coordinates. Vector
/// `i` comes from its own client stream, so it does not depend on `n`.
pub fn lognormal_vectors(
    n: usize,
    d: usize,
    dist: &GradientDistribution,
    shared: &SharedRandomness,
) -> Result<Vec<Vec<f64>>> {
    let law = LogNormal::new(dist.mu, dist.sigma)
        .map_err(|e| Error::Parameter(format!("log-normal({}, {}): {e}", dist.mu, dist.sigma)))?;
    Ok((0..n)
        .map(|i| {
            let mut rng = shared.stream(Role::Client(i), 0);
            (0..d).map(|_| law.sample(&mut rng)).collect()
        })
        .collect())
}

/// Parameters shared by every experiment kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub scales: ScaleMode,
    pub conversion: ConversionMode,
    pub approach: Approach,
    /// Number of servers q.
    pub servers: usize,
    /// Vector dimensions d swept by NMSE experiments.
    pub dims: Vec<usize>,
    /// Clients per round n. NMSE sweeps use every entry; training uses one.
    pub clients: Vec<usize>,
    /// Population size N for training.
    pub population: usize,
    pub trials: usize,
    pub seed: u64,
    pub distribution: GradientDistribution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scheme: Scheme::Sq,
            scales: ScaleMode::Global,
            conversion: ConversionMode::Exact,
            approach: Approach::Global,
            servers: 3,
            dims: vec![1024],
            clients: vec![1, 10, 100, 1000],
            population: 1000,
            trials: 10,
            seed: 0,
            distribution: GradientDistribution::default(),
        }
    }
}

impl ExperimentConfig {
    /// Checks that the enum combination and sizes are usable.
    pub fn validate(&self) -> Result<()> {
        if self.approach == Approach::Global && self.scales != ScaleMode::Global {
            return Err(Error::Parameter(
                "the global-scale pipeline needs global scales".into(),
            ));
        }
        if self.servers < 2 {
            return Err(Error::Parameter(format!(
                "need at least two servers, got {}",
                self.servers
            )));
        }
        if self.conversion == ConversionMode::Exact && self.servers > MAX_EXACT_SERVERS {
            return Err(Error::Parameter(format!(
                "exact conversion supports at most {MAX_EXACT_SERVERS} servers"
            )));
        }
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be positive".into()));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::Parameter(
                "dimensions must be a non-empty list of positive sizes".into(),
            ));
        }
        if self.clients.is_empty() || self.clients.contains(&0) {
            return Err(Error::Parameter(
                "client counts must be a non-empty list of positive sizes".into(),
            ));
        }
        if !(self.distribution.sigma > 0.0
            && self.distribution.sigma.is_finite()
            && self.distribution.mu.is_finite())
        {
            return Err(Error::Parameter(
                "log-normal parameters must be finite with sigma > 0".into(),
            ));
        }
        Ok(())
    }

    /// Clients per round for training: the single configured value, which
    /// must not exceed the population.
    pub fn round_clients(&self) -> Result<usize> {
        match self.clients.as_slice() {
            [n] if *n <= self.population => Ok(*n),
            [n] => Err(Error::Parameter(format!(
                "cannot select {n} of {} clients",
                self.population
            ))),
            _ => Err(Error::Parameter(
                "training needs exactly one clients-per-round value".into(),
            )),
        }
    }
}
