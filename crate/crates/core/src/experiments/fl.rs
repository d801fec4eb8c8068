//! Desk-scale federated training: logistic regression on two Gaussian blobs,
//! local SGD per selected client, quantization with a per-round shared
//! transform, secure aggregation and a server update with momentum.
//!
//! The Min-Max attacker controls a fixed set of clients. When any of them is
//! selected it observes the honest updates of every selected client and
//! replaces its own with the Min-Max update. The defended arm aggregates with
//! Aura instead of the plain pipeline.

use std::io::Read;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{quantize_round, simulate_secure_mean};
use super::{ExperimentConfig, ScaleMode};
use crate::error::{Error, Result};
use crate::quantize::{QuantizeConfig, Transform};
use crate::ring::{Role, SharedRandomness};
use crate::robust::{aura_defend, minmax_attack, AttackConfig, DefenseConfig};

/// Labelled samples for binary classification.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    /// Labels in {0, 1}.
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of features per sample (0 for an empty set).
    pub fn dim(&self) -> usize {
        self.features.first().map(Vec::len).unwrap_or(0)
    }

    /// Two unit-variance Gaussian blobs centred at ±(separation/2)·u with
    /// balanced random labels.
    pub fn blobs<R: Rng + ?Sized>(
        samples: usize,
        direction: &[f64],
        separation: f64,
        rng: &mut R,
    ) -> Dataset {
        let mut features = Vec::with_capacity(samples);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let y: u8 = rng.random_range(0..2);
            let sign = if y == 1 { 0.5 } else { -0.5 } * separation;
            features.push(
                direction
                    .iter()
                    .map(|u| sign * u + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(y);
        }
        Dataset { features, labels }
    }

    /// Reads headerless CSV rows of features followed by a 0/1 label.
    pub fn from_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Input(format!("row {line}: {e}")))
                })
                .collect::<Result<_>>()?;
            let (label, x) = vals
                .split_last()
                .ok_or_else(|| Error::Input(format!("row {line} is empty")))?;
            let y = match *label {
                0.0 => 0,
                1.0 => 1,
                other => {
                    return Err(Error::Input(format!(
                        "row {line}: label {other} is not 0 or 1"
                    )))
                }
            };
            if let Some(first) = features.first() {
                let first: &Vec<f64> = first;
                if first.len() != x.len() {
                    return Err(Error::Dimension {
                        expected: first.len(),
                        got: x.len(),
                    });
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("row {line} has a non-finite feature")));
            }
            features.push(x.to_vec());
            labels.push(y);
        }
        Ok(Dataset { features, labels })
    }

    /// Splits into `parts` shards of equal size (the remainder is dropped).
    pub fn partition(&self, parts: usize) -> Result<Vec<Dataset>> {
        if parts == 0 || self.len() < parts {
            return Err(Error::Parameter(format!(
                "cannot split {} samples across {parts} clients",
                self.len()
            )));
        }
        let per = self.len() / parts;
        Ok((0..parts)
            .map(|p| Dataset {
                features: self.features[p * per..(p + 1) * per].to_vec(),
                labels: self.labels[p * per..(p + 1) * per].to_vec(),
            })
            .collect())
    }
}

/// Model, data and optimiser settings of the training task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlTask {
    /// Input features; the model has one more parameter for the bias.
    pub features: usize,
    pub samples_per_client: usize,
    pub test_samples: usize,
    /// Distance between the two class means.
    pub separation: f64,
    /// Client learning rate η_C.
    pub client_lr: f64,
    /// Server learning rate η_S.
    pub server_lr: f64,
    /// Server momentum.
    pub momentum: f64,
    /// Local epochs E.
    pub local_epochs: usize,
    /// Local batch size B.
    pub batch_size: usize,
    /// Rounds T.
    pub rounds: usize,
    /// Quantize updates before aggregation; otherwise average them in the clear.
    pub quantize: bool,
}

impl Default for FlTask {
    fn default() -> Self {
        FlTask {
            features: 1023,
            samples_per_client: 128,
            test_samples: 2000,
            separation: 2.5,
            client_lr: 0.1,
            server_lr: 1.0,
            momentum: 0.9,
            local_epochs: 1,
            batch_size: 32,
            rounds: 50,
            quantize: true,
        }
    }
}

impl FlTask {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0
            || self.samples_per_client == 0
            || self.test_samples == 0
            || self.batch_size == 0
        {
            return Err(Error::Parameter(
                "features, sample counts and batch size must be positive".into(),
            ));
        }
        if !(self.client_lr.is_finite()
            && self.server_lr.is_finite()
            && self.separation.is_finite())
        {
            return Err(Error::Parameter(
                "learning rates and separation must be finite".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }

    /// Model dimension: features plus bias.
    pub fn model_dim(&self) -> usize {
        self.features + 1
    }

    /// Seeded client shards and test set.
    pub fn generate_data(&self, population: usize, seed: u64) -> (Vec<Dataset>, Dataset) {
        let shared = SharedRandomness::new(seed).derive(TAG_DATA);
        let mut rng = shared.stream(Role::Public, 0);
        let mut u: Vec<f64> = (0..self.features)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let clients = (0..population)
            .map(|c| {
                Dataset::blobs(
                    self.samples_per_client,
                    &u,
                    self.separation,
                    &mut shared.stream(Role::Client(c), 0),
                )
            })
            .collect();
        let test = Dataset::blobs(
            self.test_samples,
            &u,
            self.separation,
            &mut shared.stream(Role::Public, 1),
        );
        (clients, test)
    }
}

const TAG_DATA: u64 = 1;
const TAG_SELECT: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_QUANT: u64 = 4;
const TAG_CONVERT: u64 = 5;
const TAG_ROTATION: u64 = 6;

/// Outcome of one training round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// `baseline`, `no-attack`, `attack` or `aura`.
    pub arm: String,
    /// 1-based round index.
    pub round: usize,
    pub accuracy: f64,
    /// Mean cross-entropy on the test set.
    pub loss: f64,
    pub selected_attackers: usize,
    pub excluded_attackers: usize,
    /// The model became non-finite in this round; training stopped.
    pub diverged: bool,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(w: &[f64], x: &[f64]) -> f64 {
    let f = x.len();
    w[..f].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[f]
}

/// Test accuracy and mean cross-entropy of `w`.
pub fn evaluate(w: &[f64], data: &Dataset) -> (f64, f64) {
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let z = logit(w, x);
        if (z > 0.0) == (y == 1) {
            correct += 1;
        }
        let signed = if y == 1 { z } else { -z };
        loss += if signed > 0.0 {
            (-signed).exp().ln_1p()
        } else {
            -signed + signed.exp().ln_1p()
        };
    }
    let k = data.len().max(1) as f64;
    (correct as f64 / k, loss / k)
}

/// Local SGD from `w` on `data`; returns the model change.
pub fn local_update<R: Rng + ?Sized>(
    w: &[f64],
    data: &Dataset,
    task: &FlTask,
    rng: &mut R,
) -> Vec<f64> {
    let f = w.len() - 1;
    let mut local = w.to_vec();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; w.len()];
    for _ in 0..task.local_epochs {
        order.shuffle(rng);
        for batch in order.chunks(task.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &k in batch {
                let x = &data.features[k];
                let e = sigmoid(logit(&local, x)) - data.labels[k] as f64;
                grad[..f].iter_mut().zip(x).for_each(|(g, v)| *g += e * v);
                grad[f] += e;
            }
            let step = task.client_lr / batch.len() as f64;
            local
                .iter_mut()
                .zip(&grad)
                .for_each(|(p, g)| *p -= step * g);
        }
    }
    local.iter().zip(w).map(|(a, b)| a - b).collect()
}

/// Number of malicious clients; they are clients 0..k.
fn malicious_count(attack: Option<&AttackConfig>, population: usize) -> Result<usize> {
    match attack {
        None => Ok(0),
        Some(a) if (0.0..0.5).contains(&a.malicious_fraction) => {
            Ok((a.malicious_fraction * population as f64).round() as usize)
        }
        Some(a) => Err(Error::Parameter(format!(
            "malicious fraction {} outside [0, 0.5)",
            a.malicious_fraction
        ))),
    }
}

/// Trains on the given client shards and reports test accuracy per round.
pub fn run_fl_training_on(
    task: &FlTask,
    cfg: &ExperimentConfig,
    clients: &[Dataset],
    test: &Dataset,
    attack: Option<&AttackConfig>,
    defense: Option<&DefenseConfig>,
    arm: &str,
) -> Result<Vec<RoundRecord>> {
    task.validate()?;
    cfg.validate()?;
    let population = clients.len();
    let cfg_n = ExperimentConfig {
        population,
        ..cfg.clone()
    };
    let n = cfg_n.round_clients()?;
    let dim = test.dim();
    if clients.iter().any(|c| c.is_empty() || c.dim() != dim) || test.is_empty() {
        return Err(Error::Parameter(
            "client shards and test set must be non-empty with equal dimension".into(),
        ));
    }
    if defense.is_some() && !task.quantize {
        return Err(Error::Parameter(
            "the defense operates on quantized updates".into(),
        ));
    }
    let malicious = malicious_count(attack, population)?;
    let base = SharedRandomness::new(cfg.seed);
    let (select, train, quant, convert, rotation) = (
        base.derive(TAG_SELECT),
        base.derive(TAG_TRAIN),
        base.derive(TAG_QUANT),
        base.derive(TAG_CONVERT),
        base.derive(TAG_ROTATION),
    );

    let mut w = vec![0.0; dim + 1];
    let mut velocity = vec![0.0; dim + 1];
    let mut records = Vec::with_capacity(task.rounds);
    for round in 1..=task.rounds {
        let t = round as u64;
        let mut selected =
            index::sample(&mut select.stream(Role::Public, t), population, n).into_vec();
        selected.sort_unstable();
        let mut updates: Vec<Vec<f64>> = selected
            .par_iter()
            .map(|&c| local_update(&w, &clients[c], task, &mut train.stream(Role::Client(c), t)))
            .collect();
        let attackers: Vec<usize> = (0..n).filter(|&i| selected[i] < malicious).collect();
        if let (Some(a), false) = (attack, attackers.is_empty()) {
            if let Ok(r) = minmax_attack(&updates, a) {
                for &i in &attackers {
                    updates[i] = r.gradient.clone();
                }
            }
        }
        let mut excluded_attackers = 0;
        let aggregate = if updates.iter().flatten().any(|v| !v.is_finite()) {
            None
        } else if task.quantize {
            let transform = Transform::new(
                cfg.scheme,
                dim + 1,
                rotation.derive(t).seed,
                &QuantizeConfig::default(),
            )?;
            match quantize_round(&transform, &updates, cfg.scales == ScaleMode::Global, |i| {
                quant.stream(Role::Quantizer(selected[i]), t)
            }) {
                Err(Error::Input(_)) => None,
                Err(e) => return Err(e),
                Ok(qvs) => match defense {
                    Some(d) => {
                        let out = aura_defend(&qvs, d)?;
                        excluded_attackers = out
                            .excluded
                            .iter()
                            .filter(|&&i| selected[i] < malicious)
                            .count();
                        Some(out.aggregate)
                    }
                    None => Some(simulate_secure_mean(
                        &qvs,
                        cfg.approach,
                        cfg.conversion,
                        cfg.servers,
                        &mut convert.stream(Role::Public, t),
                    )?),
                },
            }
        } else {
            let mut mean = vec![0.0; dim + 1];
            for u in &updates {
                mean.iter_mut().zip(u).for_each(|(m, v)| *m += v / n as f64);
            }
            Some(mean)
        };
        if let Some(agg) = &aggregate {
            for ((p, v), g) in w.iter_mut().zip(velocity.iter_mut()).zip(agg) {
                *v = task.momentum * *v + g;
                *p += task.server_lr * *v;
            }
        }
        let diverged = aggregate.is_none() || w.iter().any(|v| !v.is_finite());
        let (accuracy, loss) = if diverged {
            (f64::NAN, f64::NAN)
        } else {
            evaluate(&w, test)
        };
        records.push(RoundRecord {
            arm: arm.to_string(),
            round,
            accuracy,
            loss,
            selected_attackers: attackers.len(),
            excluded_attackers,
            diverged,
        });
        if diverged {
            break;
        }
    }
    Ok(records)
}

/// Trains on seeded synthetic blobs split across `cfg.population` clients.
pub fn run_fl_training(
    task: &FlTask,
    cfg: &ExperimentConfig,
    attack: Option<&AttackConfig>,
    defense: Option<&DefenseConfig>,
) -> Result<Vec<RoundRecord>> {
    task.validate()?;
    cfg.round_clients()?;
    let (clients, test) = task.generate_data(cfg.population, cfg.seed);
    let arm = match (attack.is_some(), defense.is_some()) {
        (false, false) => "baseline",
        (false, true) => "defense",
        (true, false) => "attack",
        (true, true) => "aura",
    };
    run_fl_training_on(task, cfg, &clients, &test, attack, defense, arm)
}

/// The three arms of a poisoning experiment, trained with identical data,
/// client selection and quantization randomness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseResult {
    pub no_attack: Vec<RoundRecord>,
    pub attack: Vec<RoundRecord>,
    pub defended: Vec<RoundRecord>,
}

impl DefenseResult {
    /// Excluded attackers over selected attackers, summed over rounds.
    pub fn exclusion_rate(&self) -> f64 {
        let sel: usize = self.defended.iter().map(|r| r.selected_attackers).sum();
        let exc: usize = self.defended.iter().map(|r| r.excluded_attackers).sum();
        if sel == 0 {
            0.0
        } else {
            exc as f64 / sel as f64
        }
    }

    /// Final-round accuracies (no attack, attack, defended).
    pub fn final_accuracies(&self) -> (f64, f64, f64) {
        let last = |v: &[RoundRecord]| v.last().map(|r| r.accuracy).unwrap_or(f64::NAN);
        (
            last(&self.no_attack),
            last(&self.attack),
            last(&self.defended),
        )
    }

    /// All rounds of all arms.
    pub fn rows(&self) -> Vec<RoundRecord> {
        self.no_attack
            .iter()
            .chain(&self.attack)
            .chain(&self.defended)
            .cloned()
            .collect()
    }
}

/// Runs the no-attack, undefended-attack and Aura-defended arms.
pub fn run_defense_experiment(
    task: &FlTask,
    cfg: &ExperimentConfig,
    attack: &AttackConfig,
    defense: &DefenseConfig,
) -> Result<DefenseResult> {
    malicious_count(Some(attack), cfg.population)?;
    let (clients, test) = task.generate_data(cfg.population, cfg.seed);
    let no_attack = run_fl_training_on(task, cfg, &clients, &test, None, None, "no-attack")?;
    let attacked = run_fl_training_on(task, cfg, &clients, &test, Some(attack), None, "attack")?;
    let defended = run_fl_training_on(
        task,
        cfg,
        &clients,
        &test,
        Some(attack),
        Some(defense),
        "aura",
    )?;
    Ok(DefenseResult {
        no_attack,
        attack: attacked,
        defended,
    })
}
