//! Command-line front end for the experiment harness.
//!
//! Settings are resolved in three layers: the defaults of the subcommand,
//! then the TOML file given with `--config`, then explicit flags.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use qsa_core::bitconv::ConversionMode;
use qsa_core::experiments::{
    cost_table, run_defense_experiment, run_fl_training, run_nmse_sweep, self_check, write_report,
    ExperimentConfig, FlTask, ReportFormat, ReportRow, ScaleMode,
};
use qsa_core::mpc::{Approach, CostModel};
use qsa_core::quantize::{bit_count, Scheme};
use qsa_core::robust::{AttackConfig, DefenseConfig, FilterCount};

/// Secure quantized aggregation experiments.
#[derive(Debug, Parser)]
#[command(name = "qsa", version, about)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also run the invariant self-check and exit with status 2 on any violation.
    #[arg(long, global = true)]
    pub self_check: bool,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// Quantization scheme: SQ, HSQ or KSQ.
    #[arg(long, global = true)]
    pub scheme: Option<Scheme>,
    /// Scale mode: global or local.
    #[arg(long, global = true)]
    pub scales: Option<ScaleMode>,
    /// Bit conversion: exact or approx.
    #[arg(long, global = true)]
    pub conversion: Option<ConversionMode>,
    /// Aggregation pipeline: I, II, III or global.
    #[arg(long, global = true)]
    pub approach: Option<Approach>,
    /// Number of servers.
    #[arg(long, global = true)]
    pub servers: Option<usize>,
    /// Vector dimensions (comma-separated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub dim: Vec<usize>,
    /// Clients per round (comma-separated for sweeps).
    #[arg(long, global = true, value_delimiter = ',')]
    pub clients: Vec<usize>,
    /// Population size for training.
    #[arg(long, global = true)]
    pub population: Option<usize>,
    /// Trials per NMSE cell.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long, global = true)]
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// NMSE of the selected pipeline on log-normal vectors.
    Nmse,
    /// Federated training on the synthetic task; one row per round.
    Train(TrainArgs),
    /// No-attack, attack and Aura-defended training arms.
    Defense(DefenseArgs),
    /// Communication cost per approach and client count.
    Cost,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    /// Training rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Let the Min-Max attacker poison updates.
    #[arg(long)]
    pub attack: bool,
    /// Aggregate with the Aura defense.
    #[arg(long)]
    pub defend: bool,
}

#[derive(Debug, Default, Args)]
pub struct DefenseArgs {
    /// Training rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Fraction of malicious clients in the population.
    #[arg(long)]
    pub malicious_fraction: Option<f64>,
    /// Norm threshold relative to the average norm.
    #[arg(long)]
    pub mu_th: Option<f64>,
    /// Number of updates removed per round.
    #[arg(long)]
    pub psi: Option<usize>,
}

/// Contents of a `--config` file. Every table is optional.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: Option<toml::Table>,
    pub task: Option<toml::Table>,
    pub attack: Option<toml::Table>,
    pub defense: Option<toml::Table>,
    pub cost: Option<toml::Table>,
    pub output: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Overlays the keys of `table` onto `base`; unknown keys are rejected.
fn overlay<T: Serialize + DeserializeOwned>(
    base: T,
    table: Option<&toml::Table>,
    section: &str,
) -> Result<T> {
    let Some(table) = table else { return Ok(base) };
    let mut merged = toml::Table::try_from(&base)
        .with_context(|| format!("encoding defaults of [{section}]"))?;
    for (k, v) in table {
        merged.insert(k.clone(), v.clone());
    }
    merged
        .try_into()
        .with_context(|| format!("invalid [{section}] table"))
}

fn command_defaults(cmd: &Command) -> ExperimentConfig {
    let training = ExperimentConfig {
        scheme: Scheme::Hsq,
        scales: ScaleMode::Local,
        approach: Approach::II,
        clients: vec![10],
        population: 50,
        ..Default::default()
    };
    match cmd {
        Command::Nmse => ExperimentConfig::default(),
        Command::Train(_) | Command::Defense(_) => training,
        Command::Cost => ExperimentConfig {
            scheme: Scheme::Ksq,
            scales: ScaleMode::Local,
            conversion: ConversionMode::Approx,
            approach: Approach::III,
            dims: vec![61706],
            clients: vec![20, 100, 500],
            ..Default::default()
        },
    }
}

/// Experiment settings after applying the file and the flags.
pub fn resolve_experiment(cli: &Cli, file: &FileConfig) -> Result<ExperimentConfig> {
    let mut cfg = overlay(
        command_defaults(&cli.command),
        file.experiment.as_ref(),
        "experiment",
    )?;
    let c = &cli.common;
    if let Some(v) = c.scheme {
        cfg.scheme = v;
    }
    if let Some(v) = c.scales {
        cfg.scales = v;
    }
    if let Some(v) = c.conversion {
        cfg.conversion = v;
    }
    if let Some(v) = c.approach {
        cfg.approach = v;
    } else if c.scales == Some(ScaleMode::Local) && cfg.approach == Approach::Global {
        cfg.approach = Approach::II;
    }
    if let Some(v) = c.servers {
        cfg.servers = v;
    }
    if !c.dim.is_empty() {
        cfg.dims = c.dim.clone();
    }
    if !c.clients.is_empty() {
        cfg.clients = c.clients.clone();
    }
    if let Some(v) = c.population {
        cfg.population = v;
    }
    if let Some(v) = c.trials {
        cfg.trials = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_format(cli: &Cli, file: &FileConfig) -> Result<ReportFormat> {
    if let Some(f) = cli.common.format {
        return Ok(f);
    }
    match file.output.as_ref().and_then(|t| t.get("format")) {
        None => Ok(ReportFormat::Csv),
        Some(toml::Value::String(s)) => Ok(s.parse()?),
        Some(other) => bail!("[output] format must be a string, got {other}"),
    }
}

fn output_path(cli: &Cli, file: &FileConfig) -> Result<Option<PathBuf>> {
    if let Some(p) = &cli.common.out {
        return Ok(Some(p.clone()));
    }
    match file.output.as_ref().and_then(|t| t.get("path")) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(PathBuf::from(s))),
        Some(other) => bail!("[output] path must be a string, got {other}"),
    }
}

fn emit<T: ReportRow>(rows: &[T], format: ReportFormat, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => qsa_core::experiments::emit_report(rows, format, p)?,
        None => write_report(rows, format, io::stdout().lock())?,
    }
    Ok(())
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = resolve_experiment(cli, &file)?;
    let format = output_format(cli, &file)?;
    let out = output_path(cli, &file)?;
    let mut violations = Vec::new();
    let mut task = overlay(FlTask::default(), file.task.as_ref(), "task")?;
    let mut attack = overlay(AttackConfig::default(), file.attack.as_ref(), "attack")?;
    let mut defense = overlay(DefenseConfig::default(), file.defense.as_ref(), "defense")?;

    match &cli.command {
        Command::Nmse => {
            let rows = run_nmse_sweep(&cfg)?;
            for r in &rows {
                if !(r.nmse_mean.is_finite() && r.nmse_mean >= 0.0) {
                    violations.push(format!(
                        "NMSE of cell d={} n={} is {}",
                        r.d, r.n, r.nmse_mean
                    ));
                }
            }
            emit(&rows, format, out.as_deref())?;
        }
        Command::Train(a) => {
            if let Some(r) = a.rounds {
                task.rounds = r;
            }
            let rows = run_fl_training(
                &task,
                &cfg,
                a.attack.then_some(&attack),
                a.defend.then_some(&defense),
            )?;
            if rows.iter().any(|r| r.diverged) {
                eprintln!("training diverged at round {}", rows.len());
            }
            emit(&rows, format, out.as_deref())?;
        }
        Command::Defense(a) => {
            if let Some(r) = a.rounds {
                task.rounds = r;
            }
            if let Some(f) = a.malicious_fraction {
                attack.malicious_fraction = f;
            }
            if let Some(m) = a.mu_th {
                defense.mu_th = m;
            }
            if let Some(p) = a.psi {
                defense.psi = FilterCount::Count(p);
            }
            let res = run_defense_experiment(&task, &cfg, &attack, &defense)?;
            let (clean, attacked, defended) = res.final_accuracies();
            eprintln!(
                "final accuracy: no attack {clean:.4}, attack {attacked:.4}, aura {defended:.4}; attackers excluded {:.3}",
                res.exclusion_rate()
            );
            emit(&res.rows(), format, out.as_deref())?;
        }
        Command::Cost => {
            let model = overlay(CostModel::standard(), file.cost.as_ref(), "cost")?;
            let approach_set = cli.common.approach.is_some()
                || file
                    .experiment
                    .as_ref()
                    .is_some_and(|t| t.contains_key("approach"));
            let approaches: Vec<Approach> = if approach_set {
                vec![cfg.approach]
            } else {
                Approach::ALL.to_vec()
            };
            let clients: Vec<u64> = cfg.clients.iter().map(|&n| n as u64).collect();
            let mut rows = Vec::new();
            for &d in &cfg.dims {
                let m = bit_count(cfg.scheme, d)?;
                rows.extend(cost_table(
                    &approaches,
                    &clients,
                    m,
                    cfg.servers,
                    cfg.conversion,
                    &model,
                )?);
            }
            rows.sort_by_key(|r| (r.approach, r.m, r.n));
            for r in &rows {
                if matches!(r.approach, Approach::II | Approach::III | Approach::Global) {
                    let first = rows
                        .iter()
                        .find(|o| o.approach == r.approach && o.m == r.m)
                        .map(|o| o.online_mib);
                    if first != Some(r.online_mib) {
                        violations
                            .push(format!("approach {} online cost depends on n", r.approach));
                    }
                }
            }
            emit(&rows, format, out.as_deref())?;
        }
    }

    if cli.self_check {
        let mut err = io::stderr().lock();
        for c in self_check() {
            writeln!(
                err,
                "{} {}{}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                if c.passed {
                    String::new()
                } else {
                    format!(": {}", c.detail)
                }
            )?;
            if !c.passed {
                violations.push(c.name.to_string());
            }
        }
        for v in &violations {
            writeln!(err, "FAIL {v}")?;
        }
        if !violations.is_empty() {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}
