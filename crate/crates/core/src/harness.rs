//! Experiment runner behind the CLI: configuration presets, run manifests,
//! and the optimize / train / test / trace commands.
//!
//! Output layout under `out_dir`:
//!
//! | file | schema |
//! |------|--------|
//! | `manifest_<command>[_<setup>].json` | [`RunManifest`] |
//! | `ga_generations.csv` | generation, best, mean, std, then one column per gene |
//! | `best_network.toml` | [`CpgNetworkConfig`] |
//! | `train_<setup>.csv` | [`EvalRow`] |
//! | `checkpoints/<setup>_{actor,critic}.bin` | see [`crate::mlp`] |
//! | `test_<controller>.csv` | [`TestRow`] |
//! | `test_<controller>_summary.csv` | [`SummaryRow`] |
//! | `trace_<controller>.jsonl` | one [`TickRecord`] per line |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::ddpg::{self, DdpgConfig, EvalRow, RewardWeights};
use crate::error::{Error, Result};
use crate::ga::{self, GaConfig, GaOutcome, GENE_NAMES};
use crate::highlevel::LinearControllerConfig;
use crate::mlp::{Mlp, ParamSet};
use crate::network::CpgNetworkConfig;
use crate::plant::{EpisodeMetrics, PlantConfig};
use crate::rollout::{run_controlled_episode, Controller, TickRecord};
use crate::seeds;

/// Version of every CSV, JSON-lines and manifest schema written here.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

/// A trainable setup: reward weights plus the influence factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupEntry {
    pub name: String,
    pub zeta_dev: f64,
    pub zeta_dist: f64,
    pub zeta_gamma: f64,
    pub xi: f64,
}

impl SetupEntry {
    pub fn weights(&self) -> RewardWeights {
        RewardWeights {
            zeta_dev: self.zeta_dev,
            zeta_dist: self.zeta_dist,
            zeta_gamma: self.zeta_gamma,
            xi: self.xi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEntry {
    pub name: String,
    pub gain: f64,
    pub xi: f64,
}

fn default_setups() -> Vec<SetupEntry> {
    [
        ("S1", RewardWeights::S1),
        ("S2", RewardWeights::S2),
        ("S3", RewardWeights::S3),
        ("S4", RewardWeights::S4),
    ]
    .into_iter()
    .map(|(name, w)| SetupEntry {
        name: name.into(),
        zeta_dev: w.zeta_dev,
        zeta_dist: w.zeta_dist,
        zeta_gamma: w.zeta_gamma,
        xi: w.xi,
    })
    .collect()
}

fn default_linear() -> Vec<LinearEntry> {
    [
        ("L1", LinearControllerConfig::L1),
        ("L2", LinearControllerConfig::L2),
    ]
    .into_iter()
    .map(|(name, c)| LinearEntry {
        name: name.into(),
        gain: c.gain,
        xi: c.xi,
    })
    .collect()
}

/// Name of the unmodulated baseline.
pub const BASELINE: &str = "S0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Network config file (e.g. an optimizer's `best_network.toml`); the
    /// built-in best solution when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_path: Option<PathBuf>,
    pub plant: PlantConfig,
    pub ga: GaConfig,
    pub ddpg: DdpgConfig,
    pub test_episodes: usize,
    pub setups: Vec<SetupEntry>,
    pub linear: Vec<LinearEntry>,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let paper = ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            network_path: None,
            plant: PlantConfig::default(),
            ga: GaConfig::default(),
            ddpg: DdpgConfig::default(),
            test_episodes: 100,
            setups: default_setups(),
            linear: default_linear(),
        };
        match preset {
            Preset::Paper => paper,
            Preset::Desk => ExperimentConfig {
                ga: GaConfig {
                    population: 20,
                    generations: 10,
                    ..paper.ga
                },
                ddpg: DdpgConfig {
                    episodes: 150,
                    ..paper.ddpg
                },
                test_episodes: 20,
                ..paper
            },
        }
    }

    /// Preset values overridden by the user file. A `.json` file is read as
    /// a [`RunManifest`] and its config snapshot is used verbatim.
    pub fn load(preset: Preset, path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::preset(preset),
            Some(p) if p.extension().is_some_and(|e| e == "json") => RunManifest::read(p)?.config,
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let user: toml::Table = toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                let mut merged = serde_json::to_value(Self::preset(preset))?;
                deep_merge(&mut merged, serde_json::to_value(user)?);
                serde_json::from_value(merged)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.ga.validate()?;
        self.ddpg.validate()?;
        if self.test_episodes == 0 {
            return Err(Error::Config("test_episodes must be positive".into()));
        }
        let mut names = vec![BASELINE.to_string()];
        for s in &self.setups {
            s.weights()
                .validate()
                .map_err(|e| Error::Config(format!("setup {}: {e}", s.name)))?;
            names.push(s.name.clone());
        }
        for l in &self.linear {
            LinearControllerConfig {
                gain: l.gain,
                xi: l.xi,
            }
            .validate()?;
            names.push(l.name.clone());
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::Config(format!(
                "controller names must be unique: {names:?}"
            )));
        }
        if let Some(p) = &self.network_path {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "network config {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn network(&self) -> Result<CpgNetworkConfig> {
        let config = match &self.network_path {
            None => CpgNetworkConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                CpgNetworkConfig::from_toml_str(&text)?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn controller_names(&self) -> Vec<String> {
        let mut names = vec![BASELINE.to_string()];
        names.extend(self.linear.iter().map(|l| l.name.clone()));
        names.extend(self.setups.iter().map(|s| s.name.clone()));
        names
    }

    pub fn setup(&self, name: &str) -> Result<&SetupEntry> {
        self.setups
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSetup {
                name: name.into(),
                valid: self
                    .setups
                    .iter()
                    .map(|s| s.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    pub fn actor_checkpoint(&self, setup: &str) -> PathBuf {
        self.out_dir
            .join("checkpoints")
            .join(format!("{setup}_actor.bin"))
    }

    pub fn critic_checkpoint(&self, setup: &str) -> PathBuf {
        self.out_dir
            .join("checkpoints")
            .join(format!("{setup}_critic.bin"))
    }

    /// Builds the named controller, loading the actor checkpoint for
    /// trained setups.
    pub fn controller(&self, name: &str) -> Result<Controller> {
        if name == BASELINE {
            return Ok(Controller::Unmodulated);
        }
        if let Some(l) = self.linear.iter().find(|l| l.name == name) {
            return Ok(Controller::Linear(LinearControllerConfig {
                gain: l.gain,
                xi: l.xi,
            }));
        }
        if let Some(s) = self.setups.iter().find(|s| s.name == name) {
            let path = self.actor_checkpoint(name);
            if !path.exists() {
                return Err(Error::MissingCheckpoint(path));
            }
            return Ok(Controller::Neural {
                actor: Mlp::load(&path)?,
                xi: s.xi,
            });
        }
        Err(Error::UnknownSetup {
            name: name.into(),
            valid: self.controller_names().join(", "),
        })
    }

    /// Plant seed of test episode `i`, shared by every controller.
    pub fn test_plant(&self, episode: usize) -> PlantConfig {
        PlantConfig {
            seed: seeds::derive(self.seed, 3, episode as u64),
            ..self.plant
        }
    }

    pub fn trace_plant(&self) -> PlantConfig {
        PlantConfig {
            seed: seeds::derive(self.seed, 4, 0),
            ..self.plant
        }
    }
}

/// Recursively overlays `over` onto `base`; tables merge, everything else
/// replaces.
pub fn deep_merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub controller: Option<String>,
    pub code_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub artifacts: Vec<PathBuf>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    fn new(command: &str, controller: Option<&str>, config: &ExperimentConfig) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            controller: controller.map(Into::into),
            code_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config: config.clone(),
            started_unix: unix_now(),
            finished_unix: None,
            artifacts: Vec::new(),
        }
    }

    pub fn path(&self) -> PathBuf {
        let name = match &self.controller {
            Some(c) => format!("manifest_{}_{c}.json", self.command),
            None => format!("manifest_{}.json", self.command),
        };
        self.config.out_dir.join(name)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self) -> Result<()> {
        let path = self.path();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Creates the output directory and writes the open manifest.
    fn begin(command: &str, controller: Option<&str>, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
        let m = Self::new(command, controller, config);
        m.write()?;
        Ok(m)
    }

    fn finish(mut self, artifacts: Vec<PathBuf>) -> Result<Self> {
        self.finished_unix = Some(unix_now());
        self.artifacts = artifacts;
        self.write()?;
        Ok(self)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Lower-case hex SHA-256 of the parameters' little-endian bytes.
pub fn params_checksum(params: &ParamSet) -> String {
    let mut h = Sha256::new();
    for v in params.flatten() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub manifest: RunManifest,
    pub outcome: GaOutcome,
}

pub fn cmd_optimize(config: &ExperimentConfig) -> Result<OptimizeReport> {
    config.validate()?;
    let base = config.network()?;
    let manifest = RunManifest::begin("optimize", None, config)?;
    let csv_path = config.out_dir.join("ga_generations.csv");
    let mut w = csv_writer(&csv_path)?;
    let mut header = vec!["generation", "best", "mean", "std"];
    header.extend(GENE_NAMES);
    w.write_record(&header)?;
    let outcome = ga::evolve(&config.ga, &base, config.plant, config.seed, |s| {
        let mut row = vec![
            s.generation.to_string(),
            s.best.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
        ];
        row.extend(s.best_chromosome.0.iter().map(f64::to_string));
        w.write_record(&row)?;
        w.flush().map_err(|e| Error::io(&csv_path, e))
    })?;
    drop(w);
    let net_path = config.out_dir.join("best_network.toml");
    fs::write(&net_path, outcome.best.apply(&base).to_toml_string()?)
        .map_err(|e| Error::io(&net_path, e))?;
    let manifest = manifest.finish(vec![csv_path, net_path])?;
    Ok(OptimizeReport { manifest, outcome })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub manifest: RunManifest,
    pub evals: Vec<EvalRow>,
    pub actor_checksum: String,
}

pub fn cmd_train(config: &ExperimentConfig, setup: &str) -> Result<TrainReport> {
    config.validate()?;
    let entry = config.setup(setup)?.clone();
    let network = config.network()?;
    let manifest = RunManifest::begin("train", Some(setup), config)?;
    let ckpt_dir = config.out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let log_path = config.out_dir.join(format!("train_{setup}.csv"));
    let mut w = csv_writer(&log_path)?;
    let mut artifacts = vec![log_path.clone()];
    let every = config.ddpg.checkpoint_every;
    let (agent, evals) = ddpg::train(
        &network,
        config.plant,
        entry.weights(),
        config.ddpg,
        config.seed,
        |episode, agent, row| {
            if let Some(row) = row {
                w.serialize(row)?;
                w.flush().map_err(|e| Error::io(&log_path, e))?;
            }
            if every > 0 && episode % every == 0 {
                let p = ckpt_dir.join(format!("{setup}_actor_ep{episode:05}.bin"));
                agent.actor.save(&p)?;
                artifacts.push(p);
            }
            Ok(())
        },
    )?;
    drop(w);
    let actor_path = config.actor_checkpoint(setup);
    let critic_path = config.critic_checkpoint(setup);
    agent.actor.save(&actor_path)?;
    agent.critic.save(&critic_path)?;
    artifacts.extend([actor_path, critic_path]);
    let manifest = manifest.finish(artifacts)?;
    Ok(TrainReport {
        manifest,
        evals,
        actor_checksum: params_checksum(&agent.actor.params),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub episode: usize,
    pub plant_seed: u64,
    pub d_x: f64,
    pub d_y: f64,
    pub gamma: f64,
    pub t_up: f64,
    pub fell: bool,
}

impl TestRow {
    fn new(episode: usize, plant_seed: u64, m: &EpisodeMetrics) -> Self {
        TestRow {
            episode,
            plant_seed,
            d_x: m.d_x,
            d_y: m.d_y,
            gamma: m.gamma_final,
            t_up: m.t_up,
            fell: m.fell,
        }
    }
}

/// Quartiles of one metric across test episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolated quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[derive(Debug, Clone)]
pub struct TestReport {
    pub manifest: RunManifest,
    pub rows: Vec<TestRow>,
    pub summary: Vec<SummaryRow>,
    pub falls: usize,
    pub checksum: Option<String>,
}

impl TestReport {
    pub fn median_abs_dy(&self) -> f64 {
        median(&self.rows.iter().map(|r| r.d_y.abs()).collect::<Vec<_>>())
    }

    pub fn median_dx(&self) -> f64 {
        median(&self.rows.iter().map(|r| r.d_x).collect::<Vec<_>>())
    }
}

fn summarize(rows: &[TestRow]) -> Vec<SummaryRow> {
    let metrics: [(&'static str, fn(&TestRow) -> f64); 3] = [
        ("d_x", |r| r.d_x),
        ("abs_d_y", |r| r.d_y.abs()),
        ("abs_gamma", |r| r.gamma.abs()),
    ];
    metrics
        .iter()
        .map(|(name, f)| {
            let v: Vec<f64> = rows.iter().map(f).collect();
            SummaryRow {
                metric: name,
                q1: quantile(&v, 0.25),
                median: median(&v),
                q3: quantile(&v, 0.75),
            }
        })
        .collect()
}

/// Runs `test_episodes` evaluation episodes with exploration off. Episodes
/// run in parallel on independent plants.
pub fn cmd_test(config: &ExperimentConfig, controller_name: &str) -> Result<TestReport> {
    config.validate()?;
    let network = config.network()?;
    let controller = config.controller(controller_name)?;
    let manifest = RunManifest::begin("test", Some(controller_name), config)?;
    let before = match &controller {
        Controller::Neural { actor, .. } => Some(params_checksum(&actor.params)),
        _ => None,
    };
    let timing = config.ddpg.timing;
    let rows = (0..config.test_episodes)
        .into_par_iter()
        .map(|i| {
            let plant = config.test_plant(i);
            let m = run_controlled_episode(&network, plant, &controller, timing, |_| {})?;
            Ok(TestRow::new(i, plant.seed, &m))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Controller::Neural { actor, .. } = &controller {
        let after = params_checksum(&actor.params);
        if before.as_deref() != Some(after.as_str()) {
            return Err(Error::InvalidParam(format!(
                "{controller_name} parameters changed during testing"
            )));
        }
    }

    let rows_path = config.out_dir.join(format!("test_{controller_name}.csv"));
    let mut w = csv_writer(&rows_path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&rows_path, e))?;
    let summary = summarize(&rows);
    let summary_path = config
        .out_dir
        .join(format!("test_{controller_name}_summary.csv"));
    let mut w = csv_writer(&summary_path)?;
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(&summary_path, e))?;

    let falls = rows.iter().filter(|r| r.fell).count();
    log::info!(
        "{controller_name}: median d_x {:.3}, median |d_y| {:.3}, {falls} falls",
        summary[0].median,
        summary[1].median
    );
    let manifest = manifest.finish(vec![rows_path, summary_path])?;
    Ok(TestReport {
        manifest,
        rows,
        summary,
        falls,
        checksum: before,
    })
}

#[derive(Debug, Clone)]
pub struct TraceReport {
    pub manifest: RunManifest,
    pub path: PathBuf,
    pub ticks: usize,
    pub metrics: EpisodeMetrics,
}

/// Writes one full-rate episode as JSON lines.
pub fn cmd_trace(config: &ExperimentConfig, controller_name: &str) -> Result<TraceReport> {
    config.validate()?;
    let network = config.network()?;
    let controller = config.controller(controller_name)?;
    let manifest = RunManifest::begin("trace", Some(controller_name), config)?;
    let path = config
        .out_dir
        .join(format!("trace_{controller_name}.jsonl"));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    let mut ticks = 0;
    let mut failure: Option<Error> = None;
    let metrics = run_controlled_episode(
        &network,
        config.trace_plant(),
        &controller,
        config.ddpg.timing,
        |rec| {
            if failure.is_some() {
                return;
            }
            let line = serde_json::to_string(rec).map_err(Error::from);
            match line.and_then(|l| writeln!(out, "{l}").map_err(|e| Error::io(&path, e))) {
                Ok(()) => ticks += 1,
                Err(e) => failure = Some(e),
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    out.flush().map_err(|e| Error::io(&path, e))?;
    let manifest = manifest.finish(vec![path.clone()])?;
    Ok(TraceReport {
        manifest,
        path,
        ticks,
        metrics,
    })
}

/// Reads a trace written by [`cmd_trace`].
pub fn read_trace(path: &Path) -> Result<Vec<TickRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
