//! Experiment orchestration: configs, seeded replicas, artifacts and the
//! aggregate report.
//!
//! Artifacts of a run in the output directory:
//!
//! - `replica_XXX_regret.csv`: per-step regret records of replica `XXX`;
//! - `replica_XXX_episodes.csv`: episodes of the sliding-window agent;
//! - `replica_XXX_blocks.csv`: blocks of the bandit-over-RL agent;
//! - `curves.csv`: long-format plot data `curve,t,value`;
//! - `report.json`: the aggregate report.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::borl::{read_block_csv, write_block_csv, BlockRecord, Borl};
use crate::envs::GeneratorSpec;
use crate::error::{Error, Result};
use crate::io::load_instance;
use crate::mdp::{NonStationaryInstance, StationaryPolicy};
use crate::regret::{dynamic_regret_with, read_regret_csv, write_regret_csv, GainCache, RegretRecord};
use crate::rng::stream;
use crate::sim::{simulate, FixedPolicyAgent, RewardNoise, ScheduledPolicyAgent, Trajectory};
use crate::swucrl::{
    audit_episodes, default_parameters, read_episode_csv, write_episode_csv, EpisodeRecord, SwConfig, SwUcrl2Cw,
};

pub const EXPERIMENT_KIND: &str = "experiment";
pub const CONFIG_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "DRIFTMDP_THREADS";

/// Steps kept in full in `curves.csv` before downsampling starts.
pub const CURVE_FULL_LIMIT: usize = 10_000;

pub fn build_id() -> String {
    match option_env!("DRIFTMDP_GIT_HASH") {
        Some(hash) => format!("driftmdp-{}+{hash}", env!("CARGO_PKG_VERSION")),
        None => format!("driftmdp-{}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ParamMode {
    /// `window` and `eta` as given.
    Explicit,
    /// Tuned to the instance's realized variation budgets.
    BudgetAware,
    /// From `(S, A, T)` only.
    #[default]
    Oblivious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentSpec {
    #[serde(rename = "swucrl2-cw")]
    SwUcrl2Cw {
        #[serde(default)]
        params: ParamMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
    },
    Borl,
    /// Plays the optimal policy of each step's snapshot.
    Optimal,
    Fixed {
        policy: Vec<usize>,
    },
}

impl AgentSpec {
    /// Agent named on the command line, with default settings.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "swucrl2-cw" => Ok(AgentSpec::SwUcrl2Cw {
                params: ParamMode::Oblivious,
                window: None,
                eta: None,
            }),
            "borl" => Ok(AgentSpec::Borl),
            "optimal" => Ok(AgentSpec::Optimal),
            other => Err(Error::InvalidArgument(format!(
                "unknown agent {other:?} (expected swucrl2-cw, borl or optimal; fixed needs a config)"
            ))),
        }
    }
}

fn one() -> usize {
    1
}

fn default_delta() -> f64 {
    0.1
}

fn default_gain_eps() -> f64 {
    crate::regret::DEFAULT_GAIN_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub initial_state: usize,
    /// Tolerance of the per-step optimal gains.
    #[serde(default = "default_gain_eps")]
    pub gain_eps: f64,
    #[serde(default)]
    pub noise: RewardNoise,
    /// Draw a fresh generated instance per replica instead of sharing one.
    #[serde(default)]
    pub resample_instance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Instance file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<PathBuf>,
    pub agent: AgentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if cfg.kind != EXPERIMENT_KIND {
            return Err(Error::Parse(format!("field `kind`: expected \"{EXPERIMENT_KIND}\", got {:?}", cfg.kind)));
        }
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Parse(format!(
                "field `version`: unsupported version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidArgument("replicas must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.gain_eps > 0.0) {
            return Err(Error::InvalidArgument("gain_eps must be positive".into()));
        }
        if self.generator.is_some() == self.instance.is_some() {
            return Err(Error::InvalidArgument("give exactly one of `generator` and `instance`".into()));
        }
        if self.resample_instance && self.generator.is_none() {
            return Err(Error::InvalidArgument("resample_instance needs a generator".into()));
        }
        if let RewardNoise::TruncatedGaussian { sigma } = self.noise {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidArgument("noise sigma must be positive".into()));
            }
        }
        if let AgentSpec::SwUcrl2Cw {
            params: ParamMode::Explicit,
            window,
            eta,
        } = &self.agent
        {
            if window.is_none() || eta.is_none() {
                return Err(Error::InvalidArgument("explicit parameters need both window and eta".into()));
            }
        }
        Ok(())
    }
}

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub agent: Option<String>,
    pub horizon: Option<usize>,
    pub window: Option<usize>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(r) = self.replicas {
            cfg.replicas = r;
        }
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(name) = &self.agent {
            cfg.agent = AgentSpec::from_name(name)?;
        }
        if let Some(t) = self.horizon {
            match cfg.generator.as_mut() {
                Some(g) => g.horizon = t,
                None => return Err(Error::InvalidArgument("--T needs a generator-based config".into())),
            }
        }
        if self.window.is_some() || self.eta.is_some() {
            match &mut cfg.agent {
                AgentSpec::SwUcrl2Cw { params, window, eta } => {
                    *params = ParamMode::Explicit;
                    if self.window.is_some() {
                        *window = self.window;
                    }
                    if self.eta.is_some() {
                        *eta = self.eta;
                    }
                }
                _ => return Err(Error::InvalidArgument("--W and --eta apply to the swucrl2-cw agent".into())),
            }
        }
        Ok(())
    }
}

/// Instance source after loading, with the digest that enters the config hash.
struct Source {
    shared: Option<Arc<NonStationaryInstance>>,
    shared_rho: Option<Arc<Vec<f64>>>,
    digest: String,
}

fn instance_digest(inst: &NonStationaryInstance) -> String {
    let mut h = Sha256::new();
    for snap in inst.snapshots() {
        h.update(snap.content_hash());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of every config field that affects results (the output directory
/// and instance path are replaced by the instance contents).
pub fn config_hash(cfg: &ExperimentConfig, instance_digest: &str) -> String {
    let mut c = cfg.clone();
    c.out = None;
    c.instance = None;
    let json = serde_json::to_string(&(c, instance_digest)).expect("config serializes");
    hex(&Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub build_id: String,
    pub config_hash: String,
    pub agent: String,
    pub horizon: usize,
    pub replicas: usize,
    pub seed: u64,
    /// Window and widening per replica for the sliding-window agent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<(usize, f64)>,
    pub realized_reward_budget: Vec<f64>,
    pub realized_kernel_budget: Vec<f64>,
    pub final_cum_regret: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub curve_stride: usize,
}

/// `(mean, median, sample standard deviation)`.
pub fn summary_stats(xs: &[f64]) -> (f64, f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, median, std)
}

struct ReplicaResult {
    records: Vec<RegretRecord>,
    episodes: Option<Vec<EpisodeRecord>>,
    blocks: Option<Vec<BlockRecord>>,
    params: Option<(usize, f64)>,
    budgets: (f64, f64),
    num_pairs: usize,
}

fn run_replica(cfg: &ExperimentConfig, src: &Source, replica: usize) -> Result<ReplicaResult> {
    let r = replica as u64;
    let (inst, rho) = match (&src.shared, &src.shared_rho) {
        (Some(inst), Some(rho)) => (inst.clone(), rho.clone()),
        _ => {
            let mut spec = cfg.generator.clone().expect("validated");
            spec.seed = stream(cfg.seed, r, "instance").random();
            let inst = Arc::new(spec.generate()?);
            let rho = Arc::new(GainCache::new(cfg.gain_eps).rho_stars(&inst)?);
            (inst, rho)
        }
    };
    let shape = inst.shape().clone();
    let horizon = inst.horizon();
    let mut env_rng = stream(cfg.seed, r, "env");
    let budgets = (inst.budgets().reward, inst.budgets().kernel);

    let (traj, episodes, blocks, params): (Trajectory, _, _, _) = match &cfg.agent {
        AgentSpec::SwUcrl2Cw { params, window, eta } => {
            let (w, e) = match params {
                ParamMode::Explicit => (window.expect("validated"), eta.expect("validated")),
                ParamMode::BudgetAware => default_parameters(
                    shape.num_states(),
                    shape.mean_actions(),
                    horizon,
                    Some(budgets),
                )?,
                ParamMode::Oblivious => default_parameters(shape.num_states(), shape.mean_actions(), horizon, None)?,
            };
            let mut agent = SwUcrl2Cw::new(shape.clone(), SwConfig::new(w, e, cfg.delta, horizon))?;
            let traj = simulate(&inst, &mut agent, cfg.initial_state, cfg.noise, &mut env_rng)?;
            audit_episodes(agent.episodes(), horizon, w, shape.num_pairs())?;
            (traj, Some(agent.episodes().to_vec()), None, Some((w, e)))
        }
        AgentSpec::Borl => {
            let mut agent = Borl::new(shape.clone(), horizon, cfg.delta, stream(cfg.seed, r, "master"))?;
            let traj = simulate(&inst, &mut agent, cfg.initial_state, cfg.noise, &mut env_rng)?;
            audit_borl(&agent, horizon, shape.num_pairs())?;
            (traj, None, Some(agent.blocks().to_vec()), None)
        }
        AgentSpec::Optimal => {
            let schedule = GainCache::new(cfg.gain_eps).optimal_schedule(&inst)?;
            let mut agent = ScheduledPolicyAgent::new(schedule);
            (simulate(&inst, &mut agent, cfg.initial_state, cfg.noise, &mut env_rng)?, None, None, None)
        }
        AgentSpec::Fixed { policy } => {
            let mut agent = FixedPolicyAgent::new(StationaryPolicy::new(&shape, policy.clone())?);
            (simulate(&inst, &mut agent, cfg.initial_state, cfg.noise, &mut env_rng)?, None, None, None)
        }
    };
    let records = dynamic_regret_with(&inst, &traj, &rho)?;
    Ok(ReplicaResult {
        records,
        episodes,
        blocks,
        params,
        budgets,
        num_pairs: shape.num_pairs(),
    })
}

/// Episode accounting of every block's sub-agent.
fn audit_borl(agent: &Borl, horizon: usize, num_pairs: usize) -> Result<()> {
    let h = agent.grid().block_len;
    for b in agent.blocks() {
        let start = (b.block - 1) * h + 1;
        let len = h.min(horizon - start + 1);
        let eps: Vec<EpisodeRecord> = agent
            .episodes()
            .iter()
            .filter(|(i, _)| *i == b.block)
            .map(|(_, e)| e.clone())
            .collect();
        audit_episodes(&eps, len, b.window, num_pairs)
            .map_err(|e| Error::Audit(format!("block {}: {e}", b.block)))?;
    }
    Ok(())
}

fn agent_name(a: &AgentSpec) -> &'static str {
    match a {
        AgentSpec::SwUcrl2Cw { .. } => "swucrl2-cw",
        AgentSpec::Borl => "borl",
        AgentSpec::Optimal => "optimal",
        AgentSpec::Fixed { .. } => "fixed",
    }
}

fn load_source(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Source> {
    if cfg.resample_instance {
        let spec = cfg.generator.as_ref().expect("validated");
        let digest = hex(&Sha256::digest(serde_json::to_string(spec).expect("spec serializes").as_bytes()));
        return Ok(Source {
            shared: None,
            shared_rho: None,
            digest,
        });
    }
    let inst = match (&cfg.generator, &cfg.instance) {
        (Some(spec), _) => spec.generate()?,
        (None, Some(path)) => load_instance(&base_dir.join(path))?,
        (None, None) => unreachable!("validated"),
    };
    if cfg.initial_state >= inst.shape().num_states() {
        return Err(Error::InvalidArgument(format!("initial state {} out of range", cfg.initial_state)));
    }
    let rho = GainCache::new(cfg.gain_eps).rho_stars(&inst)?;
    let digest = instance_digest(&inst);
    Ok(Source {
        shared: Some(Arc::new(inst)),
        shared_rho: Some(Arc::new(rho)),
        digest,
    })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::InvalidArgument(format!("{THREADS_ENV} must be positive")));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn replica_path(out: &Path, replica: usize, what: &str) -> PathBuf {
    out.join(format!("replica_{replica:03}_{what}.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs every replica of `cfg`, writes the artifacts to `out` and audits
/// them. `base_dir` resolves a relative instance path.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, out: &Path) -> Result<AggregateReport> {
    cfg.validate()?;
    let src = load_source(cfg, base_dir)?;
    let hash = config_hash(cfg, &src.digest);
    let pool = thread_pool()?;
    let results: Vec<ReplicaResult> = pool.install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| run_replica(cfg, &src, r))
            .collect::<Result<Vec<_>>>()
    })?;

    std::fs::create_dir_all(out)?;
    for (i, res) in results.iter().enumerate() {
        write_regret_csv(create(&replica_path(out, i, "regret"))?, &res.records)?;
        if let Some(eps) = &res.episodes {
            write_episode_csv(create(&replica_path(out, i, "episodes"))?, eps)?;
        }
        if let Some(blocks) = &res.blocks {
            write_block_csv(create(&replica_path(out, i, "blocks"))?, blocks)?;
        }
    }

    let horizon = results[0].records.len();
    let finals: Vec<f64> = results.iter().map(|r| r.records.last().map_or(0.0, |x| x.cum_regret)).collect();
    let (mean, median, std) = summary_stats(&finals);
    let stride = curve_stride(horizon);
    write_curves(out, &results, stride)?;
    let report = AggregateReport {
        build_id: build_id(),
        config_hash: hash,
        agent: agent_name(&cfg.agent).into(),
        horizon,
        replicas: cfg.replicas,
        seed: cfg.seed,
        parameters: results.iter().filter_map(|r| r.params).collect(),
        realized_reward_budget: results.iter().map(|r| r.budgets.0).collect(),
        realized_kernel_budget: results.iter().map(|r| r.budgets.1).collect(),
        final_cum_regret: finals,
        mean,
        median,
        std,
        curve_stride: stride,
    };
    let mut w = create(&out.join("report.json"))?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    drop(w);

    self_audit(out, &report, cfg, results[0].num_pairs)?;
    Ok(report)
}

pub fn curve_stride(horizon: usize) -> usize {
    if horizon <= CURVE_FULL_LIMIT {
        1
    } else {
        horizon.div_ceil(CURVE_FULL_LIMIT)
    }
}

fn write_curves(out: &Path, results: &[ReplicaResult], stride: usize) -> Result<()> {
    let horizon = results[0].records.len();
    let mut keep: BTreeSet<usize> = (1..=horizon).filter(|t| t % stride == 0 || *t == 1).collect();
    keep.insert(horizon);
    if stride > 1 {
        for r in results {
            if let Some(eps) = &r.episodes {
                keep.extend(eps.iter().map(|e| e.anchor));
            }
        }
    }
    let n = results.len() as f64;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(&out.join("curves.csv"))?);
    w.write_record(["curve", "t", "value"])?;
    for (curve, field) in [("mean_cum_regret", 0), ("mean_inst_regret", 1)] {
        for &t in &keep {
            let v = results
                .iter()
                .map(|r| {
                    let rec = &r.records[t - 1];
                    if field == 0 {
                        rec.cum_regret
                    } else {
                        rec.inst_regret
                    }
                })
                .sum::<f64>()
                / n;
            w.write_record([curve.to_string(), t.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Recomputes the report's statistics from the written files.
fn self_audit(out: &Path, report: &AggregateReport, cfg: &ExperimentConfig, num_pairs: usize) -> Result<()> {
    let mut finals = Vec::with_capacity(report.replicas);
    for i in 0..report.replicas {
        let recs = read_regret_csv(BufReader::new(File::open(replica_path(out, i, "regret"))?))?;
        let mut cum = 0.0;
        for (k, r) in recs.iter().enumerate() {
            if r.t != k + 1 {
                return Err(Error::Audit(format!("replica {i}: row {} has t = {}", k + 1, r.t)));
            }
            cum += r.inst_regret;
            if cum != r.cum_regret {
                return Err(Error::Audit(format!("replica {i}: cumulative regret breaks at t = {}", r.t)));
            }
        }
        finals.push(recs.last().map_or(0.0, |r| r.cum_regret));
        match &cfg.agent {
            AgentSpec::SwUcrl2Cw { .. } => {
                let eps = read_episode_csv(BufReader::new(File::open(replica_path(out, i, "episodes"))?))?;
                let (w, _) = report.parameters[i];
                audit_episodes(&eps, report.horizon, w, num_pairs)?;
            }
            AgentSpec::Borl => {
                read_block_csv(BufReader::new(File::open(replica_path(out, i, "blocks"))?))?;
            }
            _ => {}
        }
    }
    if finals != report.final_cum_regret {
        return Err(Error::Audit("final regrets differ from the per-replica files".into()));
    }
    let (mean, median, std) = summary_stats(&finals);
    let same = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
    if !(same(mean, report.mean) && same(median, report.median) && same(std, report.std)) {
        return Err(Error::Audit("summary statistics differ from recomputation".into()));
    }
    Ok(())
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "W")]
    pub window: usize,
    pub eta: f64,
    pub mean_final_regret: f64,
    pub median_final_regret: f64,
    pub std_final_regret: f64,
    pub argmin: bool,
}

/// Runs `cfg` once per `(window, eta)` in the grid, each in its own
/// subdirectory, and writes `sweep.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, base_dir: &Path, out: &Path, windows: &[usize], etas: &[f64]) -> Result<Vec<SweepRow>> {
    if windows.is_empty() || etas.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let mut rows = Vec::new();
    for &w in windows {
        for &e in etas {
            let mut c = cfg.clone();
            match &mut c.agent {
                AgentSpec::SwUcrl2Cw { params, window, eta } => {
                    *params = ParamMode::Explicit;
                    *window = Some(w);
                    *eta = Some(e);
                }
                _ => return Err(Error::InvalidArgument("sweeps apply to the swucrl2-cw agent".into())),
            }
            let report = run_experiment(&c, base_dir, &out.join(format!("W{w}_eta{e}")))?;
            rows.push(SweepRow {
                window: w,
                eta: e,
                mean_final_regret: report.mean,
                median_final_regret: report.median,
                std_final_regret: report.std,
                argmin: false,
            });
        }
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean_final_regret.total_cmp(&b.1.mean_final_regret))
        .map(|(i, _)| i)
        .expect("nonempty grid");
    rows[best].argmin = true;
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(&out.join("sweep.csv"))?);
    for r in &rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(rows)
}

/// Machine-readable error record written on failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        Self {
            error: e.kind().into(),
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"
kind = "experiment"
version = 1
seed = 5
replicas = 2

[generator]
family = "stationary"
states = 2
actions = 2
horizon = 300
seed = 1

[agent]
kind = "swucrl2-cw"
params = "explicit"
window = 50
eta = 0.1
"#;

    #[test]
    fn config_parses_and_overrides_apply() {
        let mut cfg = ExperimentConfig::parse(CFG).unwrap();
        cfg.validate().unwrap();
        Overrides {
            horizon: Some(100),
            window: Some(7),
            ..Default::default()
        }
        .apply(&mut cfg)
        .unwrap();
        assert_eq!(cfg.generator.as_ref().unwrap().horizon, 100);
        assert!(matches!(cfg.agent, AgentSpec::SwUcrl2Cw { window: Some(7), .. }));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let cfg = ExperimentConfig::parse(CFG).unwrap();
        let mut moved = cfg.clone();
        moved.out = Some("elsewhere".into());
        assert_eq!(config_hash(&cfg, "x"), config_hash(&moved, "x"));
        let mut other = cfg.clone();
        other.delta = 0.05;
        assert_ne!(config_hash(&cfg, "x"), config_hash(&other, "x"));
        assert_ne!(config_hash(&cfg, "x"), config_hash(&cfg, "y"));
    }

    #[test]
    fn stats() {
        assert_eq!(summary_stats(&[1.0, 3.0, 2.0]), (2.0, 2.0, 1.0));
        assert_eq!(summary_stats(&[4.0]), (4.0, 4.0, 0.0));
    }

    #[test]
    fn run_writes_audited_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(CFG).unwrap();
        let report = run_experiment(&cfg, dir.path(), dir.path()).unwrap();
        assert_eq!(report.final_cum_regret.len(), 2);
        for f in ["replica_000_regret.csv", "replica_001_episodes.csv", "curves.csv", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig::parse(CFG).unwrap();
        cfg.replicas = 0;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::parse(&CFG.replace("experiment", "instance")).is_err());
        assert!(ExperimentConfig::parse(&format!("{CFG}\nbogus = 1\n")).is_err());
    }
}
