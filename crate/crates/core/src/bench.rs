//! Seeded experiment runs with exact per-episode regret.
//!
//! The harness knows the model, so `V^{π_k}` is computed by dynamic
//! programming every episode and regret carries no evaluation noise. Only the
//! trajectories the agent learns from are sampled.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{build_agent, Agent, AgentMetadata, AgentSpec, Policy};
use crate::linmdp::{
    make_hard_instance, make_random_linear_mdp, make_tabular_embedding, Dynamics, LinearMdp, MuBarMode, TabularModel,
    Trajectory, Transition, ValueTables,
};
use crate::radii::switch_count_bound;
use crate::rng::{substream, ENV_STREAM, MODEL_STREAM};
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;
/// Environment variable overriding the configured worker count.
pub const THREADS_ENV: &str = "LINUCB_LAB_THREADS";

pub fn version_string() -> String {
    format!("linucb-lab v{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Sparse-reward lower-bound instance. `d` counts the action sign
    /// coordinates plus one, so there are `2^(d−1)` actions and the
    /// feature dimension is `d + 1`.
    Hard {
        d: usize,
        #[serde(rename = "H")]
        horizon: usize,
        #[serde(default)]
        mu_bar: MuBarMode,
    },
    Random {
        d: usize,
        #[serde(rename = "H")]
        horizon: usize,
        #[serde(rename = "S")]
        num_states: usize,
        #[serde(rename = "A")]
        num_actions: usize,
    },
    /// Tabular MDP file (`{"H","S","A","p","r"}`) embedded with one-hot features.
    Tabular { path: PathBuf },
    /// Linear MDP model file as written by [`LinearMdp::save`].
    Model { path: PathBuf },
}

impl EnvSpec {
    pub fn label(&self) -> &'static str {
        match self {
            EnvSpec::Hard { .. } => "hard",
            EnvSpec::Random { .. } => "random",
            EnvSpec::Tabular { .. } => "tabular",
            EnvSpec::Model { .. } => "model",
        }
    }
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub env: EnvSpec,
    pub agent: AgentSpec,
    #[serde(rename = "K")]
    pub episodes: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Record per-episode wall time. Off by default so that episode CSVs
    /// are byte-identical across runs.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, agent: AgentSpec, episodes: usize, seeds: Vec<u64>) -> Self {
        Self { version: CONFIG_VERSION, env, agent, episodes, seeds, parallelism: 1, timing: false, output: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Schema(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version)));
        }
        if self.episodes == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must not be empty"));
        }
        if self.parallelism == 0 {
            return Err(Error::invalid("parallelism must be at least 1"));
        }
        match &self.env {
            EnvSpec::Tabular { path } | EnvSpec::Model { path } if !path.exists() => {
                Err(Error::invalid(format!("model file {} does not exist", path.display())))
            }
            _ => Ok(()),
        }
    }
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == CONFIG_VERSION as u64 => {}
        Some(v) => return Err(Error::Schema(format!("unsupported config version {v} (expected {CONFIG_VERSION})"))),
        None => return Err(Error::Schema("missing field `version`".into())),
    }
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

/// Builds and validates the model for one seed.
pub fn build_model(env: &EnvSpec, episodes: usize, seed: u64) -> Result<LinearMdp> {
    let mut rng = substream(seed, MODEL_STREAM);
    let mdp = match env {
        EnvSpec::Hard { d, horizon, mu_bar } => {
            if *d < 2 {
                return Err(Error::invalid("hard instance needs d >= 2"));
            }
            make_hard_instance(d - 1, *horizon, episodes, *mu_bar, &mut rng)?
        }
        EnvSpec::Random { d, horizon, num_states, num_actions } => {
            make_random_linear_mdp(*d, *horizon, *num_states, *num_actions, &mut rng)?
        }
        EnvSpec::Tabular { path } => {
            let text = std::fs::read_to_string(path)?;
            let t: TabularModel = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
            make_tabular_embedding(&t)?
        }
        EnvSpec::Model { path } => LinearMdp::load(path)?,
    };
    let report = mdp.validate();
    if !report.is_valid() {
        return Err(Error::ModelInvalid(report.to_string()));
    }
    Ok(mdp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub run_id: String,
    pub seed: u64,
    pub k: usize,
    pub ret: f64,
    pub v_star: f64,
    pub v_pi: f64,
    pub regret_inc: f64,
    pub cum_regret: f64,
    pub switched: bool,
    pub mean_sigma_hat: Option<f64>,
    pub wall_us: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub run_id: String,
    pub agent: AgentMetadata,
    pub model_hash: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub d: usize,
    pub switches: Option<usize>,
    pub switch_bound: f64,
    pub wall_ms: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EpisodeRecord>,
    pub metadata: RunMetadata,
}

/// State visible to a per-episode observer, after the rollout and before
/// the agent learns from it.
pub struct EpisodeView<'a> {
    pub k: usize,
    pub agent: &'a dyn Agent,
    pub trajectory: &'a Trajectory,
    pub dynamics: &'a Dynamics,
    pub optimal: &'a ValueTables,
    pub policy: &'a Policy,
}

pub fn run_id(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}-{}-s{seed}", cfg.agent.name.as_str(), cfg.env.label())
}

pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    run_experiment_with(cfg, seed, |_| {})
}

/// Like [`run_experiment`], calling `observe` once per episode.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    seed: u64,
    mut observe: impl FnMut(&EpisodeView<'_>),
) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let mdp = build_model(&cfg.env, cfg.episodes, seed)?;
    let dynamics = Dynamics::from_mdp(&mdp)?;
    let optimal = dynamics.optimal_values();
    let uniform = dynamics.evaluate_uniform_policy();
    let mut agent = build_agent(&cfg.agent, &mdp, cfg.episodes)?;
    let mut rng = substream(seed, ENV_STREAM);
    let id = run_id(cfg, seed);
    let hz = mdp.horizon();

    let mut records = Vec::with_capacity(cfg.episodes);
    let mut cum = 0.0;
    let mut failure = None;
    for k in 1..=cfg.episodes {
        let t0 = Instant::now();
        if let Err(e) = agent.begin_episode() {
            failure = Some(e.to_string());
            break;
        }
        let policy = agent.policy();
        let s1 = dynamics.sample_initial_state(&mut rng);
        let v_pi = match &policy {
            Policy::Deterministic(table) => dynamics.evaluate_policy(table)?.v(0, s1),
            Policy::Uniform => uniform.v(0, s1),
        };
        let v_star = optimal.v(0, s1);

        let mut steps = Vec::with_capacity(hz);
        let mut s = s1;
        for h in 0..hz {
            let a = agent.act(h, s, &mut rng);
            let (r, next) = dynamics.sample_step(h, s, a, &mut rng);
            steps.push(Transition { state: s, action: a, reward: r, next_state: next });
            s = next;
        }
        let trajectory = Trajectory { steps };
        observe(&EpisodeView { k, agent: agent.as_ref(), trajectory: &trajectory, dynamics: &dynamics, optimal: &optimal, policy: &policy });
        if let Err(e) = agent.end_episode(&trajectory) {
            failure = Some(e.to_string());
            break;
        }
        let stats = agent.episode_stats();
        let regret_inc = v_star - v_pi;
        cum += regret_inc;
        records.push(EpisodeRecord {
            run_id: id.clone(),
            seed,
            k,
            ret: trajectory.episode_return(),
            v_star,
            v_pi,
            regret_inc,
            cum_regret: cum,
            switched: stats.switched,
            mean_sigma_hat: stats.mean_sigma_hat,
            wall_us: if cfg.timing { t0.elapsed().as_micros() as u64 } else { 0 },
        });
    }

    let metadata = RunMetadata {
        version: version_string(),
        config: cfg.clone(),
        seed,
        run_id: id,
        agent: agent.metadata(),
        model_hash: mdp.content_hash(),
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        horizon: hz,
        d: mdp.dim(),
        switches: agent.as_plus().map(|p| p.switch_count()),
        switch_bound: switch_count_bound(mdp.dim(), hz, cfg.episodes),
        wall_ms: cfg.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
        failure,
    };
    Ok(RunOutput { records, metadata })
}

/// Worker count after applying the environment override.
pub fn effective_parallelism(configured: usize) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(configured)
        .max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: usize,
    pub mean_cum_regret: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n_seeds: usize,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub runs: Vec<(u64, std::result::Result<RunOutput, String>)>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs every seed of `cfg` on a pool of `parallelism` workers. Failed
/// seeds are reported and excluded from the aggregate.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    use rayon::prelude::*;
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_parallelism(cfg.parallelism))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    let runs: Vec<(u64, std::result::Result<RunOutput, String>)> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| (seed, run_experiment(cfg, seed).map_err(|e| e.to_string())))
            .collect()
    });
    let series: Vec<&[EpisodeRecord]> = runs.iter().filter_map(|(_, r)| r.as_ref().ok()).map(|o| o.records.as_slice()).collect();
    let aggregate = aggregate(&series);
    Ok(SweepOutput { runs, aggregate })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-episode statistics of cumulative regret across runs. Values are
/// sorted before summing so the result does not depend on run order.
pub fn aggregate(runs: &[&[EpisodeRecord]]) -> Vec<AggregateRow> {
    let max_k = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    (0..max_k)
        .map(|i| {
            let mut vals: Vec<f64> = runs.iter().filter_map(|r| r.get(i)).map(|e| e.cum_regret).collect();
            vals.sort_by(f64::total_cmp);
            AggregateRow {
                k: i + 1,
                mean_cum_regret: vals.iter().sum::<f64>() / vals.len() as f64,
                median: quantile(&vals, 0.5),
                q25: quantile(&vals, 0.25),
                q75: quantile(&vals, 0.75),
                n_seeds: vals.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ExponentFit {
    /// `series(k) ≈ a·k^b`.
    Fit { a: f64, b: f64 },
    /// Fit skipped because the fitted half contains nonpositive values.
    Skipped,
}

/// Log-log least squares of `series[k−1]` against `k` over the second half
/// of the series.
pub fn fit_regret_exponent(series: &[f64]) -> Result<ExponentFit> {
    if series.len() < 20 {
        return Err(Error::invalid(format!("need at least 20 points, got {}", series.len())));
    }
    let start = series.len() / 2;
    let tail = &series[start..];
    if tail.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Ok(ExponentFit::Skipped);
    }
    let n = tail.len() as f64;
    let xs: Vec<f64> = (start + 1..=series.len()).map(|k| (k as f64).ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    Ok(ExponentFit::Fit { a: (my - b * mx).exp(), b })
}

const EPISODE_HEADER: [&str; 11] = [
    "run_id", "seed", "k", "ret", "v_star", "v_pi", "regret_inc", "cum_regret", "switched", "mean_sigma_hat", "wall_us",
];
const AGGREGATE_HEADER: [&str; 6] = ["k", "mean_cum_regret", "median", "q25", "q75", "n_seeds"];

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().has_headers(false).from_path(path)?)
}

pub fn write_episodes_csv(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(EPISODE_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(AGGREGATE_HEADER) {
        return Err(Error::Schema(format!("{} is not an aggregate CSV", path.display())));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// One record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_metadata(path: &Path, meta: &RunMetadata) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub agent: String,
    pub k: usize,
    pub stat: &'static str,
    pub value: f64,
}

/// Reshapes aggregate rows into long format `(agent, k, stat, value)`.
pub fn plot_rows(agent: &str, rows: &[AggregateRow]) -> Vec<PlotRow> {
    let mut out = Vec::with_capacity(rows.len() * 5);
    for r in rows {
        for (stat, value) in [
            ("mean_cum_regret", r.mean_cum_regret),
            ("median", r.median),
            ("q25", r.q25),
            ("q75", r.q75),
            ("n_seeds", r.n_seeds as f64),
        ] {
            out.push(PlotRow { agent: agent.to_string(), k: r.k, stat, value });
        }
    }
    out
}

pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["agent", "k", "stat", "value"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
