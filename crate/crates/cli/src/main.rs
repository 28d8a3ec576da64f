use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use linucb_lab::agents::{AgentKind, AgentSpec};
use linucb_lab::bench::{
    build_model, plot_rows, read_aggregate_csv, read_config, run_experiment, sweep, version_string,
    write_aggregate_csv, write_config, write_episodes_csv, write_metadata, write_plot_csv, EnvSpec, ExperimentConfig,
};
use linucb_lab::conclab::{
    elliptical_study, scalar_check, violation_rate, write_elliptical_csv, write_summary_csv, write_trials_csv,
    FeatureModel, MartingaleSpec, NoiseModel, RateSummary, ScalarBound, SelfNormalizedBound, StepModel, TrialRecord,
};
use linucb_lab::linmdp::{LinearMdp, MuBarMode};
use serde_json::json;

/// Usage error raised by the CLI itself (exit code 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Model validation failure (exit code 2); the report is already printed.
#[derive(Debug)]
struct Invalid;

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("model validation failed")
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "linucb-lab", version, about = "Linear MDP experiments and concentration checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one agent on one seed.
    Run(RunArgs),
    /// Run one agent over many seeds and aggregate regret.
    Sweep(SweepArgs),
    /// Monte Carlo check of a concentration bound.
    Conclab(ConclabArgs),
    /// Check a model file against the linear MDP assumptions.
    Validate(ValidateArgs),
    /// Generate a model file.
    Gen(GenArgs),
    /// Reshape aggregate CSVs into a long table.
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvKind {
    Hard,
    Random,
    Tabular,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenEnv {
    Hard,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Plus,
    Ucb,
    Random,
    Oracle,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Plus => AgentKind::Plus,
            AgentArg::Ucb => AgentKind::Ucb,
            AgentArg::Random => AgentKind::Random,
            AgentArg::Oracle => AgentKind::Oracle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MuBarArg {
    Random,
    AllPositive,
}

impl From<MuBarArg> for MuBarMode {
    fn from(m: MuBarArg) -> Self {
        match m {
            MuBarArg::Random => MuBarMode::Random,
            MuBarArg::AllPositive => MuBarMode::AllPositive,
        }
    }
}

/// Environment and agent flags shared by `run` and `sweep`.
#[derive(Args)]
struct InlineArgs {
    /// Experiment config JSON; excludes the inline flags.
    #[arg(long, conflicts_with_all = ["env", "d", "horizon", "episodes", "num_states", "num_actions", "model", "mu_bar", "agent", "bonus_scale", "delta", "lambda", "scale_offsets", "timing"])]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    env: Option<EnvKind>,
    /// Feature dimension; for the hard instance, sign coordinates plus one.
    #[arg(long)]
    d: Option<usize>,
    /// Horizon.
    #[arg(long = "H", value_name = "H")]
    horizon: Option<usize>,
    /// Number of episodes.
    #[arg(long = "K", value_name = "K", required_unless_present = "config")]
    episodes: Option<usize>,
    /// States of the random environment.
    #[arg(long = "S", value_name = "S")]
    num_states: Option<usize>,
    /// Actions of the random environment.
    #[arg(long = "A", value_name = "A")]
    num_actions: Option<usize>,
    /// Tabular model file for `--env tabular`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    mu_bar: Option<MuBarArg>,
    #[arg(long, value_enum, default_value = "plus")]
    agent: AgentArg,
    #[arg(long)]
    bonus_scale: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Also scale the radii inside the variance weights (plus agent).
    #[arg(long)]
    scale_offsets: bool,
    /// Record per-episode wall time.
    #[arg(long)]
    timing: bool,
}

impl InlineArgs {
    fn inline_config(&self, seeds: Vec<u64>) -> anyhow::Result<ExperimentConfig> {
        let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| usage(format!("--{flag} is required for this environment")));
        let env = match self.env.ok_or_else(|| usage("--env is required without --config"))? {
            EnvKind::Hard => EnvSpec::Hard {
                d: need(self.d, "d")?,
                horizon: need(self.horizon, "H")?,
                mu_bar: self.mu_bar.map(Into::into).unwrap_or_default(),
            },
            EnvKind::Random => EnvSpec::Random {
                d: need(self.d, "d")?,
                horizon: need(self.horizon, "H")?,
                num_states: need(self.num_states, "S")?,
                num_actions: need(self.num_actions, "A")?,
            },
            EnvKind::Tabular => {
                EnvSpec::Tabular { path: self.model.clone().ok_or_else(|| usage("--model is required for --env tabular"))? }
            }
        };
        let mut agent = AgentSpec::new(self.agent.into());
        if let Some(b) = self.bonus_scale {
            agent.bonus_scale = b;
        }
        if let Some(d) = self.delta {
            agent.delta = d;
        }
        agent.lambda = self.lambda;
        agent.scale_offsets = self.scale_offsets;
        let episodes = self.episodes.ok_or_else(|| usage("--K is required without --config"))?;
        let mut cfg = ExperimentConfig::new(env, agent, episodes, seeds);
        cfg.timing = self.timing;
        Ok(cfg)
    }

    fn load_config(&self) -> anyhow::Result<Option<ExperimentConfig>> {
        let Some(path) = &self.config else { return Ok(None) };
        if !path.exists() {
            return Err(usage(format!("config file {} does not exist", path.display())));
        }
        Ok(Some(read_config(path)?))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inline: InlineArgs,
    /// Seed; with --config, defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; with --config, defaults to the configured output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    inline: InlineArgs,
    /// First seed of an inline sweep.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds of an inline sweep.
    #[arg(long, default_value_t = 10)]
    n_seeds: u64,
    /// Worker threads; LINUCB_LAB_THREADS takes precedence.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Bernstein,
    Hoeffding,
    Elliptical,
    Azuma,
    Freedman,
    UniformBernstein,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Uniform,
    TruncatedGaussian,
    Rademacher,
}

impl From<NoiseArg> for NoiseModel {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Uniform => NoiseModel::UniformBounded,
            NoiseArg::TruncatedGaussian => NoiseModel::TruncatedGaussian,
            NoiseArg::Rademacher => NoiseModel::RademacherScaled,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    IidSphere,
    AdversarialRepeat,
    Decaying,
    Zero,
}

impl From<FeatureArg> for FeatureModel {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::IidSphere => FeatureModel::IidSphere,
            FeatureArg::AdversarialRepeat => FeatureModel::AdversarialRepeat,
            FeatureArg::Decaying => FeatureModel::Decaying,
            FeatureArg::Zero => FeatureModel::Zero,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StepArg {
    Rademacher,
    Sparse,
}

#[derive(Args)]
struct ConclabArgs {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Path length.
    #[arg(long = "T", value_name = "T", default_value_t = 200)]
    t_max: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Feature norm bound.
    #[arg(long = "L", value_name = "L", default_value_t = 1.0)]
    l2_cap: f64,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Scaled-noise cap; defaults to 1 for the Bernstein check.
    #[arg(long = "R", value_name = "R")]
    r_cap: Option<f64>,
    #[arg(long, value_enum, default_value = "uniform")]
    noise: NoiseArg,
    #[arg(long, value_enum, default_value = "iid-sphere")]
    features: FeatureArg,
    /// Potential threshold of the elliptical count bound.
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    /// Increment law of the scalar checks.
    #[arg(long, value_enum, default_value = "rademacher")]
    steps: StepArg,
    /// Nonzero probability of sparse increments.
    #[arg(long, default_value_t = 0.05)]
    sparse_p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Accepted for uniformity; validation is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    env: GenEnv,
    #[arg(long)]
    d: usize,
    #[arg(long = "H", value_name = "H")]
    horizon: usize,
    /// Episode budget the hard instance is sized for.
    #[arg(long = "K", value_name = "K", required_if_eq("env", "hard"))]
    episodes: Option<usize>,
    #[arg(long = "S", value_name = "S", required_if_eq("env", "random"))]
    num_states: Option<usize>,
    #[arg(long = "A", value_name = "A", required_if_eq("env", "random"))]
    num_actions: Option<usize>,
    #[arg(long, value_enum)]
    mu_bar: Option<MuBarArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregate CSVs; `label=path` sets the agent label explicitly.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<String>,
    /// Accepted for uniformity; reshaping is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let cfg = match args.inline.load_config()? {
        Some(cfg) => cfg,
        None => args.inline.inline_config(vec![args.seed.unwrap_or(0)])?,
    };
    let seed = args.seed.unwrap_or(cfg.seeds[0]);
    let out = args.out.or_else(|| cfg.output.clone()).ok_or_else(|| usage("--out is required"))?;
    let output = run_experiment(&cfg, seed)?;
    ensure_dir(&out)?;
    write_episodes_csv(&out.join("episodes.csv"), &output.records)?;
    write_metadata(&out.join("metadata.json"), &output.metadata)?;
    let last = output.records.last().map(|r| r.cum_regret).unwrap_or(0.0);
    println!("{}: {} episodes, cumulative regret {last:.6}", output.metadata.run_id, output.records.len());
    if let Some(f) = &output.metadata.failure {
        bail!("run stopped early: {f}");
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = match args.inline.load_config()? {
        Some(cfg) => cfg,
        None => args.inline.inline_config((args.seed..args.seed + args.n_seeds).collect())?,
    };
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    let out = args.out.or_else(|| cfg.output.clone()).ok_or_else(|| usage("--out is required"))?;
    let result = sweep(&cfg)?;
    ensure_dir(&out)?;
    let mut failures = Vec::new();
    for (seed, run) in &result.runs {
        match run {
            Ok(o) => {
                let dir = out.join(format!("seed_{seed}"));
                ensure_dir(&dir)?;
                write_episodes_csv(&dir.join("episodes.csv"), &o.records)?;
                write_metadata(&dir.join("metadata.json"), &o.metadata)?;
            }
            Err(e) => {
                eprintln!("seed {seed} failed: {e}");
                failures.push(json!({ "seed": seed, "error": e }));
            }
        }
    }
    write_aggregate_csv(&out.join("aggregate.csv"), &result.aggregate)?;
    write_config(&out.join("config.json"), &cfg)?;
    let meta = json!({ "version": version_string(), "config": cfg, "failures": failures });
    std::fs::write(out.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    if let Some(last) = result.aggregate.last() {
        println!(
            "{} seeds, K={}: mean cumulative regret {:.6} (median {:.6})",
            last.n_seeds, last.k, last.mean_cum_regret, last.median
        );
    }
    if !failures.is_empty() {
        bail!("{} of {} seeds failed", failures.len(), result.runs.len());
    }
    Ok(())
}

fn print_rate(s: &RateSummary) {
    println!("check={} trials={} violations={} rate={}", s.check, s.trials, s.violations, s.rate);
    println!("max_tightness={:.6} mean_tightness={:.6}", s.max_tightness, s.mean_tightness);
    if s.rate <= s.delta {
        println!("rate ≤ {}", s.delta);
    } else {
        println!("rate > {} (within Monte Carlo allowance: {})", s.delta, s.within_allowance());
    }
}

fn write_rate(out: Option<&Path>, summary: &RateSummary, records: &[TrialRecord]) -> anyhow::Result<()> {
    if let Some(dir) = out {
        write_trials_csv(&dir.join("trials.csv"), records)?;
        write_summary_csv(&dir.join("summary.csv"), std::slice::from_ref(summary))?;
    }
    Ok(())
}

fn cmd_conclab(args: ConclabArgs) -> anyhow::Result<()> {
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        let meta = json!({
            "version": version_string(),
            "check": args.check.to_possible_value().map(|v| v.get_name().to_string()),
            "d": args.d, "T": args.t_max, "trials": args.trials, "delta": args.delta,
            "lambda": args.lambda, "L": args.l2_cap, "sigma": args.sigma, "R": args.r_cap, "c": args.c,
            "noise": args.noise.to_possible_value().map(|v| v.get_name().to_string()),
            "features": args.features.to_possible_value().map(|v| v.get_name().to_string()),
            "seed": args.seed,
        });
        std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    let out = args.out.as_deref();
    let scalar = |bound: ScalarBound| -> anyhow::Result<()> {
        let steps = match args.steps {
            StepArg::Rademacher => StepModel::Rademacher { scale: 1.0 },
            StepArg::Sparse => StepModel::Sparse { c: 1.0, p: args.sparse_p },
        };
        let (summary, records) = scalar_check(steps, args.t_max, bound, args.delta, args.trials, args.seed)?;
        print_rate(&summary);
        write_rate(out, &summary, &records)
    };
    let vector = |bound: SelfNormalizedBound, r_cap: Option<f64>| -> anyhow::Result<()> {
        let spec = MartingaleSpec {
            d: args.d,
            t_max: args.t_max,
            lambda: args.lambda,
            l2_cap: args.l2_cap,
            sigma: args.sigma,
            r_cap,
            noise: args.noise.into(),
            features: args.features.into(),
        };
        let (summary, records) = violation_rate(&spec, bound, args.delta, args.trials, args.seed)?;
        print_rate(&summary);
        write_rate(out, &summary, &records)
    };
    match args.check {
        Check::Bernstein => vector(SelfNormalizedBound::Bernstein, Some(args.r_cap.unwrap_or(1.0))),
        Check::Hoeffding => vector(SelfNormalizedBound::Hoeffding, args.r_cap),
        Check::Azuma => scalar(ScalarBound::Azuma),
        Check::Freedman => scalar(ScalarBound::Freedman),
        Check::UniformBernstein => scalar(ScalarBound::UniformBernstein),
        Check::Elliptical => {
            let (summary, outcomes) =
                elliptical_study(args.d, args.t_max, args.l2_cap, args.lambda, args.c, args.features.into(), args.trials, args.seed)?;
            println!(
                "check=elliptical trials={} violations={} max_count={} count_bound={:.3} max_potential_sum={:.4} sum_bound={:.4}",
                summary.trials,
                summary.violations,
                summary.max_count,
                summary.count_bound,
                summary.max_potential_sum,
                summary.sum_bound
            );
            if let Some(dir) = out {
                write_elliptical_csv(&dir.join("trials.csv"), &outcomes)?;
                std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            }
            if summary.violations > 0 {
                return Err(linucb_lab::Error::LemmaViolation(format!(
                    "elliptical bounds failed on {} of {} paths",
                    summary.violations, summary.trials
                ))
                .into());
            }
            Ok(())
        }
    }
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<()> {
    if !args.model.exists() {
        return Err(usage(format!("model file {} does not exist", args.model.display())));
    }
    let mdp = LinearMdp::load(&args.model)?;
    let report = mdp.validate();
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    println!("{report}");
    if !report.is_valid() {
        return Err(Invalid.into());
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<()> {
    let env = match args.env {
        GenEnv::Hard => EnvSpec::Hard { d: args.d, horizon: args.horizon, mu_bar: args.mu_bar.map(Into::into).unwrap_or_default() },
        GenEnv::Random => EnvSpec::Random {
            d: args.d,
            horizon: args.horizon,
            num_states: args.num_states.ok_or_else(|| usage("--S is required"))?,
            num_actions: args.num_actions.ok_or_else(|| usage("--A is required"))?,
        },
    };
    let mdp = build_model(&env, args.episodes.unwrap_or(1), args.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    mdp.save(&args.out)?;
    println!(
        "wrote {} (S={} A={} H={} d={}, sha256 {})",
        args.out.display(),
        mdp.num_states(),
        mdp.num_actions(),
        mdp.horizon(),
        mdp.dim(),
        mdp.content_hash()
    );
    Ok(())
}

/// Agent label for an aggregate CSV: explicit `label=path`, else the
/// parent directory for files named `aggregate.csv`, else the file stem.
fn plot_input(spec: &str) -> (String, PathBuf) {
    if let Some((label, path)) = spec.split_once('=') {
        return (label.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(spec);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
    let label = if stem == "aggregate" {
        path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()).map(str::to_string).unwrap_or(stem)
    } else {
        stem
    };
    (label, path)
}

fn cmd_plotdata(args: PlotArgs) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for spec in &args.inputs {
        let (label, path) = plot_input(spec);
        if !path.exists() {
            return Err(usage(format!("input {} does not exist", path.display())));
        }
        rows.extend(plot_rows(&label, &read_aggregate_csv(&path)?));
    }
    write_plot_csv(&args.out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

/// 1 usage, 2 validation failure, 3 runtime failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.is::<Usage>() {
        return 1;
    }
    if err.is::<Invalid>() {
        return 2;
    }
    match err.downcast_ref::<linucb_lab::Error>() {
        Some(linucb_lab::Error::InvalidArgument(_) | linucb_lab::Error::Schema(_)) => 1,
        Some(linucb_lab::Error::ModelInvalid(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Conclab(a) => cmd_conclab(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Plotdata(a) => cmd_plotdata(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
