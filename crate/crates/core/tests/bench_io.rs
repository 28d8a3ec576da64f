use linucb_lab::agents::{AgentKind, AgentSpec};
use linucb_lab::bench::{
    aggregate, fit_regret_exponent, parse_config, read_aggregate_csv, read_config, read_episodes_csv, run_experiment,
    sweep, write_aggregate_csv, write_config, write_episodes_csv, EnvSpec, EpisodeRecord, ExperimentConfig, ExponentFit,
};
use linucb_lab::linmdp::MuBarMode;
use linucb_lab::Error;
use proptest::prelude::*;

fn hard_cfg(agent: AgentKind, k: usize, seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig::new(EnvSpec::Hard { d: 3, horizon: 3, mu_bar: MuBarMode::Random }, AgentSpec::new(agent), k, seeds)
}

fn record(k: usize, cum: f64) -> EpisodeRecord {
    EpisodeRecord {
        run_id: "r".into(),
        seed: 0,
        k,
        ret: 0.0,
        v_star: 0.0,
        v_pi: 0.0,
        regret_inc: 0.0,
        cum_regret: cum,
        switched: false,
        mean_sigma_hat: None,
        wall_us: 0,
    }
}

#[test]
fn config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = hard_cfg(AgentKind::Plus, 123, vec![1, 2, 3]);
    cfg.agent.bonus_scale = 0.05;
    cfg.agent.lambda = Some(0.5);
    cfg.parallelism = 3;
    let path = dir.path().join("cfg.json");
    write_config(&path, &cfg).unwrap();
    assert_eq!(read_config(&path).unwrap(), cfg);
    let random = ExperimentConfig::new(
        EnvSpec::Random { d: 4, horizon: 2, num_states: 5, num_actions: 2 },
        AgentSpec::new(AgentKind::Ucb),
        10,
        vec![0],
    );
    write_config(&path, &random).unwrap();
    assert_eq!(read_config(&path).unwrap(), random);
}

#[test]
fn config_schema_errors_name_the_field() {
    let base = r#"{"version":1,"env":{"kind":"hard","d":3,"H":3},"agent":{"name":"plus"},"K":10,"seeds":[0]}"#;
    assert!(parse_config(base).is_ok());
    let cases = [
        (r#"{"env":{"kind":"hard","d":3,"H":3},"agent":{"name":"plus"},"K":10,"seeds":[0]}"#, "version"),
        (r#"{"version":2,"env":{"kind":"hard","d":3,"H":3},"agent":{"name":"plus"},"K":10,"seeds":[0]}"#, "version"),
        (r#"{"version":1,"env":{"kind":"hard","d":3,"H":3},"agent":{"name":"plus"},"seeds":[0]}"#, "K"),
        (r#"{"version":1,"env":{"kind":"hard","d":3,"H":3},"agent":{"name":"plus","bonus":1},"K":10,"seeds":[0]}"#, "bonus"),
        (r#"{"version":1,"env":{"kind":"hard","d":3,"H":3},"agent":{"name":"plus"},"K":10,"seeds":[0],"extra":1}"#, "extra"),
    ];
    for (text, field) in cases {
        match parse_config(text) {
            Err(Error::Schema(msg)) => assert!(msg.contains(field), "{msg}"),
            other => panic!("expected schema error naming {field}, got {other:?}"),
        }
    }
    let no_seeds = r#"{"version":1,"env":{"kind":"hard","d":3,"H":3},"agent":{"name":"plus"},"K":10,"seeds":[]}"#;
    assert!(matches!(parse_config(no_seeds), Err(Error::InvalidArgument(_))));
}

#[test]
fn episode_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&hard_cfg(AgentKind::Plus, 30, vec![4]), 4).unwrap();
    let path = dir.path().join("e.csv");
    write_episodes_csv(&path, &out.records).unwrap();
    assert_eq!(read_episodes_csv(&path).unwrap(), out.records);
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "run_id,seed,k,ret,v_star,v_pi,regret_inc,cum_regret,switched,mean_sigma_hat,wall_us");
}

#[test]
fn header_only_csvs_are_empty() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.csv");
    write_episodes_csv(&e, &[]).unwrap();
    assert!(read_episodes_csv(&e).unwrap().is_empty());
    let a = dir.path().join("a.csv");
    write_aggregate_csv(&a, &[]).unwrap();
    assert_eq!(std::fs::read_to_string(&a).unwrap().trim(), "k,mean_cum_regret,median,q25,q75,n_seeds");
    assert!(read_aggregate_csv(&a).unwrap().is_empty());
    assert!(aggregate(&[]).is_empty());
}

#[test]
fn runs_are_deterministic_and_sweep_matches_runs() {
    let cfg = hard_cfg(AgentKind::Ucb, 40, vec![10, 11, 12]);
    let a = run_experiment(&cfg, 11).unwrap();
    let b = run_experiment(&cfg, 11).unwrap();
    assert_eq!(a.records, b.records);
    let mut parallel = cfg.clone();
    parallel.parallelism = 3;
    let s = sweep(&parallel).unwrap();
    let single = sweep(&cfg).unwrap();
    assert_eq!(s.aggregate, single.aggregate);
    let (_, run) = s.runs.iter().find(|(seed, _)| *seed == 11).unwrap();
    assert_eq!(run.as_ref().unwrap().records, a.records);
    assert_eq!(s.aggregate.len(), 40);
    assert!(s.aggregate.iter().all(|r| r.n_seeds == 3));
}

#[test]
fn aggregate_quantiles() {
    let runs: Vec<Vec<EpisodeRecord>> = [1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|c| vec![record(1, *c)]).collect();
    let refs: Vec<&[EpisodeRecord]> = runs.iter().map(|r| r.as_slice()).collect();
    let agg = aggregate(&refs);
    assert_eq!(agg.len(), 1);
    assert_eq!((agg[0].mean_cum_regret, agg[0].median, agg[0].q25, agg[0].q75), (3.0, 3.0, 2.0, 4.0));
}

#[test]
fn exponent_fit() {
    let series: Vec<f64> = (1..=100).map(|k| 2.0 * (k as f64).powf(0.5)).collect();
    match fit_regret_exponent(&series).unwrap() {
        ExponentFit::Fit { a, b } => assert!((a - 2.0).abs() < 1e-9 && (b - 0.5).abs() < 1e-12),
        ExponentFit::Skipped => panic!("fit skipped"),
    }
    assert!(fit_regret_exponent(&series[..10]).is_err());
    assert_eq!(fit_regret_exponent(&[0.0; 40]).unwrap(), ExponentFit::Skipped);
}

proptest! {
    #[test]
    fn aggregate_is_permutation_invariant(
        vals in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 5), 1..8),
        rot in 0usize..8,
    ) {
        let runs: Vec<Vec<EpisodeRecord>> = vals
            .iter()
            .map(|v| v.iter().enumerate().map(|(i, c)| record(i + 1, *c)).collect())
            .collect();
        let refs: Vec<&[EpisodeRecord]> = runs.iter().map(|r| r.as_slice()).collect();
        let mut shuffled = refs.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        prop_assert_eq!(aggregate(&refs), aggregate(&shuffled));
    }
}

#[test]
fn plus_agent_not_worse_than_random_on_hard_instance() {
    let env = EnvSpec::Hard { d: 5, horizon: 6, mu_bar: MuBarMode::Random };
    let seeds: Vec<u64> = (0..20).collect();
    let final_mean = |agent: AgentSpec| {
        let cfg = ExperimentConfig::new(env.clone(), agent, 2000, seeds.clone());
        sweep(&cfg).unwrap().aggregate.last().unwrap().mean_cum_regret
    };
    let mut plus = AgentSpec::new(AgentKind::Plus);
    plus.bonus_scale = 0.05;
    let (p, r) = (final_mean(plus), final_mean(AgentSpec::new(AgentKind::Random)));
    assert!(p < r, "plus {p} vs random {r}");
}
