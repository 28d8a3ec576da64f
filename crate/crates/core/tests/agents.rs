use linucb_lab::agents::{build_agent, Agent, AgentKind, AgentSpec, LsviPlus, LsviUcb, Policy};
use linucb_lab::bench::{run_experiment, EnvSpec, ExperimentConfig};
use linucb_lab::linalg::{cholesky, GramState};
use linucb_lab::linmdp::{make_random_linear_mdp, Dynamics, LinearMdp, Trajectory, Transition};
use linucb_lab::radii::switch_count_bound;
use linucb_lab::rng::{seeded, LabRng};
use rand::Rng;

fn play(agent: &mut dyn Agent, dynamics: &Dynamics, episodes: usize, rng: &mut LabRng) {
    for _ in 0..episodes {
        agent.begin_episode().unwrap();
        let mut s = dynamics.sample_initial_state(rng);
        let mut steps = Vec::new();
        for h in 0..dynamics.horizon() {
            let a = agent.act(h, s, rng);
            let (reward, next) = dynamics.sample_step(h, s, a, rng);
            steps.push(Transition { state: s, action: a, reward, next_state: next });
            s = next;
        }
        agent.end_episode(&Trajectory { steps }).unwrap();
    }
}

fn random_mdp(d: usize, h: usize, s: usize, a: usize, seed: u64) -> LinearMdp {
    make_random_linear_mdp(d, h, s, a, &mut seeded(seed)).unwrap()
}

/// Solves `(λI + Σ φφᵀ) w = Σ φ v(s')` from scratch with a Cholesky factor.
fn brute_ridge(mdp: &LinearMdp, lambda: f64, samples: &[(usize, usize, usize, f64)], v: &[f64]) -> Vec<f64> {
    let d = mdp.dim();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = lambda;
    }
    let mut b = vec![0.0; d];
    for &(s, a, next, w) in samples {
        let phi = mdp.phi(s, a);
        for i in 0..d {
            b[i] += w * phi[i] * v[next];
            for j in 0..d {
                m[i * d + j] += w * phi[i] * phi[j];
            }
        }
    }
    let l = cholesky(&m, d).unwrap();
    let mut y = vec![0.0; d];
    for i in 0..d {
        y[i] = (b[i] - (0..i).map(|k| l[i * d + k] * y[k]).sum::<f64>()) / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        x[i] = (y[i] - (i + 1..d).map(|k| l[k * d + i] * x[k]).sum::<f64>()) / l[i * d + i];
    }
    x
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

#[test]
fn ucb_regression_matches_brute_force() {
    let mdp = random_mdp(4, 3, 6, 3, 11);
    let dynamics = Dynamics::from_mdp(&mdp).unwrap();
    let mut agent = LsviUcb::new(&mdp, 60, &AgentSpec::new(AgentKind::Ucb)).unwrap();
    let mut rng = seeded(12);
    play(&mut agent, &dynamics, 60, &mut rng);
    for h in 0..3 {
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..3.0)).collect();
        let samples: Vec<_> = agent.history(h).iter().map(|&(s, a, n)| (s, a, n, 1.0)).collect();
        assert_eq!(samples.len(), 60);
        let want = brute_ridge(&mdp, agent.gram(h).lambda(), &samples, &v);
        assert!(close(&agent.regression_weights(h, &v).unwrap(), &want, 1e-8), "stage {h}");
    }
}

#[test]
fn ucb_values_are_clamped() {
    let mdp = random_mdp(3, 4, 5, 2, 5);
    let dynamics = Dynamics::from_mdp(&mdp).unwrap();
    let mut agent = LsviUcb::new(&mdp, 30, &AgentSpec::new(AgentKind::Ucb)).unwrap();
    play(&mut agent, &dynamics, 30, &mut seeded(6));
    agent.begin_episode().unwrap();
    for h in 0..4 {
        for s in 0..5 {
            for a in 0..2 {
                let q = agent.q(h, s, a);
                assert!((0.0..=4.0).contains(&q));
            }
        }
    }
}

#[test]
fn plus_regression_matches_brute_force() {
    let mdp = random_mdp(4, 3, 6, 3, 21);
    let dynamics = Dynamics::from_mdp(&mdp).unwrap();
    let mut spec = AgentSpec::new(AgentKind::Plus);
    spec.bonus_scale = 0.05;
    let mut agent = LsviPlus::new(&mdp, 80, &spec).unwrap();
    let mut rng = seeded(22);
    play(&mut agent, &dynamics, 80, &mut rng);
    for h in 0..3 {
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..3.0)).collect();
        let samples: Vec<_> = agent
            .history(h)
            .iter()
            .map(|e| (e.state, e.action, e.next_state, e.sigma_hat.powi(-2)))
            .collect();
        let want = brute_ridge(&mdp, agent.lambda(), &samples, &v);
        assert!(close(&agent.regression_weights(h, &v).unwrap(), &want, 1e-6), "stage {h}");
    }
}

#[test]
fn plus_invariants_hold() {
    let (d, hz, k) = (4, 5, 200);
    let bound = switch_count_bound(d, hz, k);
    for (seed, scale) in [(1u64, 1.0), (2, 0.1), (3, 0.01), (4, 0.001)] {
        let mdp = random_mdp(d, hz, 5, 3, seed);
        let dynamics = Dynamics::from_mdp(&mdp).unwrap();
        let mut spec = AgentSpec::new(AgentKind::Plus);
        spec.bonus_scale = scale;
        let mut agent = LsviPlus::new(&mdp, k, &spec).unwrap();
        play(&mut agent, &dynamics, k, &mut seeded(seed + 100));
        assert!(agent.switch_count() >= 1 && agent.switch_count() as f64 <= bound, "{} > {bound}", agent.switch_count());
        let floor = (hz as f64).sqrt();
        for h in 0..hz {
            assert_eq!(agent.history(h).len(), k);
            assert!(agent.history(h).iter().all(|e| e.sigma_hat >= floor - 1e-12 && e.sigma_tilde >= floor - 1e-12));
            let v_hat = agent.v_hat(h);
            let v_check = agent.v_check(h);
            for s in 0..5 {
                assert!((0.0..=hz as f64).contains(&v_hat[s]));
                assert!((0.0..=hz as f64).contains(&v_check[s]));
            }
        }
    }
}

#[test]
fn oracle_has_zero_regret() {
    let env = EnvSpec::Random { d: 4, horizon: 4, num_states: 6, num_actions: 3 };
    let cfg = ExperimentConfig::new(env, AgentSpec::new(AgentKind::Oracle), 300, vec![5]);
    let out = run_experiment(&cfg, 5).unwrap();
    assert!(out.records.iter().all(|r| r.regret_inc.abs() < 1e-12));
}

#[test]
fn random_agent_regret_is_linear() {
    let env = EnvSpec::Random { d: 4, horizon: 4, num_states: 6, num_actions: 3 };
    let k = 4000;
    let cfg = ExperimentConfig::new(env.clone(), AgentSpec::new(AgentKind::Random), k, vec![8]);
    let out = run_experiment(&cfg, 8).unwrap();
    let mdp = linucb_lab::bench::build_model(&env, k, 8).unwrap();
    let dynamics = Dynamics::from_mdp(&mdp).unwrap();
    let (opt, unif) = (dynamics.optimal_values(), dynamics.evaluate_uniform_policy());
    let gap: Vec<f64> = (0..6).map(|s| opt.v(0, s) - unif.v(0, s)).collect();
    let expected = k as f64 * gap.iter().sum::<f64>() / 6.0;
    let got = out.records.last().unwrap().cum_regret;
    assert!((got - expected).abs() <= 0.2 * expected, "{got} vs {expected}");
    for (i, r) in out.records.iter().enumerate() {
        assert!((r.v_star - r.v_pi - r.regret_inc).abs() < 1e-12);
        let prefix: f64 = out.records[..=i].iter().map(|r| r.regret_inc).sum();
        assert!((r.cum_regret - prefix).abs() < 1e-9);
    }
}

#[test]
fn exact_values_match_monte_carlo_returns() {
    let env = EnvSpec::Random { d: 3, horizon: 3, num_states: 4, num_actions: 2 };
    for kind in [AgentKind::Oracle, AgentKind::Random] {
        let cfg = ExperimentConfig::new(env.clone(), AgentSpec::new(kind), 20_000, vec![3]);
        let out = run_experiment(&cfg, 3).unwrap();
        let n = out.records.len() as f64;
        let diffs: Vec<f64> = out.records.iter().map(|r| r.ret - r.v_pi).collect();
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() <= 4.0 * sd / n.sqrt() + 1e-12, "{kind:?}: mean {mean} sd {sd}");
    }
}

#[test]
fn build_agent_policies() {
    let mdp = random_mdp(3, 2, 4, 2, 9);
    let mut random = build_agent(&AgentSpec::new(AgentKind::Random), &mdp, 10).unwrap();
    random.begin_episode().unwrap();
    assert_eq!(random.policy(), Policy::Uniform);
    for kind in [AgentKind::Oracle, AgentKind::Ucb, AgentKind::Plus] {
        let mut agent = build_agent(&AgentSpec::new(kind), &mdp, 10).unwrap();
        agent.begin_episode().unwrap();
        match agent.policy() {
            Policy::Deterministic(table) => {
                assert_eq!(table.len(), 2 * 4);
                assert!(table.iter().all(|a| *a < 2));
            }
            Policy::Uniform => panic!("{kind:?} should be deterministic"),
        }
        assert_eq!(agent.name(), kind.as_str());
    }
}

#[test]
fn gram_replay_matches_incremental() {
    let mdp = random_mdp(4, 3, 6, 3, 31);
    let dynamics = Dynamics::from_mdp(&mdp).unwrap();
    let mut agent = LsviPlus::new(&mdp, 50, &AgentSpec::new(AgentKind::Plus)).unwrap();
    play(&mut agent, &dynamics, 50, &mut seeded(32));
    for h in 0..3 {
        let mut g = GramState::new(4, agent.lambda()).unwrap();
        for e in agent.history(h) {
            g.rank1_update(mdp.phi(e.state, e.action), e.sigma_hat.powi(-2)).unwrap();
        }
        assert!(close(agent.gram_hat(h).matrix(), g.matrix(), 1e-10));
        assert!(close(agent.replay_gram_hat(h).unwrap().matrix(), g.matrix(), 1e-10));
    }
}
