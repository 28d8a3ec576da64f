//! Variance-aware rare-switching value iteration.
//!
//! Per stage the agent keeps two weighted Gram matrices: `Λ̂` (weights
//! `σ̂⁻²`, used for regression and bonuses) and `Λ̃` (weights `σ̃⁻²`, used
//! only for the gate that decides the variance floor `ς`). The transition
//! estimate `μ̂_h` is never materialised; for any value vector `V`,
//! `μ̂_h V = Λ̂_h⁻¹ Σ_{s'} c_h(s') V(s')` where `c_h(s') = Σ_{i: s'_i = s'} σ̂_i⁻² φ_i`.
//!
//! The optimistic table `Q̂` is recomputed only in episodes where the
//! log-determinant of some `Λ̂_h` has grown by `ln 2` since the last
//! recomputation, and is then combined with its previous value by an
//! elementwise minimum. The pessimistic table `Q̌` is rebuilt every episode.

use std::f64::consts::LN_2;

use super::{Agent, AgentMetadata, AgentSpec, EpisodeStats, FeatureModel, Policy};
use crate::linalg::{dot, GramState};
use crate::linmdp::{argmax, LinearMdp, Trajectory};
use crate::radii::{compute_radius_set, RadiusConfig, RadiusSet};
use crate::rng::LabRng;
use crate::Result;

/// Variance estimate `clamp(second − first², 0, H²)` from raw first and
/// second moment predictions, each clamped to its range first.
pub fn clamped_variance(first: f64, second: f64, horizon: f64) -> f64 {
    let h2 = horizon * horizon;
    let m1 = first.clamp(0.0, horizon);
    let m2 = second.clamp(0.0, h2);
    (m2 - m1 * m1).clamp(0.0, h2)
}

/// Offset `U = min{β̃·p + 4H(|g| + β̄·p + β̌·p), 2H²}` where `p` is the
/// elliptical potential under `Λ̂` and `g = ⟨μ̂(V̂ − V̌), φ⟩`.
pub fn offset_u(radii: &RadiusSet, potential: f64, gap: f64, horizon: f64) -> f64 {
    let inner = radii.beta_tilde * potential
        + 4.0 * horizon * (gap.abs() + (radii.beta_bar + radii.beta_check) * potential);
    inner.min(2.0 * horizon * horizon)
}

/// Gap bound `E = min{H·max(0, g + β̄·p + β̌·p + H√λ/K), H²}`.
pub fn gap_bound_e(radii: &RadiusSet, potential: f64, gap: f64, horizon: f64, lambda: f64, episodes: usize) -> f64 {
    let slack = horizon * lambda.sqrt() / episodes.max(1) as f64;
    let bracket = (gap + (radii.beta_bar + radii.beta_check) * potential + slack).max(0.0);
    (horizon * bracket).min(horizon * horizon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub sigma_tilde: f64,
    pub varsigma: f64,
    pub sigma_hat: f64,
    /// Whether `‖σ̃⁻¹φ‖_{Λ̃⁻¹} ≤ 1/(H³d⁵)` held, keeping `ς = √H`.
    pub gate_passed: bool,
}

/// Regression weights for one sample.
///
/// `potential_tilde` is `‖φ‖_{Λ̃⁻¹}` before the sample is added.
pub fn compute_weights(variance: f64, u: f64, e: f64, potential_tilde: f64, horizon: f64, d: usize) -> Weights {
    let d3 = (d as f64).powi(3);
    let d5 = (d as f64).powi(5);
    let var_term = variance + u;
    let sigma_tilde = horizon.max(horizon * d3 * e).max(var_term).sqrt();
    let gate_passed = potential_tilde / sigma_tilde <= 1.0 / (horizon.powi(3) * d5);
    let varsigma = if gate_passed { horizon.sqrt() } else { horizon * horizon * d5.sqrt() };
    let sigma_hat = (varsigma * varsigma).max(d3 * horizon * e).max(var_term).sqrt();
    Weights { sigma_tilde, varsigma, sigma_hat, gate_passed }
}

/// One regression sample at a stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub sigma_hat: f64,
    pub sigma_tilde: f64,
}

#[derive(Debug, Clone)]
pub struct LsviPlus {
    model: FeatureModel,
    episodes: usize,
    lambda: f64,
    delta: f64,
    bonus_scale: f64,
    scale_offsets: bool,
    radii: RadiusSet,
    /// Radii entering `U`, `E` and the weights.
    offset_radii: RadiusSet,
    gram_hat: Vec<GramState>,
    gram_tilde: Vec<GramState>,
    next_state_acc: Vec<Vec<f64>>,
    history: Vec<Vec<HistoryEntry>>,
    q_hat: Vec<f64>,
    v_hat: Vec<f64>,
    v_check: Vec<f64>,
    w_hat: Vec<Vec<f64>>,
    w_check: Vec<Vec<f64>>,
    w_sq: Vec<Vec<f64>>,
    policy: Vec<usize>,
    log_det_at_switch: Vec<f64>,
    episode: usize,
    last_switch: usize,
    switches: usize,
    switched_now: bool,
    last_sigma_hat: Vec<f64>,
}

impl LsviPlus {
    pub fn new(mdp: &LinearMdp, episodes: usize, spec: &AgentSpec) -> Result<Self> {
        let model = FeatureModel::from_mdp(mdp);
        let (hz, ns, na, d) = (model.horizon, model.num_states, model.num_actions, model.dim);
        let mut cfg = RadiusConfig::new(d, hz, episodes.max(1), mdp.w_bound(), spec.delta);
        if let Some(l) = spec.lambda {
            cfg.lambda = l;
        }
        cfg.bonus_scale = spec.bonus_scale;
        let radii = compute_radius_set(&cfg)?;
        let mut offset_radii = radii;
        if spec.scale_offsets {
            offset_radii.beta_tilde *= spec.bonus_scale;
            offset_radii.beta_bar *= spec.bonus_scale;
            offset_radii.beta_check *= spec.bonus_scale;
        }
        let gram_hat = (0..hz).map(|_| GramState::new(d, cfg.lambda)).collect::<Result<Vec<_>>>()?;
        let gram_tilde = gram_hat.clone();
        let log_det_at_switch = gram_hat.iter().map(|g| g.log_det()).collect();
        Ok(Self {
            episodes: episodes.max(1),
            lambda: cfg.lambda,
            delta: spec.delta,
            bonus_scale: spec.bonus_scale,
            scale_offsets: spec.scale_offsets,
            radii,
            offset_radii,
            gram_hat,
            gram_tilde,
            next_state_acc: vec![vec![0.0; ns * d]; hz],
            history: vec![Vec::new(); hz],
            q_hat: vec![hz as f64; hz * ns * na],
            v_hat: vec![0.0; (hz + 1) * ns],
            v_check: vec![0.0; (hz + 1) * ns],
            w_hat: vec![vec![0.0; d]; hz],
            w_check: vec![vec![0.0; d]; hz],
            w_sq: vec![vec![0.0; d]; hz],
            policy: vec![0; hz * ns],
            log_det_at_switch,
            episode: 0,
            last_switch: 0,
            switches: 0,
            switched_now: false,
            last_sigma_hat: Vec::new(),
            model,
        })
    }

    pub fn radii(&self) -> &RadiusSet {
        &self.radii
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of episodes in which `Q̂` was recomputed.
    pub fn switch_count(&self) -> usize {
        self.switches
    }

    /// Episode index (1-based) of the last recomputation.
    pub fn last_switch(&self) -> usize {
        self.last_switch
    }

    pub fn gram_hat(&self, h: usize) -> &GramState {
        &self.gram_hat[h]
    }

    pub fn gram_tilde(&self, h: usize) -> &GramState {
        &self.gram_tilde[h]
    }

    pub fn history(&self, h: usize) -> &[HistoryEntry] {
        &self.history[h]
    }

    pub fn q_hat(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q_hat[(h * self.model.num_states + s) * self.model.num_actions + a]
    }

    /// Optimistic values of stage `h` for the current episode (`h = H` is zero).
    pub fn v_hat(&self, h: usize) -> &[f64] {
        let ns = self.model.num_states;
        &self.v_hat[h * ns..(h + 1) * ns]
    }

    /// Pessimistic values of stage `h` for the current episode.
    pub fn v_check(&self, h: usize) -> &[f64] {
        let ns = self.model.num_states;
        &self.v_check[h * ns..(h + 1) * ns]
    }

    /// `σ̂` of each stage in the last completed episode.
    pub fn last_sigma_hat(&self) -> &[f64] {
        &self.last_sigma_hat
    }

    /// `μ̂_h v = Λ̂_h⁻¹ Σ_{s'} c_h(s') v(s')`.
    pub fn regression_weights(&self, h: usize, v_next: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.dim;
        let mut acc = vec![0.0; d];
        for (s, vs) in v_next.iter().enumerate() {
            if *vs == 0.0 {
                continue;
            }
            for (a, c) in acc.iter_mut().zip(&self.next_state_acc[h][s * d..(s + 1) * d]) {
                *a += c * vs;
            }
        }
        self.gram_hat[h].solve(&acc)
    }

    /// Rebuilds `Λ̂_h` from the stored history.
    pub fn replay_gram_hat(&self, h: usize) -> Result<GramState> {
        let mut g = GramState::new(self.model.dim, self.lambda)?;
        for e in &self.history[h] {
            g.rank1_update(self.model.phi(e.state, e.action), e.sigma_hat.powi(-2))?;
        }
        Ok(g)
    }

    /// `Σ_i σ̂_i⁻² φ_i v(s'_i)` summed sample by sample.
    pub fn replay_target(&self, h: usize, v_next: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.model.dim];
        for e in &self.history[h] {
            let w = e.sigma_hat.powi(-2) * v_next[e.next_state];
            for (a, x) in acc.iter_mut().zip(self.model.phi(e.state, e.action)) {
                *a += w * x;
            }
        }
        acc
    }

    /// `Σ_{s'} c_h(s') v(s')` from the grouped accumulators.
    pub fn grouped_target(&self, h: usize, v_next: &[f64]) -> Vec<f64> {
        let d = self.model.dim;
        let mut acc = vec![0.0; d];
        for (s, vs) in v_next.iter().enumerate() {
            for (a, c) in acc.iter_mut().zip(&self.next_state_acc[h][s * d..(s + 1) * d]) {
                *a += c * vs;
            }
        }
        acc
    }

    fn should_switch(&self) -> bool {
        self.episode == 1
            || self
                .gram_hat
                .iter()
                .zip(&self.log_det_at_switch)
                .any(|(g, &at)| g.log_det() >= at + LN_2)
    }

    /// Variance, `U` and `E` at `(h, s, a)` under the current tables.
    pub fn offsets(&self, h: usize, s: usize, a: usize) -> (f64, f64, f64) {
        let hz = self.model.horizon as f64;
        let f = self.model.phi(s, a);
        let pot = self.gram_hat[h].potential_unchecked(f);
        let var = clamped_variance(dot(&self.w_hat[h], f), dot(&self.w_sq[h], f), hz);
        let gap = dot(&self.w_hat[h], f) - dot(&self.w_check[h], f);
        let u = offset_u(&self.offset_radii, pot, gap, hz);
        let e = gap_bound_e(&self.offset_radii, pot, gap, hz, self.lambda, self.episodes);
        (var, u, e)
    }
}

impl Agent for LsviPlus {
    fn name(&self) -> &'static str {
        "plus"
    }

    fn begin_episode(&mut self) -> Result<()> {
        self.episode += 1;
        let switch = self.should_switch();
        let (hz, ns, na) = (self.model.horizon, self.model.num_states, self.model.num_actions);
        let cap = hz as f64;
        let bonus_hat = self.radii.beta_hat * self.bonus_scale;
        let bonus_check = self.radii.beta_check * self.bonus_scale;

        for h in (0..hz).rev() {
            let next_hat = self.v_hat[(h + 1) * ns..(h + 2) * ns].to_vec();
            let next_check = self.v_check[(h + 1) * ns..(h + 2) * ns].to_vec();
            let next_sq: Vec<f64> = next_hat.iter().map(|v| v * v).collect();
            let w_hat = self.regression_weights(h, &next_hat)?;
            let w_check = self.regression_weights(h, &next_check)?;
            let w_sq = self.regression_weights(h, &next_sq)?;

            for s in 0..ns {
                let mut best_check = f64::NEG_INFINITY;
                for a in 0..na {
                    let f = self.model.phi(s, a);
                    let pot = self.gram_hat[h].potential_unchecked(f);
                    let r = self.model.reward(h, s, a);
                    let idx = (h * ns + s) * na + a;
                    if switch {
                        let fresh = r + dot(&w_hat, f) + bonus_hat * pot;
                        self.q_hat[idx] = fresh.min(self.q_hat[idx]).min(cap).max(0.0);
                    }
                    best_check = best_check.max(r + dot(&w_check, f) - bonus_check * pot);
                }
                let row = &self.q_hat[(h * ns + s) * na..(h * ns + s + 1) * na];
                let best = argmax(row.iter().copied());
                self.policy[h * ns + s] = best;
                self.v_hat[h * ns + s] = row[best];
                self.v_check[h * ns + s] = best_check.clamp(0.0, cap);
            }
            self.w_hat[h] = w_hat;
            self.w_check[h] = w_check;
            self.w_sq[h] = w_sq;
        }

        self.switched_now = switch;
        if switch {
            self.switches += 1;
            self.last_switch = self.episode;
            for (snap, g) in self.log_det_at_switch.iter_mut().zip(&self.gram_hat) {
                *snap = g.log_det();
            }
        }
        Ok(())
    }

    fn policy(&self) -> Policy {
        Policy::Deterministic(self.policy.clone())
    }

    fn act(&mut self, h: usize, s: usize, _rng: &mut LabRng) -> usize {
        self.policy[h * self.model.num_states + s]
    }

    fn end_episode(&mut self, trajectory: &Trajectory) -> Result<()> {
        let hz = self.model.horizon as f64;
        let d = self.model.dim;
        self.last_sigma_hat.clear();
        for (h, step) in trajectory.steps.iter().enumerate() {
            let (var, u, e) = self.offsets(h, step.state, step.action);
            let f = self.model.phi(step.state, step.action).to_vec();
            let pot_tilde = self.gram_tilde[h].potential_unchecked(&f);
            let w = compute_weights(var, u, e, pot_tilde, hz, d);
            self.gram_tilde[h].rank1_update(&f, w.sigma_tilde.powi(-2))?;
            let weight = w.sigma_hat.powi(-2);
            self.gram_hat[h].rank1_update(&f, weight)?;
            let acc = &mut self.next_state_acc[h][step.next_state * d..(step.next_state + 1) * d];
            for (c, x) in acc.iter_mut().zip(&f) {
                *c += weight * x;
            }
            self.history[h].push(HistoryEntry {
                state: step.state,
                action: step.action,
                next_state: step.next_state,
                sigma_hat: w.sigma_hat,
                sigma_tilde: w.sigma_tilde,
            });
            self.last_sigma_hat.push(w.sigma_hat);
        }
        Ok(())
    }

    fn metadata(&self) -> AgentMetadata {
        AgentMetadata {
            name: "plus".into(),
            bonus_scale: self.bonus_scale,
            lambda: Some(self.lambda),
            delta: Some(self.delta),
            scale_offsets: self.scale_offsets,
            radii: Some(self.radii),
            beta: None,
        }
    }

    fn episode_stats(&self) -> EpisodeStats {
        let mean = if self.last_sigma_hat.is_empty() {
            None
        } else {
            Some(self.last_sigma_hat.iter().sum::<f64>() / self.last_sigma_hat.len() as f64)
        };
        EpisodeStats { switched: self.switched_now, mean_sigma_hat: mean }
    }

    fn as_plus(&self) -> Option<&LsviPlus> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;
    use crate::linmdp::{make_random_linear_mdp, make_tabular_embedding, TabularModel, Transition};
    use crate::rng::seeded;

    fn radii() -> RadiusSet {
        compute_radius_set(&RadiusConfig::new(4, 5, 200, 2.0, 0.01)).unwrap()
    }

    #[test]
    fn variance_of_empty_history_is_zero() {
        assert_eq!(clamped_variance(0.0, 0.0, 5.0), 0.0);
        // constant value c: second = c², first = c
        assert_eq!(clamped_variance(3.0, 9.0, 5.0), 0.0);
        assert_eq!(clamped_variance(7.0, 100.0, 5.0), 0.0);
        assert_eq!(clamped_variance(1.0, 4.0, 5.0), 3.0);
    }

    #[test]
    fn offsets_without_gap() {
        let r = radii();
        let hz = 5.0;
        let lam: f64 = 1.0 / 50.0;
        let pot = 1e-6;
        assert!((offset_u(&r, pot, 0.0, hz) - (r.beta_tilde + 4.0 * hz * (r.beta_bar + r.beta_check)) * pot).abs() < 1e-12);
        // fresh Gram with unit feature: theoretical radii saturate both caps
        let pot0 = 1.0 / lam.sqrt();
        assert_eq!(offset_u(&r, pot0, 0.0, hz), 2.0 * hz * hz);
        assert_eq!(gap_bound_e(&r, pot0, 0.0, hz, lam, 200), hz * hz);
        let e0 = gap_bound_e(&r, 0.0, 0.0, hz, lam, 200);
        assert!((e0 - hz * hz * lam.sqrt() / 200.0).abs() < 1e-15);
        assert_eq!(gap_bound_e(&r, 0.0, -10.0, hz, lam, 200), 0.0);
        assert!(offset_u(&r, 0.5 * pot, 0.0, hz) <= offset_u(&r, pot, 0.0, hz));
    }

    #[test]
    fn weight_floors() {
        let w = compute_weights(0.0, 0.0, 0.0, 0.0, 4.0, 3);
        assert!(w.gate_passed);
        assert_eq!(w.sigma_tilde, 2.0);
        assert_eq!(w.sigma_hat, 2.0);
        let w = compute_weights(0.0, 0.0, 0.0, 1.0, 4.0, 3);
        assert!(!w.gate_passed);
        assert!(w.sigma_hat >= 16.0 * 243f64.sqrt());
        assert!(w.sigma_hat >= 2.0);
    }

    fn bandit() -> LinearMdp {
        // H = 1, two states, three actions with different rewards.
        let p = vec![0.5; 2 * 3 * 2];
        let r = vec![0.2, 0.9, 0.4, 0.1, 0.3, 0.8];
        make_tabular_embedding(&TabularModel { horizon: 1, num_states: 2, num_actions: 3, p, r }).unwrap()
    }

    #[test]
    fn first_episode_saturates_and_ties_to_zero() {
        let mdp = bandit();
        let mut agent = LsviPlus::new(&mdp, 100, &AgentSpec::new(AgentKind::Plus)).unwrap();
        agent.begin_episode().unwrap();
        for s in 0..2 {
            for a in 0..3 {
                assert_eq!(agent.q_hat(0, s, a), 1.0);
            }
            assert_eq!(agent.act(0, s, &mut seeded(0)), 0);
        }
        assert_eq!(agent.switch_count(), 1);
    }

    #[test]
    fn small_scale_follows_reward() {
        let mdp = bandit();
        let mut spec = AgentSpec::new(AgentKind::Plus);
        spec.bonus_scale = 1e-9;
        let mut agent = LsviPlus::new(&mdp, 100, &spec).unwrap();
        agent.begin_episode().unwrap();
        assert_eq!(agent.act(0, 0, &mut seeded(0)), 1);
        assert_eq!(agent.act(0, 1, &mut seeded(0)), 2);
    }

    #[test]
    fn accumulators_match_history() {
        let mdp = make_random_linear_mdp(3, 3, 4, 3, &mut seeded(4)).unwrap();
        let mut spec = AgentSpec::new(AgentKind::Plus);
        spec.bonus_scale = 0.01;
        spec.scale_offsets = true;
        let mut agent = LsviPlus::new(&mdp, 30, &spec).unwrap();
        let mut rng = seeded(5);
        let dynm = crate::linmdp::Dynamics::from_mdp(&mdp).unwrap();
        for _ in 0..30 {
            agent.begin_episode().unwrap();
            let mut s = 0;
            let mut steps = Vec::new();
            for h in 0..3 {
                let a = agent.act(h, s, &mut rng);
                let (r, next) = dynm.sample_step(h, s, a, &mut rng);
                steps.push(Transition { state: s, action: a, reward: r, next_state: next });
                s = next;
            }
            agent.end_episode(&crate::linmdp::Trajectory { steps }).unwrap();
        }
        let v = [0.3, 1.7, 2.2, 0.0];
        for h in 0..3 {
            let a = agent.grouped_target(h, &v);
            let b = agent.replay_target(h, &v);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
            }
            let replay = agent.replay_gram_hat(h).unwrap();
            for (x, y) in replay.matrix().iter().zip(agent.gram_hat(h).matrix()) {
                assert!((x - y).abs() < 1e-8);
            }
            assert!(agent.history(h).iter().all(|e| e.sigma_hat >= 3f64.sqrt()));
        }
    }
}
