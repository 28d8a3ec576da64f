use super::{Agent, AgentMetadata, AgentSpec, FeatureModel, Policy};
use crate::linalg::{dot, GramState};
use crate::linmdp::{argmax, LinearMdp, Trajectory};
use crate::radii::hoeffding_radius;
use crate::rng::LabRng;
use crate::Result;

const DEFAULT_LAMBDA: f64 = 1.0;

/// Least-squares value iteration with a Hoeffding-style bonus, replanned
/// every episode.
///
/// `Q_h = clamp(r_h + ⟨ω_h, φ⟩ + β‖φ‖_{Λ_h⁻¹}, 0, H)` with unweighted Gram
/// `Λ_h = λI + Σ φ_i φ_iᵀ` and `ω_h = Λ_h⁻¹ Σ φ_i V_{h+1}(s'_i)`.
#[derive(Debug, Clone)]
pub struct LsviUcb {
    model: FeatureModel,
    lambda: f64,
    delta: f64,
    bonus_scale: f64,
    beta: f64,
    grams: Vec<GramState>,
    /// Per stage, `|S|×d` sums of features grouped by next state.
    next_state_acc: Vec<Vec<f64>>,
    history: Vec<Vec<(usize, usize, usize)>>,
    q: Vec<f64>,
    v: Vec<f64>,
    policy: Vec<usize>,
}

impl LsviUcb {
    pub fn new(mdp: &LinearMdp, episodes: usize, spec: &AgentSpec) -> Result<Self> {
        let model = FeatureModel::from_mdp(mdp);
        let lambda = spec.lambda.unwrap_or(DEFAULT_LAMBDA);
        let (hz, ns, na, d) = (model.horizon, model.num_states, model.num_actions, model.dim);
        // Value targets lie in [0, H]; one confidence level per stage.
        let beta = hoeffding_radius(hz as f64, d, 1.0, lambda, episodes.max(1), spec.delta / hz as f64)?;
        let grams = (0..hz).map(|_| GramState::new(d, lambda)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lambda,
            delta: spec.delta,
            bonus_scale: spec.bonus_scale,
            beta,
            grams,
            next_state_acc: vec![vec![0.0; ns * d]; hz],
            history: vec![Vec::new(); hz],
            q: vec![0.0; hz * ns * na],
            v: vec![0.0; (hz + 1) * ns],
            policy: vec![0; hz * ns],
            model,
        })
    }

    /// Unscaled exploration radius `β`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `Λ_h⁻¹ Σ_i φ_i v(s'_i)` from the grouped accumulators.
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
        self.grams[h].solve(&acc)
    }

    /// `(s, a, s')` samples collected at stage `h`.
    pub fn history(&self, h: usize) -> &[(usize, usize, usize)] {
        &self.history[h]
    }

    pub fn gram(&self, h: usize) -> &GramState {
        &self.grams[h]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.model.num_states + s) * self.model.num_actions + a]
    }

    pub fn v_row(&self, h: usize) -> &[f64] {
        let ns = self.model.num_states;
        &self.v[h * ns..(h + 1) * ns]
    }
}

impl Agent for LsviUcb {
    fn name(&self) -> &'static str {
        "ucb"
    }

    fn begin_episode(&mut self) -> Result<()> {
        let (hz, ns, na) = (self.model.horizon, self.model.num_states, self.model.num_actions);
        let cap = hz as f64;
        let bonus = self.beta * self.bonus_scale;
        for h in (0..hz).rev() {
            let next = self.v[(h + 1) * ns..(h + 2) * ns].to_vec();
            let w = self.regression_weights(h, &next)?;
            for s in 0..ns {
                for a in 0..na {
                    let f = self.model.phi(s, a);
                    let pot = self.grams[h].potential_unchecked(f);
                    let q = self.model.reward(h, s, a) + dot(&w, f) + bonus * pot;
                    self.q[(h * ns + s) * na + a] = q.clamp(0.0, cap);
                }
                let row = &self.q[(h * ns + s) * na..(h * ns + s + 1) * na];
                let best = argmax(row.iter().copied());
                self.policy[h * ns + s] = best;
                self.v[h * ns + s] = row[best];
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
        let d = self.model.dim;
        for (h, step) in trajectory.steps.iter().enumerate() {
            let f = self.model.phi(step.state, step.action).to_vec();
            self.grams[h].rank1_update(&f, 1.0)?;
            let acc = &mut self.next_state_acc[h][step.next_state * d..(step.next_state + 1) * d];
            for (c, x) in acc.iter_mut().zip(&f) {
                *c += x;
            }
            self.history[h].push((step.state, step.action, step.next_state));
        }
        Ok(())
    }

    fn metadata(&self) -> AgentMetadata {
        AgentMetadata {
            name: "ucb".into(),
            bonus_scale: self.bonus_scale,
            lambda: Some(self.lambda),
            delta: Some(self.delta),
            scale_offsets: false,
            radii: None,
            beta: Some(self.beta),
        }
    }
}
