//! Finite-state linear MDPs.
//!
//! A model stores the feature table `φ(s,a) ∈ R^d`, one `d×|S|` measure
//! matrix `μ_h` and one reward vector `θ_h` per stage. Transitions and
//! rewards are `P_h(·|s,a) = ⟨φ(s,a), μ_h(·)⟩` and `r_h(s,a) = ⟨φ(s,a), θ_h⟩`.
//!
//! Stages are 0-based throughout the crate: `h ∈ 0..H`, with the terminal
//! value row at index `H`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::{dot, norm2};
use crate::rng::LabRng;
use crate::{Error, Result};

/// Negative transition mass tolerated before a row is rejected.
pub const PROB_CLAMP_TOL: f64 = 1e-12;
/// Deviation of a transition row sum from one tolerated before rejection.
pub const PROB_SUM_TOL: f64 = 1e-9;
/// Slack on the norm and reward-range checks.
const NORM_TOL: f64 = 1e-12;
/// Exact assumption-(ii) verification is used up to this many states.
const EXACT_MEASURE_CHECK_MAX_STATES: usize = 16;
const MEASURE_PROBES: usize = 1000;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStateRule {
    Fixed(usize),
    Uniform,
}

impl Default for InitialStateRule {
    fn default() -> Self {
        InitialStateRule::Fixed(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    dim: usize,
    phi: Vec<f64>,
    mu: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    w_bound: f64,
    initial_state: InitialStateRule,
}

impl LinearMdp {
    /// Builds a model after checking table shapes and finiteness.
    ///
    /// `phi` is indexed `(s, a, j)`, each `mu[h]` is row-major `d×|S|`
    /// (row `j`, column `s'`), and each `theta[h]` has length `d`. Semantic
    /// assumptions are checked separately by [`LinearMdp::validate`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        dim: usize,
        phi: Vec<f64>,
        mu: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
        w_bound: f64,
        initial_state: InitialStateRule,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 || dim == 0 {
            return Err(Error::invalid("S, A, H and d must all be positive"));
        }
        if phi.len() != num_states * num_actions * dim {
            return Err(Error::invalid(format!(
                "phi has {} entries, expected S*A*d = {}",
                phi.len(),
                num_states * num_actions * dim
            )));
        }
        if mu.len() != horizon || theta.len() != horizon {
            return Err(Error::invalid("mu and theta need one entry per stage"));
        }
        if let Some(h) = mu.iter().position(|m| m.len() != dim * num_states) {
            return Err(Error::invalid(format!("mu[{h}] must have d*S = {} entries", dim * num_states)));
        }
        if let Some(h) = theta.iter().position(|t| t.len() != dim) {
            return Err(Error::invalid(format!("theta[{h}] must have d = {dim} entries")));
        }
        let finite = phi.iter().chain(mu.iter().flatten()).chain(theta.iter().flatten()).all(|v| v.is_finite());
        if !finite || !w_bound.is_finite() {
            return Err(Error::invalid("model tables contain non-finite values"));
        }
        if let InitialStateRule::Fixed(s) = initial_state {
            if s >= num_states {
                return Err(Error::invalid(format!("initial state {s} out of range")));
            }
        }
        Ok(Self { num_states, num_actions, horizon, dim, phi, mu, theta, w_bound, initial_state })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn w_bound(&self) -> f64 {
        self.w_bound
    }
    pub fn initial_state_rule(&self) -> InitialStateRule {
        self.initial_state
    }

    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.dim;
        &self.phi[start..start + self.dim]
    }

    /// Full `(s, a, j)` feature table.
    pub fn phi_table(&self) -> &[f64] {
        &self.phi
    }

    /// Row-major `d×|S|` measure matrix of stage `h`.
    pub fn mu(&self, h: usize) -> &[f64] {
        &self.mu[h]
    }

    pub fn theta(&self, h: usize) -> &[f64] {
        &self.theta[h]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        dot(self.phi(s, a), &self.theta[h])
    }

    /// Scales every `θ_h` by `factor`; used to build deliberately invalid models.
    pub fn with_scaled_theta(mut self, factor: f64) -> Self {
        for t in &mut self.theta {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
        self
    }

    fn check_index(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon || s >= self.num_states || a >= self.num_actions {
            return Err(Error::invalid(format!(
                "index (h={h}, s={s}, a={a}) outside H={}, S={}, A={}",
                self.horizon, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    fn raw_transition(&self, h: usize, s: usize, a: usize) -> Vec<f64> {
        let f = self.phi(s, a);
        let mu = &self.mu[h];
        let ns = self.num_states;
        let mut p = vec![0.0; ns];
        for (j, fj) in f.iter().enumerate() {
            if *fj == 0.0 {
                continue;
            }
            let row = &mu[j * ns..(j + 1) * ns];
            for (ps, m) in p.iter_mut().zip(row) {
                *ps += fj * m;
            }
        }
        p
    }

    /// `P_h(·|s,a)`, clamped at zero and renormalised within tolerance.
    pub fn transition_probs(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.check_index(h, s, a)?;
        let mut p = self.raw_transition(h, s, a);
        let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PROB_CLAMP_TOL {
            return Err(Error::ModelInvalid(format!(
                "P_{h}(.|{s},{a}) has negative mass {min:e}"
            )));
        }
        for v in p.iter_mut() {
            *v = v.max(0.0);
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::ModelInvalid(format!("P_{h}(.|{s},{a}) sums to {sum}")));
        }
        for v in p.iter_mut() {
            *v /= sum;
        }
        Ok(p)
    }

    /// Draws `(r_h(s,a), s')` with `s'` sampled by inverse CDF.
    pub fn sample_step(&self, h: usize, s: usize, a: usize, rng: &mut LabRng) -> Result<(f64, usize)> {
        let p = self.transition_probs(h, s, a)?;
        Ok((self.reward(h, s, a), sample_index(&p, rng)))
    }

    pub fn optimal_values(&self) -> Result<ValueTables> {
        Ok(Dynamics::from_mdp(self)?.optimal_values())
    }

    pub fn evaluate_policy(&self, policy: &[usize]) -> Result<ValueTables> {
        Dynamics::from_mdp(self)?.evaluate_policy(policy)
    }

    /// Largest `‖μ_h v‖₂` over `‖v‖∞ ≤ 1`: exact over sign vectors for small
    /// `|S|`, otherwise the larger of a random-probe estimate and nothing more
    /// (see [`LinearMdp::validate`] for the certificate used in that case).
    pub fn max_measure_norm(&self, h: usize) -> f64 {
        let ns = self.num_states;
        if ns <= EXACT_MEASURE_CHECK_MAX_STATES {
            let mut best: f64 = 0.0;
            let mut v = vec![0.0; ns];
            for mask in 0u64..(1u64 << ns) {
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                }
                best = best.max(self.measure_norm(h, &v));
            }
            best
        } else {
            let mut rng = crate::rng::seeded(0x5eed_0002);
            let mut v = vec![0.0; ns];
            let mut best: f64 = 0.0;
            for _ in 0..MEASURE_PROBES {
                for vi in v.iter_mut() {
                    *vi = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
                best = best.max(self.measure_norm(h, &v));
            }
            best
        }
    }

    /// `‖μ_h v‖₂` for an arbitrary `v ∈ R^{|S|}`.
    pub fn measure_norm(&self, h: usize, v: &[f64]) -> f64 {
        let ns = self.num_states;
        let mu = &self.mu[h];
        (0..self.dim)
            .map(|j| dot(&mu[j * ns..(j + 1) * ns], v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Checks assumptions (i)–(iv) and that every transition row is a
    /// probability vector. Violations are reported, never raised.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let d = self.dim as f64;

        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let n = norm2(self.phi(s, a));
                if n > 1.0 + NORM_TOL {
                    report.record(Assumption::FeatureNorm, n - 1.0);
                }
            }
        }

        let ns = self.num_states;
        let cap = d.sqrt();
        for h in 0..self.horizon {
            let certificate = (0..self.dim)
                .map(|j| self.mu[h][j * ns..(j + 1) * ns].iter().map(|m| m.abs()).sum::<f64>().powi(2))
                .sum::<f64>()
                .sqrt();
            if ns > EXACT_MEASURE_CHECK_MAX_STATES && certificate <= cap * (1.0 + NORM_TOL) {
                continue;
            }
            let worst = self.max_measure_norm(h);
            if worst > cap * (1.0 + NORM_TOL) {
                report.record(Assumption::MeasureNorm, worst - cap);
            }
        }

        for h in 0..self.horizon {
            let n = norm2(&self.theta[h]);
            if n > self.w_bound + NORM_TOL {
                report.record(Assumption::ThetaNorm, n - self.w_bound);
            }
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let r = self.reward(h, s, a);
                    let excess = if r < 0.0 { -r } else { r - 1.0 };
                    if excess > NORM_TOL {
                        report.record(Assumption::RewardRange, excess);
                    }
                    let p = self.raw_transition(h, s, a);
                    let neg = p.iter().cloned().fold(0.0f64, |m, v| m.max(-v));
                    let sum_err = (p.iter().sum::<f64>() - 1.0).abs();
                    if neg > PROB_CLAMP_TOL {
                        report.record(Assumption::TransitionDistribution, neg);
                    }
                    if sum_err > PROB_SUM_TOL {
                        report.record(Assumption::TransitionDistribution, sum_err);
                    }
                }
            }
        }
        report
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("model document serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                doc.version
            )));
        }
        let ns = doc.num_states;
        // Document stores mu per stage row-major d×S, same as in memory.
        Self::new(
            ns,
            doc.num_actions,
            doc.horizon,
            doc.d,
            doc.phi,
            doc.mu,
            doc.theta,
            doc.w_bound,
            doc.initial_state_rule,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn to_document(&self) -> ModelDocument {
        ModelDocument {
            version: MODEL_VERSION,
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            d: self.dim,
            phi: self.phi.clone(),
            mu: self.mu.clone(),
            theta: self.theta.clone(),
            w_bound: self.w_bound,
            initial_state_rule: self.initial_state,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    d: usize,
    phi: Vec<f64>,
    mu: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    w_bound: f64,
    initial_state_rule: InitialStateRule,
}

/// The families of model assumptions checked by [`LinearMdp::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    FeatureNorm,
    MeasureNorm,
    ThetaNorm,
    RewardRange,
    TransitionDistribution,
}

impl Assumption {
    pub fn label(&self) -> &'static str {
        match self {
            Assumption::FeatureNorm => "(i) feature norm: ||phi(s,a)||_2 <= 1",
            Assumption::MeasureNorm => "(ii) measure norm: ||mu_h v||_2 <= sqrt(d) for ||v||_inf <= 1",
            Assumption::ThetaNorm => "(iii) reward parameter norm: ||theta_h||_2 <= W",
            Assumption::RewardRange => "(iv) reward range: r_h(s,a) in [0,1]",
            Assumption::TransitionDistribution => "transition rows are probability vectors",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub assumption: Assumption,
    pub max_violation: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn record(&mut self, assumption: Assumption, magnitude: f64) {
        match self.violations.iter_mut().find(|v| v.assumption == assumption) {
            Some(v) => {
                v.count += 1;
                v.max_violation = v.max_violation.max(magnitude);
            }
            None => self.violations.push(Violation { assumption, max_violation: magnitude, count: 1 }),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, assumption: Assumption) -> bool {
        self.violations.iter().any(|v| v.assumption == assumption)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "all assumptions hold");
        }
        for v in &self.violations {
            writeln!(f, "{} violated at {} entries (max violation {:e})", v.assumption.label(), v.count, v.max_violation)?;
        }
        Ok(())
    }
}

pub(crate) fn sample_index(p: &[f64], rng: &mut LabRng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, pi) in p.iter().enumerate() {
        if *pi <= 0.0 {
            continue;
        }
        cum += pi;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

/// Per-stage value and action-value tables. `v` has `H+1` rows, the last
/// one identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    v: Vec<f64>,
    q: Vec<f64>,
}

impl ValueTables {
    fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            v: vec![0.0; (horizon + 1) * num_states],
            q: vec![0.0; horizon * num_states * num_actions],
        }
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.num_states + s]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    /// Value row of stage `h` (length `|S|`); `h = H` is the zero row.
    pub fn v_row(&self, h: usize) -> &[f64] {
        &self.v[h * self.num_states..(h + 1) * self.num_states]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Greedy policy table indexed `h * |S| + s`, ties to the lowest action.
    pub fn greedy_policy(&self) -> Vec<usize> {
        let mut pi = vec![0; self.horizon * self.num_states];
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                pi[h * self.num_states + s] = argmax((0..self.num_actions).map(|a| self.q(h, s, a)));
            }
        }
        pi
    }
}

/// Index of the first maximum.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut idx = 0;
    for (i, v) in values.enumerate() {
        if v > best {
            best = v;
            idx = i;
        }
    }
    idx
}

/// One transition `(s_h, a_h, r_h, s_{h+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// One episode: exactly `H` transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
}

impl Trajectory {
    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|t| t.reward).sum()
    }

    pub fn initial_state(&self) -> usize {
        self.steps[0].state
    }
}

/// Tabulated transition and reward arrays for a validated model.
///
/// Building this once per run removes the `O(d|S|)` feature products from
/// every sampling and dynamic-programming step.
#[derive(Debug, Clone)]
pub struct Dynamics {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
    rewards: Vec<f64>,
    initial_state: InitialStateRule,
}

impl Dynamics {
    pub fn from_mdp(mdp: &LinearMdp) -> Result<Self> {
        let (hz, ns, na) = (mdp.horizon, mdp.num_states, mdp.num_actions);
        let mut probs = Vec::with_capacity(hz * ns * na * ns);
        let mut rewards = Vec::with_capacity(hz * ns * na);
        for h in 0..hz {
            for s in 0..ns {
                for a in 0..na {
                    probs.extend(mdp.transition_probs(h, s, a)?);
                    rewards.push(mdp.reward(h, s, a));
                }
            }
        }
        Ok(Self { horizon: hz, num_states: ns, num_actions: na, probs, rewards, initial_state: mdp.initial_state })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn probs(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = ((h * self.num_states + s) * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn sample_step(&self, h: usize, s: usize, a: usize, rng: &mut LabRng) -> (f64, usize) {
        (self.reward(h, s, a), sample_index(self.probs(h, s, a), rng))
    }

    pub fn sample_initial_state(&self, rng: &mut LabRng) -> usize {
        match self.initial_state {
            InitialStateRule::Fixed(s) => s,
            InitialStateRule::Uniform => rng.random_range(0..self.num_states),
        }
    }

    /// `[P_h V](s,a)`.
    pub fn expectation(&self, h: usize, s: usize, a: usize, v: &[f64]) -> f64 {
        dot(self.probs(h, s, a), v)
    }

    /// `[𝕍_h V](s,a) = P_h V² − (P_h V)²`, floored at zero.
    pub fn variance(&self, h: usize, s: usize, a: usize, v: &[f64]) -> f64 {
        let p = self.probs(h, s, a);
        let m1 = dot(p, v);
        let m2: f64 = p.iter().zip(v).map(|(pi, vi)| pi * vi * vi).sum();
        (m2 - m1 * m1).max(0.0)
    }

    /// Backward induction for `V*` and `Q*`.
    pub fn optimal_values(&self) -> ValueTables {
        let (hz, ns, na) = (self.horizon, self.num_states, self.num_actions);
        let mut t = ValueTables::zeros(hz, ns, na);
        for h in (0..hz).rev() {
            for s in 0..ns {
                let mut best = f64::NEG_INFINITY;
                for a in 0..na {
                    let next = &t.v[(h + 1) * ns..(h + 2) * ns];
                    let q = self.reward(h, s, a) + dot(self.probs(h, s, a), next);
                    t.q[(h * ns + s) * na + a] = q;
                    best = best.max(q);
                }
                t.v[h * ns + s] = best;
            }
        }
        t
    }

    /// Exact `V^π`, `Q^π` for a deterministic policy indexed `h * |S| + s`.
    pub fn evaluate_policy(&self, policy: &[usize]) -> Result<ValueTables> {
        let (hz, ns, na) = (self.horizon, self.num_states, self.num_actions);
        if policy.len() != hz * ns {
            return Err(Error::invalid(format!("policy needs H*S = {} entries, got {}", hz * ns, policy.len())));
        }
        if let Some(bad) = policy.iter().find(|&&a| a >= na) {
            return Err(Error::invalid(format!("policy action {bad} out of range")));
        }
        let mut t = ValueTables::zeros(hz, ns, na);
        for h in (0..hz).rev() {
            for s in 0..ns {
                for a in 0..na {
                    let next = &t.v[(h + 1) * ns..(h + 2) * ns];
                    t.q[(h * ns + s) * na + a] = self.reward(h, s, a) + dot(self.probs(h, s, a), next);
                }
                t.v[h * ns + s] = t.q[(h * ns + s) * na + policy[h * ns + s]];
            }
        }
        Ok(t)
    }

    /// Exact values of the policy that picks actions uniformly at random.
    pub fn evaluate_uniform_policy(&self) -> ValueTables {
        let (hz, ns, na) = (self.horizon, self.num_states, self.num_actions);
        let mut t = ValueTables::zeros(hz, ns, na);
        for h in (0..hz).rev() {
            for s in 0..ns {
                let mut total = 0.0;
                for a in 0..na {
                    let next = &t.v[(h + 1) * ns..(h + 2) * ns];
                    let q = self.reward(h, s, a) + dot(self.probs(h, s, a), next);
                    t.q[(h * ns + s) * na + a] = q;
                    total += q;
                }
                t.v[h * ns + s] = total / na as f64;
            }
        }
        t
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// How the per-stage sign vector `μ̄_h ∈ {−Δ, Δ}^{d−1}` of the hard instance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MuBarMode {
    /// Each entry is `±Δ` with equal probability, drawn per stage.
    #[default]
    Random,
    /// Every entry is `+Δ`.
    AllPositive,
}

/// Parameters of the sparse-reward lower-bound instance.
///
/// `d_minus` is the length of the action sign vectors, so the instance has
/// `2^d_minus` actions and feature dimension `d_minus + 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardInstanceParams {
    pub d_minus: usize,
    pub horizon: usize,
    pub episodes: usize,
}

impl HardInstanceParams {
    pub fn feature_dim(&self) -> usize {
        self.d_minus + 2
    }

    pub fn num_states(&self) -> usize {
        self.horizon + 2
    }

    pub fn num_actions(&self) -> usize {
        1 << self.d_minus
    }

    /// `ι = 1/H`.
    pub fn iota(&self) -> f64 {
        1.0 / self.horizon as f64
    }

    /// `Δ = √(ι/K) / (4√2)`.
    pub fn delta(&self) -> f64 {
        (self.iota() / self.episodes as f64).sqrt() / (4.0 * 2f64.sqrt())
    }

    pub fn alpha(&self) -> f64 {
        (1.0 / (1.0 + self.delta() * self.d_minus as f64)).sqrt()
    }

    pub fn beta(&self) -> f64 {
        (self.delta() / (1.0 + self.delta() * self.d_minus as f64)).sqrt()
    }

    /// Smallest admissible `K`: `max{(d−1)²H/2, (d−1)/(32H(√d−1))}` with
    /// `d` the feature dimension.
    pub fn min_episodes(&self) -> f64 {
        let d = self.feature_dim() as f64;
        let hz = self.horizon as f64;
        let a = (d - 1.0).powi(2) * hz / 2.0;
        let b = (d - 1.0) / (32.0 * hz * (d.sqrt() - 1.0));
        a.max(b)
    }
}

/// Sign vector for hard-instance action `index`: bit `j` set means `+1`.
pub fn hard_action_signs(index: usize, d_minus: usize) -> Vec<f64> {
    (0..d_minus).map(|j| if index >> j & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// Builds the sparse-reward lower-bound instance.
///
/// States `0..H+2` stand for `s_1..s_{H+2}`; `s_{H+2}` (index `H+1`) is the
/// only rewarding state and is absorbing. All other states share the feature
/// `(α, β·a, 0)` and move to the rewarding state with probability
/// `ι + ⟨μ̄_h, a⟩`, otherwise to `s_{H+1}` (index `H`).
pub fn make_hard_instance(
    d_minus: usize,
    horizon: usize,
    episodes: usize,
    mode: MuBarMode,
    rng: &mut LabRng,
) -> Result<LinearMdp> {
    if d_minus == 0 {
        return Err(Error::invalid("hard instance needs d - 1 >= 1 sign coordinates"));
    }
    if d_minus > 16 {
        return Err(Error::invalid("hard instance with more than 2^16 actions is not supported"));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    let params = HardInstanceParams { d_minus, horizon, episodes };
    let k_min = params.min_episodes();
    if (episodes as f64) < k_min {
        return Err(Error::invalid(format!(
            "hard instance needs K >= {} (got K = {episodes})",
            k_min.ceil() as u64
        )));
    }
    let d = params.feature_dim();
    let ns = params.num_states();
    let na = params.num_actions();
    let (iota, delta, alpha, beta) = (params.iota(), params.delta(), params.alpha(), params.beta());

    let mut phi = Vec::with_capacity(ns * na * d);
    for s in 0..ns {
        for a in 0..na {
            if s == horizon + 1 {
                let mut f = vec![0.0; d];
                f[d - 1] = 1.0;
                phi.extend(f);
            } else {
                phi.push(alpha);
                phi.extend(hard_action_signs(a, d_minus).into_iter().map(|x| beta * x));
                phi.push(0.0);
            }
        }
    }

    let fail = horizon;
    let good = horizon + 1;
    let mut mu = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mu_bar: Vec<f64> = (0..d_minus)
            .map(|_| match mode {
                MuBarMode::AllPositive => delta,
                MuBarMode::Random => {
                    if rng.random::<bool>() {
                        delta
                    } else {
                        -delta
                    }
                }
            })
            .collect();
        let mut m = vec![0.0; d * ns];
        m[fail] = (1.0 - iota) / alpha;
        m[good] = iota / alpha;
        for (j, mb) in mu_bar.iter().enumerate() {
            m[(j + 1) * ns + fail] = -mb / beta;
            m[(j + 1) * ns + good] = mb / beta;
        }
        m[(d - 1) * ns + good] = 1.0;
        mu.push(m);
    }

    let mut theta_h = vec![0.0; d];
    theta_h[d - 1] = 1.0;
    let theta = vec![theta_h; horizon];
    LinearMdp::new(ns, na, horizon, d, phi, mu, theta, 1.0, InitialStateRule::Fixed(0))
}

/// `n` weights drawn uniformly from the probability simplex.
fn random_simplex(n: usize, rng: &mut LabRng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Random anchor-feature linear MDP.
///
/// Each stage has `d` anchor distributions over states (the rows of `μ_h`);
/// each feature `φ(s,a)` is a point of the probability simplex over the
/// anchors, so `P_h(·|s,a)` is a mixture of anchors. Rewards use
/// `θ_h ∈ [0,1]^d`, giving `r ∈ [0,1]` and `W = √d`.
pub fn make_random_linear_mdp(
    dim: usize,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    rng: &mut LabRng,
) -> Result<LinearMdp> {
    if dim == 0 || horizon == 0 || num_states == 0 || num_actions == 0 {
        return Err(Error::invalid("d, H, S and A must all be positive"));
    }
    if dim > num_states * num_actions {
        return Err(Error::invalid(format!(
            "d = {dim} exceeds S*A = {}",
            num_states * num_actions
        )));
    }
    let mut phi = Vec::with_capacity(num_states * num_actions * dim);
    for _ in 0..num_states * num_actions {
        phi.extend(random_simplex(dim, rng));
    }
    let mut mu = Vec::with_capacity(horizon);
    let mut theta = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut m = Vec::with_capacity(dim * num_states);
        for _ in 0..dim {
            m.extend(random_simplex(num_states, rng));
        }
        mu.push(m);
        theta.push((0..dim).map(|_| rng.random::<f64>()).collect());
    }
    LinearMdp::new(
        num_states,
        num_actions,
        horizon,
        dim,
        phi,
        mu,
        theta,
        (dim as f64).sqrt(),
        InitialStateRule::Fixed(0),
    )
}

/// Tabular transition and reward arrays: `p` indexed `(h, s, a, s')`,
/// `r` indexed `(h, s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    pub p: Vec<f64>,
    pub r: Vec<f64>,
}

/// One-hot embedding of a tabular MDP: `d = |S||A|`, `φ(s,a) = e_{(s,a)}`.
pub fn make_tabular_embedding(model: &TabularModel) -> Result<LinearMdp> {
    let (hz, ns, na) = (model.horizon, model.num_states, model.num_actions);
    if hz == 0 || ns == 0 || na == 0 {
        return Err(Error::invalid("H, S and A must all be positive"));
    }
    if model.p.len() != hz * ns * na * ns || model.r.len() != hz * ns * na {
        return Err(Error::invalid("tabular arrays have the wrong length"));
    }
    let d = ns * na;
    for (row_idx, row) in model.p.chunks(ns).enumerate() {
        let neg = row.iter().any(|&v| v < -PROB_CLAMP_TOL || !v.is_finite());
        let sum: f64 = row.iter().sum();
        if neg || (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("transition row {row_idx} is not a distribution")));
        }
    }
    if model.r.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
        return Err(Error::invalid("tabular rewards must lie in [0, 1]"));
    }
    let mut phi = vec![0.0; ns * na * d];
    for j in 0..d {
        phi[j * d + j] = 1.0;
    }
    let mut mu = Vec::with_capacity(hz);
    let mut theta = Vec::with_capacity(hz);
    for h in 0..hz {
        let mut m = vec![0.0; d * ns];
        for j in 0..d {
            let row = &model.p[(h * d + j) * ns..(h * d + j + 1) * ns];
            m[j * ns..(j + 1) * ns].copy_from_slice(row);
        }
        mu.push(m);
        theta.push(model.r[h * d..(h + 1) * d].to_vec());
    }
    LinearMdp::new(ns, na, hz, d, phi, mu, theta, (d as f64).sqrt(), InitialStateRule::Fixed(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    /// Deterministic 2-state 2-action chain: action 0 stays, action 1 moves
    /// to the other state; reward 1 for being in state 1.
    fn chain(horizon: usize) -> TabularModel {
        let (ns, na) = (2, 2);
        let mut p = Vec::new();
        let mut r = Vec::new();
        for _ in 0..horizon {
            for s in 0..ns {
                for a in 0..na {
                    let next = if a == 0 { s } else { 1 - s };
                    p.extend((0..ns).map(|t| if t == next { 1.0 } else { 0.0 }));
                    r.push(if s == 1 { 1.0 } else { 0.0 });
                }
            }
        }
        TabularModel { horizon, num_states: ns, num_actions: na, p, r }
    }

    #[test]
    fn tabular_embedding_is_identity_features() {
        let m = make_tabular_embedding(&chain(3)).unwrap();
        assert_eq!(m.dim(), 4);
        for s in 0..2 {
            for a in 0..2 {
                let f = m.phi(s, a);
                for j in 0..4 {
                    assert_eq!(f[j], if j == s * 2 + a { 1.0 } else { 0.0 });
                }
            }
        }
        assert!(m.validate().is_valid());
    }

    #[test]
    fn transition_probs_reproduce_table() {
        let t = chain(2);
        let m = make_tabular_embedding(&t).unwrap();
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    let start = ((h * 2 + s) * 2 + a) * 2;
                    assert_eq!(m.transition_probs(h, s, a).unwrap(), t.p[start..start + 2].to_vec());
                }
            }
        }
        assert!(m.transition_probs(2, 0, 0).is_err());
    }

    #[test]
    fn tabular_embedding_rejects_bad_rows() {
        let mut t = chain(1);
        t.p[0] = 0.7;
        assert!(make_tabular_embedding(&t).is_err());
    }

    #[test]
    fn deterministic_chain_sampling_ignores_rng() {
        let m = make_tabular_embedding(&chain(2)).unwrap();
        let mut rng = seeded(1);
        for _ in 0..50 {
            assert_eq!(m.sample_step(0, 0, 1, &mut rng).unwrap().1, 1);
            assert_eq!(m.sample_step(0, 1, 0, &mut rng).unwrap(), (1.0, 1));
        }
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let mut t = chain(4);
        t.r.iter_mut().for_each(|r| *r = 0.0);
        let v = make_tabular_embedding(&t).unwrap().optimal_values().unwrap();
        for h in 0..=4 {
            for s in 0..2 {
                assert_eq!(v.v(h, s), 0.0);
            }
        }
    }

    #[test]
    fn single_stage_value_is_best_reward() {
        let mut rng = seeded(3);
        let m = make_random_linear_mdp(3, 1, 4, 3, &mut rng).unwrap();
        let v = m.optimal_values().unwrap();
        for s in 0..4 {
            let best = (0..3).map(|a| m.reward(0, s, a)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(v.v(0, s), best);
        }
    }

    #[test]
    fn scaled_theta_is_flagged() {
        let mut rng = seeded(5);
        let m = make_random_linear_mdp(3, 2, 4, 3, &mut rng).unwrap().with_scaled_theta(10.0);
        let report = m.validate();
        assert!(report.violates(Assumption::RewardRange));
        assert!(report.violates(Assumption::ThetaNorm));
        assert!(!report.violates(Assumption::FeatureNorm));
    }

    #[test]
    fn random_mdp_single_anchor() {
        let mut rng = seeded(9);
        let m = make_random_linear_mdp(1, 2, 5, 3, &mut rng).unwrap();
        for h in 0..2 {
            let first = m.transition_probs(h, 0, 0).unwrap();
            for s in 0..5 {
                for a in 0..3 {
                    let p = m.transition_probs(h, s, a).unwrap();
                    for (x, y) in p.iter().zip(&first) {
                        assert!((x - y).abs() < 1e-15);
                    }
                }
            }
        }
        assert!(make_random_linear_mdp(7, 2, 2, 3, &mut rng).is_err());
    }

    #[test]
    fn random_mdp_is_seed_deterministic() {
        let a = make_random_linear_mdp(4, 3, 6, 5, &mut seeded(11)).unwrap();
        let b = make_random_linear_mdp(4, 3, 6, 5, &mut seeded(11)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = make_random_linear_mdp(4, 3, 6, 5, &mut seeded(12)).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn hard_instance_parameters() {
        let p = HardInstanceParams { d_minus: 4, horizon: 10, episodes: 1000 };
        assert_eq!(p.iota(), 0.1);
        assert!((p.delta() - 0.0017677669529663686).abs() < 1e-15);
        let n = (p.alpha().powi(2) + 4.0 * p.beta().powi(2)).sqrt();
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hard_instance_precondition() {
        let mut rng = seeded(0);
        // d = 6 feature dims, H = 6: needs K >= 25*6/2 = 75
        let err = make_hard_instance(4, 6, 74, MuBarMode::Random, &mut rng).unwrap_err();
        assert!(err.to_string().contains("K >= 75"), "{err}");
        assert!(make_hard_instance(4, 6, 75, MuBarMode::Random, &mut rng).is_ok());
    }

    #[test]
    fn hard_instance_transitions() {
        let mut rng = seeded(21);
        let hz = 6;
        let m = make_hard_instance(3, hz, 1000, MuBarMode::AllPositive, &mut rng).unwrap();
        let p = HardInstanceParams { d_minus: 3, horizon: hz, episodes: 1000 };
        assert!(m.validate().is_valid(), "{}", m.validate());
        for h in 0..hz {
            for a in 0..8 {
                let signs = hard_action_signs(a, 3);
                let to_good = p.iota() + signs.iter().sum::<f64>() * p.delta();
                for s in 0..=hz {
                    let probs = m.transition_probs(h, s, a).unwrap();
                    assert!((probs[hz + 1] - to_good).abs() < 1e-12);
                    assert!((probs[hz] - (1.0 - to_good)).abs() < 1e-12);
                }
                let absorbing = m.transition_probs(h, hz + 1, a).unwrap();
                assert!((absorbing[hz + 1] - 1.0).abs() < 1e-12);
            }
        }
        let v = m.optimal_values().unwrap();
        assert!((v.v(0, hz + 1) - hz as f64).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = make_random_linear_mdp(3, 2, 4, 2, &mut seeded(8)).unwrap();
        let back = LinearMdp::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.content_hash(), back.content_hash());
        let bad = m.to_json().replace("\"version\":1", "\"version\":2");
        assert!(matches!(LinearMdp::from_json(&bad), Err(Error::Schema(_))));
    }

    #[test]
    fn uniform_policy_between_bounds() {
        let m = make_random_linear_mdp(3, 4, 5, 3, &mut seeded(2)).unwrap();
        let dynm = Dynamics::from_mdp(&m).unwrap();
        let star = dynm.optimal_values();
        let uni = dynm.evaluate_uniform_policy();
        for h in 0..4 {
            for s in 0..5 {
                assert!(uni.v(h, s) <= star.v(h, s) + 1e-12);
                let mean_q: f64 = (0..3).map(|a| star.q(h, s, a)).sum::<f64>() / 3.0;
                assert!(uni.v(h, s) <= mean_q + 1e-12);
            }
        }
    }
}
