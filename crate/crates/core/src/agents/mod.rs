//! Episodic agents behind one contract.
//!
//! Each episode the harness calls [`Agent::begin_episode`], reads the
//! deployed [`Policy`], rolls out a trajectory calling [`Agent::act`], and
//! hands the trajectory back through [`Agent::end_episode`].

mod baselines;
mod plus;
mod ucb;

pub use baselines::{OracleAgent, RandomAgent};
pub use plus::{clamped_variance, compute_weights, gap_bound_e, offset_u, HistoryEntry, LsviPlus, Weights};
pub use ucb::LsviUcb;

use serde::{Deserialize, Serialize};

use crate::linmdp::{LinearMdp, Trajectory};
use crate::radii::RadiusSet;
use crate::rng::LabRng;
use crate::{Error, Result};

/// The policy deployed in the current episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// Action table indexed `h * |S| + s`.
    Deterministic(Vec<usize>),
    /// Uniformly random action at every state.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Random,
    Oracle,
    Ucb,
    Plus,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::Oracle => "oracle",
            AgentKind::Ucb => "ucb",
            AgentKind::Plus => "plus",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AgentKind::Random),
            "oracle" => Ok(AgentKind::Oracle),
            "ucb" => Ok(AgentKind::Ucb),
            "plus" => Ok(AgentKind::Plus),
            other => Err(Error::invalid(format!("unknown agent '{other}'"))),
        }
    }
}

fn default_bonus_scale() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.01
}

/// Agent name plus hyperparameters, as stored in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: AgentKind,
    #[serde(default = "default_bonus_scale")]
    pub bonus_scale: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Ridge parameter; `None` selects the agent's default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Also apply `bonus_scale` to the radii inside the variance offsets
    /// and weights (plus agent only).
    #[serde(default)]
    pub scale_offsets: bool,
}

impl AgentSpec {
    pub fn new(name: AgentKind) -> Self {
        Self { name, bonus_scale: 1.0, delta: default_delta(), lambda: None, scale_offsets: false }
    }
}

/// Serialised agent description written into run metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentMetadata {
    pub name: String,
    pub bonus_scale: f64,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub scale_offsets: bool,
    pub radii: Option<RadiusSet>,
    /// Exploration radius used by the baseline, before scaling.
    pub beta: Option<f64>,
}

/// Per-episode telemetry exposed after `end_episode`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub switched: bool,
    pub mean_sigma_hat: Option<f64>,
}

pub trait Agent: Send {
    fn name(&self) -> &'static str;

    /// Plans the policy for the next episode.
    fn begin_episode(&mut self) -> Result<()>;

    fn policy(&self) -> Policy;

    fn act(&mut self, h: usize, s: usize, rng: &mut LabRng) -> usize;

    fn end_episode(&mut self, trajectory: &Trajectory) -> Result<()>;

    fn metadata(&self) -> AgentMetadata;

    fn episode_stats(&self) -> EpisodeStats {
        EpisodeStats::default()
    }

    /// Diagnostics hook for the variance-aware agent.
    fn as_plus(&self) -> Option<&LsviPlus> {
        None
    }
}

/// Features and known rewards handed to learning agents.
#[derive(Debug, Clone)]
pub struct FeatureModel {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    phi: Vec<f64>,
    rewards: Vec<f64>,
}

impl FeatureModel {
    pub fn from_mdp(mdp: &LinearMdp) -> Self {
        let (hz, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
        let mut rewards = Vec::with_capacity(hz * ns * na);
        for h in 0..hz {
            for s in 0..ns {
                for a in 0..na {
                    rewards.push(mdp.reward(h, s, a));
                }
            }
        }
        Self { horizon: hz, num_states: ns, num_actions: na, dim: mdp.dim(), phi: mdp.phi_table().to_vec(), rewards }
    }

    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.dim;
        &self.phi[start..start + self.dim]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[(h * self.num_states + s) * self.num_actions + a]
    }
}

/// Builds an agent for `mdp` planned over `episodes` episodes.
pub fn build_agent(spec: &AgentSpec, mdp: &LinearMdp, episodes: usize) -> Result<Box<dyn Agent>> {
    if !(spec.bonus_scale > 0.0) || !spec.bonus_scale.is_finite() {
        return Err(Error::invalid(format!("bonus_scale must be positive, got {}", spec.bonus_scale)));
    }
    if !(spec.delta > 0.0 && spec.delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {}", spec.delta)));
    }
    Ok(match spec.name {
        AgentKind::Random => Box::new(RandomAgent::new(mdp)),
        AgentKind::Oracle => Box::new(OracleAgent::new(mdp)?),
        AgentKind::Ucb => Box::new(LsviUcb::new(mdp, episodes, spec)?),
        AgentKind::Plus => Box::new(LsviPlus::new(mdp, episodes, spec)?),
    })
}
