use rand::Rng;

use super::{Agent, AgentMetadata, Policy};
use crate::linmdp::{Dynamics, LinearMdp, Trajectory};
use crate::rng::LabRng;
use crate::Result;

/// Picks actions uniformly at random.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    num_actions: usize,
}

impl RandomAgent {
    pub fn new(mdp: &LinearMdp) -> Self {
        Self { num_actions: mdp.num_actions() }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &'static str {
        "random"
    }

    fn begin_episode(&mut self) -> Result<()> {
        Ok(())
    }

    fn policy(&self) -> Policy {
        Policy::Uniform
    }

    fn act(&mut self, _h: usize, _s: usize, rng: &mut LabRng) -> usize {
        rng.random_range(0..self.num_actions)
    }

    fn end_episode(&mut self, _trajectory: &Trajectory) -> Result<()> {
        Ok(())
    }

    fn metadata(&self) -> AgentMetadata {
        AgentMetadata {
            name: "random".into(),
            bonus_scale: 1.0,
            lambda: None,
            delta: None,
            scale_offsets: false,
            radii: None,
            beta: None,
        }
    }
}

/// Plays the optimal policy of the true model.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    num_states: usize,
    policy: Vec<usize>,
}

impl OracleAgent {
    pub fn new(mdp: &LinearMdp) -> Result<Self> {
        let values = Dynamics::from_mdp(mdp)?.optimal_values();
        Ok(Self { num_states: mdp.num_states(), policy: values.greedy_policy() })
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn begin_episode(&mut self) -> Result<()> {
        Ok(())
    }

    fn policy(&self) -> Policy {
        Policy::Deterministic(self.policy.clone())
    }

    fn act(&mut self, h: usize, s: usize, _rng: &mut LabRng) -> usize {
        self.policy[h * self.num_states + s]
    }

    fn end_episode(&mut self, _trajectory: &Trajectory) -> Result<()> {
        Ok(())
    }

    fn metadata(&self) -> AgentMetadata {
        AgentMetadata {
            name: "oracle".into(),
            bonus_scale: 1.0,
            lambda: None,
            delta: None,
            scale_offsets: false,
            radii: None,
            beta: None,
        }
    }
}
