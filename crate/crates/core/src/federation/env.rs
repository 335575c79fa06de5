//! Single-cluster federated learning as a DQN environment.

use crate::config::SimConfig;
use crate::dqn::{Action, Environment, MdpState, Transition};
use crate::error::Result;
use crate::rng::{indexed_substream, Stream};
use crate::scenario::Scenario;

use super::cluster::{Curator, RoundOutcome, World};

/// Each episode restarts the cluster from `w_0` with a fresh ledger, queue
/// and a channel drawn from its stationary law. One step is one local round.
pub struct ClusterEnv<'a> {
    scenario: &'a Scenario,
    cfg: &'a SimConfig,
    cluster_id: usize,
    members: Vec<usize>,
    budget_share: f64,
    world: World,
    curator: Option<Curator>,
    episodes: u64,
    steps: usize,
    last: Option<RoundOutcome>,
}

impl<'a> ClusterEnv<'a> {
    pub fn new(scenario: &'a Scenario, cfg: &'a SimConfig, cluster_id: usize, members: Vec<usize>, budget_share: f64) -> Self {
        Self {
            scenario,
            cfg,
            cluster_id,
            members,
            budget_share,
            world: World::new(scenario, 1 + cluster_id as u64),
            curator: None,
            episodes: 0,
            steps: 0,
            last: None,
        }
    }

    /// Outcome of the most recent step.
    pub fn last_outcome(&self) -> Option<&RoundOutcome> {
        self.last.as_ref()
    }

    pub fn curator(&self) -> Option<&Curator> {
        self.curator.as_ref()
    }

    fn stream_index(&self) -> u64 {
        (1 + self.cluster_id as u64) << 32 | self.episodes
    }

    fn out_of_budget(&self, curator: &Curator) -> Result<bool> {
        Ok(curator.budget_fit(1, self.cfg)?.is_none())
    }
}

impl Environment for ClusterEnv<'_> {
    fn reset(&mut self) -> Result<MdpState> {
        self.world.nodes.clone_from(&self.scenario.nodes);
        self.world.twins.clone_from(&self.scenario.twins);
        let channel_rng = indexed_substream(self.scenario.config.seed, Stream::Channel, self.stream_index());
        self.episodes += 1;
        self.steps = 0;
        self.last = None;
        let curator = Curator::new(
            self.cluster_id,
            self.members.clone(),
            self.scenario.initial_params.clone(),
            &self.world,
            self.cfg,
            self.budget_share,
            channel_rng,
        )?;
        let state = curator.observe(self.cfg)?;
        self.curator = Some(curator);
        Ok(state)
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        if self.curator.is_none() {
            self.reset()?;
        }
        let cfg = self.cfg;
        let curator = self.curator.as_mut().expect("reset above");
        let a = curator.budget_fit(action.0, cfg)?.unwrap_or(1);
        let outcome = curator.local_round(a, &mut self.world, cfg, self.steps)?;
        self.steps += 1;
        let curator = self.curator.as_ref().expect("present");
        let terminal = self.steps >= cfg.episode_len() || self.out_of_budget(curator)?;
        let next_state = curator.observe(cfg)?;
        let reward = outcome.reward;
        self.last = Some(outcome);
        Ok(Transition {
            reward,
            next_state,
            terminal,
        })
    }

    fn state_dim(&self) -> usize {
        crate::dqn::state_dim(self.members.len(), self.cfg.dqn.a_max, self.cfg.env.observe_channel)
    }
}
