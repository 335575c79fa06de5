//! A cluster curator: runs one local aggregation round over its members and
//! keeps the reputation ledger, deficit queue and channel process.

use std::collections::BTreeMap;

use crate::budget::{self, DeficitQueue, PenaltyWeights};
use crate::config::{QualityMode, SimConfig};
use crate::dqn::{self, Action, MdpState, Observation};
use crate::energy::{self, ChannelKind, ChannelState, EnergyModel};
use crate::error::Result;
use crate::mlp::ModelParams;
use crate::rng::SimRng;
use crate::scenario::{calibrate_twin, DeviceNode, DigitalTwin, Scenario};
use crate::trainer;
use crate::trust::{self, ReputationRecord, Upload};

/// Mutable device-side state of a run.
#[derive(Debug, Clone)]
pub struct World {
    pub nodes: Vec<DeviceNode>,
    pub twins: Vec<DigitalTwin>,
    pub train_rngs: Vec<SimRng>,
}

impl World {
    /// Fresh copy of the scenario's devices. `stream` picks the training
    /// substreams so that separate worlds built from one seed stay independent.
    pub fn new(scenario: &Scenario, stream: u64) -> Self {
        let n = scenario.nodes.len() as u64;
        Self {
            nodes: scenario.nodes.clone(),
            twins: scenario.twins.clone(),
            train_rngs: (0..n)
                .map(|i| crate::rng::indexed_substream(scenario.config.seed, crate::rng::Stream::Training, stream * n + i))
                .collect(),
        }
    }
}

/// Energy model of one node given the configured per-sample cycle count.
pub fn energy_model(node: &DeviceNode, cfg: &SimConfig) -> EnergyModel {
    EnergyModel {
        cycles_per_training: cfg.energy.cycles_per_sample * node.shard.size() as f64,
        n_cmp: cfg.energy.n_cmp,
        n_com: cfg.energy.n_com,
        model_bits: cfg.energy.model_bits,
    }
}

/// CPU frequency the curator believes a node has.
pub fn view_frequency(twin: &DigitalTwin, calibrated: bool) -> f64 {
    if calibrated {
        calibrate_twin(twin)
    } else {
        twin.mapped_cpu_freq
    }
}

/// Reputation ledger entry produced by a round.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub node: usize,
    pub alpha: f64,
    pub beta: f64,
    pub belief: f64,
    pub failure_prob: f64,
    pub quality: f64,
    pub reputation: f64,
}

/// Everything a local round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub a: usize,
    pub reward: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    /// Curator-view computation energy of one pass, summed over members.
    pub e_cmp: f64,
    /// Upload energy, summed over members.
    pub e_com: f64,
    /// Energy actually drawn by the devices.
    pub true_energy: f64,
    pub channel: ChannelKind,
    pub failure_prob: f64,
    pub queue_before: f64,
    pub queue_after: f64,
    pub consumed: f64,
    pub ledger: Vec<LedgerEntry>,
}

impl RoundOutcome {
    /// Accounted consumption `a * e_cmp + e_com`.
    pub fn consumption(&self) -> f64 {
        self.a as f64 * self.e_cmp + self.e_com
    }
}

#[derive(Debug, Clone)]
pub struct Curator {
    pub id: usize,
    pub members: Vec<usize>,
    pub params: ModelParams,
    pub records: Vec<ReputationRecord>,
    pub queue: DeficitQueue,
    pub channel: ChannelState,
    channel_rng: SimRng,
    pub prev_action: Action,
    /// Latest loss and hidden-layer mean reported by each member.
    pub losses: Vec<f64>,
    pub hidden: Vec<f64>,
    /// Cluster loss of `params`.
    pub loss_prev: f64,
    pub rounds_done: usize,
    pub last_upload_timestamp: usize,
    models: Vec<EnergyModel>,
    view_freq: Vec<f64>,
    /// Per-training time of the slowest member, as seen by the curator.
    pub per_training_view: f64,
    /// Per-training time of the slowest member, actual.
    pub per_training_true: f64,
}

impl Curator {
    pub fn new(
        id: usize,
        members: Vec<usize>,
        params: ModelParams,
        world: &World,
        cfg: &SimConfig,
        budget_share: f64,
        mut channel_rng: SimRng,
    ) -> Result<Self> {
        let channel = match cfg.channel.fixed_state {
            Some(kind) => ChannelState::fixed(kind),
            None => ChannelState::markov(cfg.channel.p_good, cfg.channel.mixing, &mut channel_rng)?,
        };
        let models: Vec<EnergyModel> = members.iter().map(|&i| energy_model(&world.nodes[i], cfg)).collect();
        let view_freq: Vec<f64> = members
            .iter()
            .map(|&i| view_frequency(&world.twins[i], cfg.federation.calibrated))
            .collect();
        let per_training_view = models
            .iter()
            .zip(&view_freq)
            .map(|(m, f)| m.cycles_per_training / f)
            .fold(0.0, f64::max);
        let per_training_true = members
            .iter()
            .zip(&models)
            .map(|(&i, m)| m.cycles_per_training / world.nodes[i].true_cpu_freq)
            .fold(0.0, f64::max);
        let mut losses = Vec::with_capacity(members.len());
        let mut hidden = Vec::with_capacity(members.len());
        for &i in &members {
            losses.push(trainer::local_loss(&params, &world.nodes[i].shard)?);
            hidden.push(trainer::hidden_layer_summary(&params, &world.nodes[i].shard)?);
        }
        let loss_prev = cluster_loss(&params, &members, world)?;
        let records = members
            .iter()
            .map(|&n| ReputationRecord::new(id, n, cfg.trust.iota))
            .collect();
        Ok(Self {
            id,
            records,
            queue: DeficitQueue::new(budget_share, cfg.scenario.budget_fraction, cfg.scenario.rounds_max),
            channel,
            channel_rng,
            prev_action: Action(1),
            losses,
            hidden,
            loss_prev,
            rounds_done: 0,
            last_upload_timestamp: 0,
            models,
            view_freq,
            per_training_view,
            per_training_true,
            members,
            params,
        })
    }

    /// Encoded MDP state at the start of the next round.
    pub fn observe(&self, cfg: &SimConfig) -> Result<MdpState> {
        dqn::encode_state(
            &Observation {
                losses: &self.losses,
                hidden_means: &self.hidden,
                queue: self.queue.q,
                slot_budget: self.queue.slot_budget(),
                prev_action: self.prev_action,
                a_max: cfg.dqn.a_max,
                channel: cfg.env.observe_channel.then_some(self.channel.state),
            },
            self.members.len(),
        )
    }

    pub fn state_dim(&self, cfg: &SimConfig) -> usize {
        dqn::state_dim(self.members.len(), cfg.dqn.a_max, cfg.env.observe_channel)
    }

    fn comm_per_node(&self, alloc: &energy::ChannelAllocation, u: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| {
                let e = energy::comm_energy(alloc, m)?;
                Ok(if cfg.channel.retransmit { e / (1.0 - u) } else { e })
            })
            .collect()
    }

    fn cmp_view(&self) -> f64 {
        self.models
            .iter()
            .zip(&self.view_freq)
            .map(|(m, &f)| energy::compute_energy(1, m, f))
            .sum()
    }

    /// Expected accounted consumption of a round with `a` passes at the current channel's mean noise.
    pub fn projected_consumption(&self, a: usize, cfg: &SimConfig) -> Result<f64> {
        let (alloc, u) = energy::channel_params_for(self.channel.state, &cfg.channel.profile);
        let com: f64 = self.comm_per_node(&alloc, u, cfg)?.iter().sum();
        Ok(a as f64 * self.cmp_view() + com)
    }

    /// Largest `a' <= a` the remaining budget affords, or `None` when the
    /// cluster must stop.
    pub fn budget_fit(&self, a: usize, cfg: &SimConfig) -> Result<Option<usize>> {
        if budget::budget_exhausted(&self.queue) {
            return Ok(None);
        }
        if !cfg.budget.predictive_halt {
            return Ok(Some(a));
        }
        let remaining = self.queue.remaining();
        for cand in (1..=a).rev() {
            if self.projected_consumption(cand, cfg)? <= remaining {
                return Ok(Some(cand));
            }
        }
        Ok(None)
    }

    /// Replaces the cluster model, e.g. after a global merge.
    pub fn adopt(&mut self, params: &ModelParams, world: &World) -> Result<()> {
        self.params = params.clone();
        self.loss_prev = cluster_loss(&self.params, &self.members, world)?;
        Ok(())
    }

    /// Trains every member `a` passes, uploads, screens, updates reputations,
    /// aggregates and charges the deficit queue.
    pub fn local_round(&mut self, a: usize, world: &mut World, cfg: &SimConfig, timestamp: usize) -> Result<RoundOutcome> {
        let start = self.params.clone();
        let mut uploads = Vec::with_capacity(self.members.len());
        for (k, &i) in self.members.iter().enumerate() {
            let (w, report) = trainer::local_train_steps(&world.nodes[i], &start, a, &cfg.train, &mut world.train_rngs[i])?;
            self.losses[k] = report.loss_after;
            self.hidden[k] = report.hidden_mean;
            world.nodes[i].params = w.clone();
            world.twins[i].mapped_loss = report.loss_after;
            uploads.push(Upload {
                node_id: i,
                params: w,
                timestamp,
                failure_prob: 0.0,
            });
        }

        for _ in 0..a {
            self.channel = energy::step_channel(&self.channel, &mut self.channel_rng);
        }
        let kind = self.channel.state;
        let (alloc, u) = if cfg.channel.jitter {
            energy::jittered_params(kind, &cfg.channel.profile, &mut self.channel_rng)
        } else {
            energy::channel_params_for(kind, &cfg.channel.profile)
        };
        let com = self.comm_per_node(&alloc, u, cfg)?;
        let e_cmp = self.cmp_view();
        let e_com: f64 = com.iter().sum();
        let mut true_energy = 0.0;
        for (k, &i) in self.members.iter().enumerate() {
            let spent = energy::compute_energy(a, &self.models[k], world.nodes[i].true_cpu_freq) + com[k];
            world.nodes[i].energy_spent += spent;
            world.twins[i].mapped_energy = world.nodes[i].energy_spent;
            true_energy += spent;
        }
        for up in &mut uploads {
            up.failure_prob = u;
        }

        let distance_q = trust::learning_quality(&uploads);
        let quality = match cfg.trust.quality_mode {
            QualityMode::Distance => distance_q,
            QualityMode::Closeness => trust::closeness_quality(&distance_q),
        };
        let flags = if uploads.len() >= 2 {
            trust::gradient_diversity_flags(&uploads, &start, cfg.trust.flag_threshold)
        } else {
            Default::default()
        };
        let mut reputations = BTreeMap::new();
        let mut ledger = Vec::with_capacity(self.members.len());
        for (k, &i) in self.members.iter().enumerate() {
            let q = quality[&i];
            let rec = &self.records[k];
            let b = trust::belief(u, q, world.twins[i].deviation, rec.alpha, rec.beta);
            let rec = trust::record_interaction(rec.clone(), flags.contains(&i), b, u, q);
            let t = if cfg.trust.window == 0 {
                trust::reputation(&rec)
            } else {
                trust::reputation_window(&rec, cfg.trust.window)
            };
            reputations.insert(i, t);
            ledger.push(LedgerEntry {
                node: i,
                alpha: rec.alpha,
                beta: rec.beta,
                belief: b,
                failure_prob: u,
                quality: q,
                reputation: t,
            });
            self.records[k] = rec;
        }
        let aggregated = local_aggregate(&uploads, &reputations)?;
        let loss_after = cluster_loss(&aggregated, &self.members, world)?;

        let weights = PenaltyWeights::new(cfg.budget.v0, cfg.budget.v_growth).at(self.rounds_done);
        let reward = budget::drift_penalty_value(&weights, self.loss_prev, loss_after, &self.queue, a, e_cmp, e_com);
        let queue_before = self.queue.q;
        self.queue = budget::queue_update(&self.queue, a, e_cmp, e_com);

        let outcome = RoundOutcome {
            a,
            reward,
            loss_before: self.loss_prev,
            loss_after,
            e_cmp,
            e_com,
            true_energy,
            channel: kind,
            failure_prob: u,
            queue_before,
            queue_after: self.queue.q,
            consumed: self.queue.consumed,
            ledger,
        };
        self.params = aggregated;
        self.loss_prev = loss_after;
        self.prev_action = Action(a.clamp(1, cfg.dqn.a_max));
        self.rounds_done += 1;
        self.last_upload_timestamp = timestamp;
        Ok(outcome)
    }
}

/// Trust-weighted aggregate of a cluster's uploads.
pub fn local_aggregate(uploads: &[Upload], reputations: &BTreeMap<usize, f64>) -> Result<ModelParams> {
    trust::trust_weighted_aggregate(uploads, reputations)
}

/// Sample-weighted mean loss of `params` over the members' shards.
pub fn cluster_loss(params: &ModelParams, members: &[usize], world: &World) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0.0;
    for &i in members {
        let n = world.nodes[i].shard.size() as f64;
        total += n * trainer::local_loss(params, &world.nodes[i].shard)?;
        count += n;
    }
    Ok(total / count)
}
