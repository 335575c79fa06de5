//! Deep Q-learning controller that picks the number of local updates per
//! aggregation.
//!
//! Exploration follows an inverted convention: with probability `epsilon`
//! the agent acts greedily, otherwise uniformly at random, and `epsilon`
//! grows towards 1 episode by episode. Learning starts only once the replay
//! buffer is full.

pub mod replay;
pub mod weights;

use ndarray::Array2;
use rand::Rng;

use crate::energy::ChannelKind;
use crate::error::{Error, Result};
use crate::mlp::{Architecture, ModelParams};
use crate::rng::{indexed_substream, Stream};
pub use replay::ReplayBuffer;

/// Number of local updates, in `1..=a_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action(pub usize);

/// Encoded MDP state.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpState {
    pub features: Vec<f64>,
}

impl MdpState {
    pub fn new(features: Vec<f64>) -> Self {
        Self { features }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Raw inputs of [`encode_state`].
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub losses: &'a [f64],
    pub hidden_means: &'a [f64],
    pub queue: f64,
    /// Per-slot budget used to scale the queue.
    pub slot_budget: f64,
    pub prev_action: Action,
    pub a_max: usize,
    /// Current channel state, appended one-hot when present.
    pub channel: Option<ChannelKind>,
}

/// `[losses | hidden means | one-hot previous action | scaled queue | one-hot channel]`.
pub fn encode_state(obs: &Observation<'_>, num_nodes: usize) -> Result<MdpState> {
    for len in [obs.losses.len(), obs.hidden_means.len()] {
        if len != num_nodes {
            return Err(Error::LengthMismatch {
                expected: num_nodes,
                actual: len,
            });
        }
    }
    let mut f = Vec::with_capacity(2 * num_nodes + obs.a_max + 4);
    f.extend_from_slice(obs.losses);
    f.extend_from_slice(obs.hidden_means);
    f.extend((1..=obs.a_max).map(|a| if a == obs.prev_action.0 { 1.0 } else { 0.0 }));
    f.push(if obs.slot_budget > 0.0 { obs.queue / obs.slot_budget } else { obs.queue });
    if let Some(kind) = obs.channel {
        f.extend(ChannelKind::ALL.iter().map(|&k| if k == kind { 1.0 } else { 0.0 }));
    }
    Ok(MdpState::new(f))
}

/// Length of an encoded state.
pub fn state_dim(num_nodes: usize, a_max: usize, with_channel: bool) -> usize {
    2 * num_nodes + a_max + 1 + if with_channel { 3 } else { 0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: MdpState,
    pub action: Action,
    pub reward: f64,
    pub next_state: MdpState,
    /// Budget exhausted or horizon reached.
    pub terminal: bool,
}

/// `state_dim x hidden x a_max` Q-network with linear outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    params: ModelParams,
}

impl QNetwork {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }

    pub fn random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        Self::new(ModelParams::random(arch, rng))
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn a_max(&self) -> usize {
        self.params.arch().output
    }

    pub fn q_values(&self, state: &MdpState) -> Vec<f64> {
        let x = ndarray::ArrayView2::from_shape((1, state.dim()), &state.features).expect("row");
        self.params.predict(x).into_raw_vec_and_offset().0
    }

    /// Greedy action; ties go to the smallest action.
    pub fn greedy(&self, state: &MdpState) -> Action {
        let q = self.q_values(state);
        let mut best = 0;
        for (i, v) in q.iter().enumerate() {
            if *v > q[best] {
                best = i;
            }
        }
        Action(best + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub gamma: f64,
    pub epsilon0: f64,
    /// Per-episode increase of `epsilon`.
    pub epsilon_growth: f64,
    pub epsilon_max: f64,
    /// Learning steps between target syncs.
    pub target_update_every: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub capacity: usize,
    pub episodes: usize,
    pub hidden: usize,
    pub a_max: usize,
    /// Standardise rewards with running statistics before storing them.
    pub normalize_rewards: bool,
    /// Stop training after this many environment steps in total; 0 means no cap.
    pub max_env_steps: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            epsilon0: 0.1,
            epsilon_growth: 0.002,
            epsilon_max: 1.0,
            target_update_every: 100,
            batch_size: 32,
            lr: 1e-3,
            capacity: 2000,
            episodes: 100,
            hidden: 200,
            a_max: 10,
            normalize_rewards: false,
            max_env_steps: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("dqn.gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon0) || !(0.0..=1.0).contains(&self.epsilon_max) || self.epsilon_growth < 0.0 {
            return bad("dqn epsilon values must lie in [0, 1] with non-negative growth");
        }
        if self.a_max == 0 || self.hidden == 0 || self.batch_size == 0 || self.target_update_every == 0 {
            return bad("dqn a_max, hidden, batch_size and target_update_every must be positive");
        }
        if self.capacity < self.batch_size {
            return bad("dqn.capacity must hold at least one batch");
        }
        Ok(())
    }
}

/// With probability `epsilon` the greedy action, otherwise a uniform one.
pub fn select_action<R: Rng + ?Sized>(net: &QNetwork, state: &MdpState, epsilon: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < epsilon {
        net.greedy(state)
    } else {
        Action(rng.random_range(1..=net.a_max()))
    }
}

/// `r + gamma * max_a' Q_target(s', a')`, or `r` for terminal transitions.
pub fn q_target(target: &QNetwork, exp: &Experience, gamma: f64) -> f64 {
    if exp.terminal || gamma == 0.0 {
        return exp.reward;
    }
    let best = target.q_values(&exp.next_state).into_iter().fold(f64::NEG_INFINITY, f64::max);
    exp.reward + gamma * best
}

fn stack(batch: &[&Experience]) -> Array2<f64> {
    let d = batch[0].state.dim();
    let mut x = Array2::zeros((batch.len(), d));
    for (mut row, e) in x.rows_mut().into_iter().zip(batch) {
        row.assign(&ndarray::ArrayView1::from(&e.state.features));
    }
    x
}

/// Mean of `(y_i - Q_eval(s_i, a_i))^2`.
pub fn td_loss(eval: &QNetwork, batch: &[&Experience], targets: &[f64]) -> f64 {
    td_loss_and_gradient(eval, batch, targets).0
}

/// TD loss and its gradient with respect to the eval network's flat parameters.
pub fn td_loss_and_gradient(eval: &QNetwork, batch: &[&Experience], targets: &[f64]) -> (f64, Vec<f64>) {
    let x = stack(batch);
    let acts = eval.params.forward(x.view());
    let n = batch.len() as f64;
    let mut d_out = Array2::zeros(acts.output.dim());
    let mut loss = 0.0;
    for (i, (e, y)) in batch.iter().zip(targets).enumerate() {
        let col = e.action.0 - 1;
        let diff = acts.output[[i, col]] - y;
        loss += diff * diff / n;
        d_out[[i, col]] = 2.0 * diff / n;
    }
    (loss, eval.params.backward(x.view(), &acts, d_out.view()))
}

/// One SGD step of `eval` on a uniform replay batch; returns the pre-step loss.
pub fn train_step<R: Rng + ?Sized>(
    eval: &mut QNetwork,
    target: &QNetwork,
    buffer: &ReplayBuffer,
    cfg: &DqnConfig,
    rng: &mut R,
) -> Result<f64> {
    let batch = buffer.sample(cfg.batch_size, rng)?;
    let targets: Vec<f64> = batch.iter().map(|e| q_target(target, e, cfg.gamma)).collect();
    let (loss, grad) = td_loss_and_gradient(eval, &batch, &targets);
    eval.params.add_scaled(-cfg.lr, &grad);
    Ok(loss)
}

/// Copies eval weights into the target network.
pub fn sync_target(eval: &QNetwork, target: &mut QNetwork) -> Result<()> {
    if eval.params.arch() != target.params.arch() {
        return Err(Error::ArchMismatch);
    }
    target.params.flat_mut().copy_from_slice(eval.params.flat_view());
    Ok(())
}

/// Result of an environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub next_state: MdpState,
    pub terminal: bool,
}

/// Episodic environment driven by [`run_dqn_training`].
pub trait Environment {
    fn reset(&mut self) -> Result<MdpState>;
    fn step(&mut self, action: Action) -> Result<Transition>;
    fn state_dim(&self) -> usize;
}

/// Running mean/variance (Welford) used to standardise rewards.
#[derive(Debug, Clone, Default)]
pub struct RewardNormalizer {
    count: f64,
    mean: f64,
    m2: f64,
}

impl RewardNormalizer {
    pub fn normalize(&mut self, r: f64) -> f64 {
        self.count += 1.0;
        let delta = r - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (r - self.mean);
        let std = if self.count > 1.0 {
            (self.m2 / (self.count - 1.0)).sqrt()
        } else {
            0.0
        };
        if std > 1e-12 {
            (r - self.mean) / std
        } else {
            r - self.mean
        }
    }
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub step: usize,
    pub epsilon: f64,
    /// Pre-step TD loss when a learning step ran.
    pub td_loss: Option<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct DqnOutcome {
    pub eval: QNetwork,
    pub target: QNetwork,
    pub trace: Vec<TraceRow>,
    pub learning_steps: usize,
}

/// Trains an eval/target pair on `env`. `agent` selects the random substreams
/// so several agents can share one seed.
pub fn run_dqn_training<E: Environment + ?Sized>(env: &mut E, cfg: &DqnConfig, seed: u64, agent: u64) -> Result<DqnOutcome> {
    cfg.validate()?;
    let arch = Architecture::new(env.state_dim(), cfg.hidden, cfg.a_max);
    let mut init_rng = indexed_substream(seed, Stream::ModelInit, 1 + agent);
    let mut explore_rng = indexed_substream(seed, Stream::Exploration, agent);
    let mut replay_rng = indexed_substream(seed, Stream::Replay, agent);

    let mut eval = QNetwork::random(arch, &mut init_rng);
    let mut target = eval.clone();
    let mut buffer = ReplayBuffer::new(cfg.capacity);
    let mut normalizer = RewardNormalizer::default();
    let mut trace = Vec::new();
    let mut epsilon = cfg.epsilon0.min(cfg.epsilon_max);
    let mut learning_steps = 0;
    let mut step = 0;

    'episodes: for episode in 0..cfg.episodes {
        let mut state = env.reset()?;
        loop {
            if cfg.max_env_steps > 0 && step >= cfg.max_env_steps {
                break 'episodes;
            }
            let action = select_action(&eval, &state, epsilon, &mut explore_rng);
            let tr = env.step(action)?;
            let stored = if cfg.normalize_rewards {
                normalizer.normalize(tr.reward)
            } else {
                tr.reward
            };
            buffer.push(Experience {
                state,
                action,
                reward: stored,
                next_state: tr.next_state.clone(),
                terminal: tr.terminal,
            });
            let mut td = None;
            if buffer.is_full() {
                if learning_steps % cfg.target_update_every == 0 {
                    sync_target(&eval, &mut target)?;
                }
                td = Some(train_step(&mut eval, &target, &buffer, cfg, &mut replay_rng)?);
                learning_steps += 1;
            }
            trace.push(TraceRow {
                episode,
                step,
                epsilon,
                td_loss: td,
                reward: tr.reward,
            });
            step += 1;
            if tr.terminal {
                break;
            }
            state = tr.next_state;
        }
        epsilon = (epsilon + cfg.epsilon_growth).min(cfg.epsilon_max);
    }
    Ok(DqnOutcome {
        eval,
        target,
        trace,
        learning_steps,
    })
}
