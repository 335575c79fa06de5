//! Clustered asynchronous federation: K-means clustering, per-cluster
//! frequency decisions with the tolerance clamp, trust-weighted local
//! aggregation, and time-weighted global merges.
//!
//! Simulated time advances in global epochs. An epoch's window is
//! `alpha * T_m`, where `T_m` is `a_ref` passes of the fastest cluster.
//! Idle clusters start a local round at the epoch start; the epoch ends when
//! the last round that fits the window finishes (or, if none fits, when the
//! first round finishes). Clusters still running are stragglers and publish in
//! a later epoch with that epoch's timestamp.

pub mod cluster;
pub mod env;

use rayon::prelude::*;

use crate::config::{Mode, SimConfig};
use crate::dqn::{self, Action, DqnOutcome, QNetwork};
use crate::energy::ChannelKind;
use crate::error::{Error, Result};
use crate::kmeans;
use crate::mlp::ModelParams;
use crate::rng::{indexed_substream, substream, Stream};
use crate::scenario::Scenario;
use crate::trainer;

pub use cluster::{Curator, LedgerEntry, RoundOutcome, World};
pub use env::ClusterEnv;

/// Tolerance factor schedule `min(alpha_max, alpha0 + rho * round)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSchedule {
    pub alpha0: f64,
    pub rho: f64,
    pub alpha_max: f64,
}

pub fn tolerance_schedule(sched: &ToleranceSchedule, global_round: usize) -> f64 {
    (sched.alpha0 + sched.rho * global_round as f64).min(sched.alpha_max)
}

/// Caps `a` so that `a * per_training_time <= alpha_tol * t_min`, never below 1.
pub fn clamp_frequency(a: Action, per_training_time: f64, alpha_tol: f64, t_min: f64) -> Action {
    let window = alpha_tol * t_min;
    if a.0 as f64 * per_training_time > window {
        Action(((window / per_training_time).floor() as usize).max(1))
    } else {
        a
    }
}

/// `Σ ω_j w_j / Σ ω_j` with `ω_j = (e/2)^-(t - timestamp_j)`.
pub fn time_weighted_global_aggregate(entries: &[(&ModelParams, usize)], t: usize) -> Result<ModelParams> {
    let Some((first, _)) = entries.first() else {
        return Err(Error::BadConfig("global merge needs at least one cluster".into()));
    };
    let base = std::f64::consts::E / 2.0;
    let weights: Vec<f64> = entries
        .iter()
        .map(|(_, ts)| base.powi(-(t.saturating_sub(*ts) as i32)))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut out = ModelParams::zeros(first.arch());
    for ((p, _), w) in entries.iter().zip(&weights) {
        if p.arch() != first.arch() {
            return Err(Error::ArchMismatch);
        }
        out.add_scaled(w / total, p.flat_view());
    }
    Ok(out)
}

/// K-means over (normalised data size, normalised curator-view CPU frequency).
pub fn cluster_nodes(scenario: &Scenario, k: usize, calibrated: bool) -> Result<Vec<Vec<usize>>> {
    let sizes: Vec<f64> = scenario.nodes.iter().map(|n| n.shard.size() as f64).collect();
    let freqs: Vec<f64> = scenario
        .twins
        .iter()
        .map(|t| cluster::view_frequency(t, calibrated))
        .collect();
    let (s, f) = (kmeans::normalize(&sizes), kmeans::normalize(&freqs));
    let points: Vec<[f64; 2]> = s.into_iter().zip(f).map(|(a, b)| [a, b]).collect();
    kmeans::kmeans(&points, k, &mut substream(scenario.config.seed, Stream::Clustering))
}

/// One row per completed local round.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub simulated_time: f64,
    pub cluster_id: usize,
    pub a: usize,
    pub local_loss: f64,
    pub global_accuracy: f64,
    pub q: f64,
    pub e_cmp: f64,
    pub e_com: f64,
    pub channel: ChannelKind,
}

/// Reputation state of one node after one round.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub round: usize,
    pub curator: usize,
    pub entry: LedgerEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub round: usize,
    pub cluster_id: usize,
    pub q: f64,
    pub consumed: f64,
    pub budget_rate: f64,
    pub penalty_value: f64,
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub clusters: Vec<Vec<usize>>,
    pub rows: Vec<MetricsRow>,
    pub ledger: Vec<LedgerRow>,
    pub budget: Vec<BudgetRow>,
    /// `(simulated time, global accuracy)` at the end of every epoch.
    pub accuracy: Vec<(f64, f64)>,
    pub final_accuracy: f64,
    pub final_params: ModelParams,
    /// Accounted consumption and usable budget per cluster.
    pub consumed: Vec<f64>,
    pub usable: Vec<f64>,
    pub slot_budget: Vec<f64>,
    pub max_q: Vec<f64>,
    /// Energy actually spent by each node.
    pub node_energy: Vec<f64>,
    pub agents: Vec<DqnOutcome>,
}

impl FederationOutcome {
    /// Earliest simulated time at which the global accuracy reached `target`.
    pub fn time_to_accuracy(&self, target: f64) -> Option<f64> {
        self.accuracy.iter().find(|(_, acc)| *acc >= target).map(|(t, _)| *t)
    }

    pub fn total_consumed(&self) -> f64 {
        self.consumed.iter().sum()
    }

    pub fn total_usable(&self) -> f64 {
        self.usable.iter().sum()
    }
}

/// Budget `R_m` share of each of `k` clusters.
pub fn budget_share(cfg: &SimConfig, k: usize) -> f64 {
    cfg.scenario.budget_total / k as f64
}

/// Trains one agent per cluster on its single-cluster environment.
pub fn train_agents(scenario: &Scenario, cfg: &SimConfig, clusters: &[Vec<usize>]) -> Result<Vec<DqnOutcome>> {
    let share = budget_share(cfg, clusters.len());
    clusters
        .par_iter()
        .enumerate()
        .map(|(c, members)| {
            let mut env = ClusterEnv::new(scenario, cfg, c, members.clone(), share);
            dqn::run_dqn_training(&mut env, &cfg.dqn, scenario.config.seed, c as u64)
        })
        .collect()
}

struct Pending {
    finish: f64,
    outcome: RoundOutcome,
}

/// Runs `rounds` global epochs in `mode`. Agents are trained first when the
/// mode needs them and none are supplied.
pub fn run_federation(
    scenario: &Scenario,
    cfg: &SimConfig,
    mode: Mode,
    rounds: usize,
    agents: Option<&[QNetwork]>,
) -> Result<FederationOutcome> {
    let k = scenario.config.num_clusters;
    let clusters = cluster_nodes(scenario, k, cfg.federation.calibrated)?;
    let share = budget_share(cfg, k);

    let mut trained = Vec::new();
    let nets: Vec<QNetwork> = match (mode, agents) {
        (Mode::AsyncDqn, Some(given)) => {
            if given.len() != k {
                return Err(Error::LengthMismatch {
                    expected: k,
                    actual: given.len(),
                });
            }
            given.to_vec()
        }
        (Mode::AsyncDqn, None) => {
            trained = train_agents(scenario, cfg, &clusters)?;
            trained.iter().map(|o| o.eval.clone()).collect()
        }
        _ => Vec::new(),
    };

    let mut world = World::new(scenario, 0);
    let mut curators = Vec::with_capacity(k);
    for (c, members) in clusters.iter().enumerate() {
        let rng = indexed_substream(scenario.config.seed, Stream::Channel, c as u64);
        curators.push(Curator::new(c, members.clone(), scenario.initial_params.clone(), &world, cfg, share, rng)?);
    }

    let sched = ToleranceSchedule {
        alpha0: cfg.federation.alpha0,
        rho: cfg.federation.rho,
        alpha_max: cfg.federation.alpha_max,
    };
    let a_ref = match mode {
        Mode::AsyncDqn => cfg.dqn.a_max,
        Mode::SyncFixed(t) | Mode::AsyncFixed(t) => t,
    } as f64;

    let mut global = scenario.initial_params.clone();
    let mut published: Vec<Option<(ModelParams, usize)>> = vec![None; k];
    let mut pending: Vec<Option<Pending>> = (0..k).map(|_| None).collect();
    let mut halted = vec![false; k];
    let mut max_q = vec![0.0f64; k];
    let mut now = 0.0;
    let mut rows = Vec::new();
    let mut ledger = Vec::new();
    let mut budget_rows = Vec::new();
    let mut accuracy = Vec::new();
    let mut final_accuracy = trainer::accuracy(&global, &scenario.test_set);

    for g in 0..rounds {
        let alpha = tolerance_schedule(&sched, g);
        let t_min = (0..k)
            .filter(|&c| !halted[c] || pending[c].is_some())
            .map(|c| curators[c].per_training_view)
            .fold(f64::INFINITY, f64::min);
        if !t_min.is_finite() {
            break;
        }
        let window = alpha * a_ref * t_min;

        for c in 0..k {
            if halted[c] || pending[c].is_some() {
                continue;
            }
            let cur = &curators[c];
            let proposed = match mode {
                Mode::AsyncDqn => nets[c].greedy(&cur.observe(cfg)?),
                Mode::SyncFixed(t) | Mode::AsyncFixed(t) => Action(t),
            };
            let a = match mode {
                Mode::SyncFixed(_) => proposed,
                _ => clamp_frequency(proposed, cur.per_training_view, alpha, a_ref * t_min),
            };
            let Some(a) = cur.budget_fit(a.0, cfg)? else {
                halted[c] = true;
                continue;
            };
            let outcome = curators[c].local_round(a, &mut world, cfg, g)?;
            let finish = now + a as f64 * curators[c].per_training_true;
            pending[c] = Some(Pending { finish, outcome });
        }

        let finishes: Vec<f64> = pending.iter().flatten().map(|p| p.finish).collect();
        if finishes.is_empty() {
            break;
        }
        let tol = 1e-9 * (1.0 + now.abs());
        let latest = finishes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let earliest = finishes.iter().copied().fold(f64::INFINITY, f64::min);
        let epoch_end = match mode {
            Mode::SyncFixed(_) => latest,
            _ => {
                let fitting = finishes
                    .iter()
                    .copied()
                    .filter(|f| *f <= now + window + tol)
                    .fold(f64::NEG_INFINITY, f64::max);
                if fitting.is_finite() {
                    fitting
                } else {
                    earliest
                }
            }
        };

        let mut completed = Vec::new();
        for c in 0..k {
            if pending[c].as_ref().is_some_and(|p| p.finish <= epoch_end + tol) {
                let p = pending[c].take().expect("checked");
                published[c] = Some((curators[c].params.clone(), g));
                completed.push((c, p.outcome));
            }
        }
        now = epoch_end;

        let merge = (g + 1) % cfg.federation.global_every == 0 || g + 1 == rounds;
        if merge {
            let entries: Vec<(&ModelParams, usize)> = published.iter().flatten().map(|(p, t)| (p, *t)).collect();
            global = time_weighted_global_aggregate(&entries, g)?;
            for (c, _) in &completed {
                curators[*c].adopt(&global, &world)?;
            }
        }
        final_accuracy = trainer::accuracy(&global, &scenario.test_set);
        accuracy.push((now, final_accuracy));

        for (c, out) in completed {
            max_q[c] = max_q[c].max(out.queue_after);
            rows.push(MetricsRow {
                round: g,
                simulated_time: now,
                cluster_id: c,
                a: out.a,
                local_loss: out.loss_after,
                global_accuracy: final_accuracy,
                q: out.queue_after,
                e_cmp: out.a as f64 * out.e_cmp,
                e_com: out.e_com,
                channel: out.channel,
            });
            budget_rows.push(BudgetRow {
                round: g,
                cluster_id: c,
                q: out.queue_after,
                consumed: out.consumed,
                budget_rate: curators[c].queue.slot_budget(),
                penalty_value: out.reward,
            });
            for entry in out.ledger {
                ledger.push(LedgerRow { round: g, curator: c, entry });
            }
        }
    }

    Ok(FederationOutcome {
        clusters,
        rows,
        ledger,
        budget: budget_rows,
        accuracy,
        final_accuracy,
        final_params: global,
        consumed: curators.iter().map(|c| c.queue.consumed).collect(),
        usable: curators.iter().map(|c| c.queue.usable()).collect(),
        slot_budget: curators.iter().map(|c| c.queue.slot_budget()).collect(),
        max_q,
        node_energy: world.nodes.iter().map(|n| n.energy_spent).collect(),
        agents: trained,
    })
}
