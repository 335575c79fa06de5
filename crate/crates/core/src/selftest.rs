//! Formula oracle suite: each core formula evaluated on small hand-computed
//! inputs. Used by `dtfl selftest` and the acceptance tests.

use std::collections::BTreeMap;

use crate::budget::{drift_penalty_value, queue_update, v_schedule, DeficitQueue, PenaltyWeights};
use crate::dqn::{q_target, td_loss, Action, Experience, MdpState, QNetwork};
use crate::energy::{comm_energy, compute_energy, ChannelAllocation, EnergyModel, Subchannel};
use crate::federation::{clamp_frequency, time_weighted_global_aggregate, tolerance_schedule, ToleranceSchedule};
use crate::mlp::{Architecture, ModelParams};
use crate::trust::{belief, learning_quality, record_interaction, reputation, trust_weighted_aggregate, ReputationRecord, Upload};

/// Relative tolerance of every check.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub expected: f64,
    pub got: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        let scale = self.expected.abs().max(1.0);
        (self.got - self.expected).abs() <= TOLERANCE * scale
    }
}

fn scalar(v: f64) -> ModelParams {
    let arch = Architecture::new(1, 1, 1);
    let mut flat = vec![0.0; arch.param_count()];
    flat[0] = v;
    ModelParams::from_flat(arch, flat).expect("scalar layout")
}

fn upload(id: usize, v: f64) -> Upload {
    Upload {
        node_id: id,
        params: scalar(v),
        timestamp: 0,
        failure_prob: 0.0,
    }
}

fn constant_net(outputs: &[f64]) -> QNetwork {
    let mut p = ModelParams::zeros(Architecture::new(1, 2, outputs.len()));
    p.set_b2(outputs);
    QNetwork::new(p)
}

fn transition(action: usize, reward: f64) -> Experience {
    Experience {
        state: MdpState::new(vec![0.0]),
        action: Action(action),
        reward,
        next_state: MdpState::new(vec![0.0]),
        terminal: false,
    }
}

/// Every oracle check, in a fixed order.
pub fn formula_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |name, expected, got| out.push(Check { name, expected, got });

    let q = learning_quality(&[upload(0, 0.0), upload(1, 0.0), upload(2, 3.0)]);
    for (id, want) in [(0, 0.25), (1, 0.25), (2, 0.5)] {
        push("learning quality", want, q[&id]);
    }

    push("belief", 2.88, belief(0.2, 0.4, 0.1, 9.0, 1.0));

    let mut rec = ReputationRecord::new(0, 0, 0.5);
    rec = record_interaction(rec, false, 0.2, 0.1, 0.5);
    rec = record_interaction(rec, false, 0.3, 0.2, 0.5);
    push("reputation", 0.65, reputation(&rec));

    let reps: BTreeMap<usize, f64> = [(0, 1.0), (1, 3.0)].into_iter().collect();
    let agg = trust_weighted_aggregate(&[upload(0, 0.0), upload(1, 4.0)], &reps).map_or(f64::NAN, |p| p.flat_view()[0]);
    push("trust-weighted aggregate", 3.0, agg);

    let model = EnergyModel {
        cycles_per_training: 1e9,
        n_cmp: 2.0,
        n_com: 1.0,
        model_bits: 8.0,
    };
    push("computation energy", 3.0, compute_energy(3, &model, 2e9));

    let sub = Subchannel {
        time_fraction: 0.5,
        bandwidth: 2.0,
        tx_power: 3.0,
        gain: 1.0,
        noise_power: 1.0,
    };
    let alloc = ChannelAllocation { entries: vec![sub, sub] };
    push("communication energy", 2.0, comm_energy(&alloc, &model).unwrap_or(f64::NAN));

    // beta * R_m / k = 0.5 * 50 / 10 = 2.5.
    let queue = DeficitQueue {
        q: 2.0,
        ..DeficitQueue::new(50.0, 0.5, 10)
    };
    push("deficit queue", 3.5, queue_update(&queue, 1, 1.0, 3.0).q);

    let weights = PenaltyWeights::new(10.0, 0.0);
    let queue = DeficitQueue { q: 2.0, ..queue };
    push("drift-plus-penalty reward", 0.0, drift_penalty_value(&weights, 0.9, 0.7, &queue, 3, 0.2, 0.4));
    push("penalty weight schedule", 1.5, v_schedule(&PenaltyWeights::new(1.0, 0.1), 5));

    let target = constant_net(&[0.5, 1.5]);
    push("td target", 2.35, q_target(&target, &transition(1, 1.0), 0.9));
    let eval = constant_net(&[0.5, 0.3]);
    let (e1, e2) = (transition(1, 0.0), transition(2, 0.0));
    push("td loss", 0.25, td_loss(&eval, &[&e1], &[1.0]));
    push("td loss batch mean", 0.17, td_loss(&eval, &[&e1, &e2], &[1.0, 0.6]));

    push("frequency clamp", 3.0, clamp_frequency(Action(5), 2.0, 1.0, 7.0).0 as f64);
    let sched = ToleranceSchedule {
        alpha0: 0.5,
        rho: 0.05,
        alpha_max: 1.0,
    };
    push("tolerance schedule", 0.7, tolerance_schedule(&sched, 4));

    let (a, b) = (scalar(0.0), scalar(1.0));
    let lagged = 2.0 / std::f64::consts::E;
    let merged = time_weighted_global_aggregate(&[(&a, 5), (&b, 4)], 5).map_or(f64::NAN, |p| p.flat_view()[0]);
    push("time-weighted global merge", lagged / (1.0 + lagged), merged);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let checks = formula_checks();
        assert!(checks.len() >= 15);
        for c in &checks {
            assert!(c.passed(), "{}: expected {} got {}", c.name, c.expected, c.got);
        }
    }

    #[test]
    fn merge_value_matches_decimal() {
        let lagged = 2.0 / std::f64::consts::E;
        assert!((lagged / (1.0 + lagged) - 0.423883).abs() < 1e-6);
    }

    #[test]
    fn detects_mismatch() {
        let c = Check {
            name: "x",
            expected: 2.0,
            got: 2.0 + 1e-6,
        };
        assert!(!c.passed());
    }
}
