//! Resource deficit queue and the drift-plus-penalty value used as reward.

/// Virtual queue tracking consumption beyond the per-slot budget.
#[derive(Debug, Clone, PartialEq)]
pub struct DeficitQueue {
    pub q: f64,
    pub budget_total: f64,
    pub budget_fraction: f64,
    /// Planned number of aggregations `k`.
    pub horizon: usize,
    pub consumed: f64,
}

impl DeficitQueue {
    pub fn new(budget_total: f64, budget_fraction: f64, horizon: usize) -> Self {
        Self {
            q: 0.0,
            budget_total,
            budget_fraction,
            horizon,
            consumed: 0.0,
        }
    }

    /// Usable budget `beta * R_m`.
    pub fn usable(&self) -> f64 {
        self.budget_fraction * self.budget_total
    }

    /// Per-slot budget `beta * R_m / k`.
    pub fn slot_budget(&self) -> f64 {
        self.usable() / self.horizon.max(1) as f64
    }

    pub fn remaining(&self) -> f64 {
        self.usable() - self.consumed
    }
}

/// Queue after a slot that consumed `a * e_cmp + e_com`.
pub fn queue_update(queue: &DeficitQueue, a: usize, e_cmp: f64, e_com: f64) -> DeficitQueue {
    let spend = a as f64 * e_cmp + e_com;
    DeficitQueue {
        q: (queue.q + spend - queue.slot_budget()).max(0.0),
        consumed: queue.consumed + spend,
        ..queue.clone()
    }
}

/// Trade-off weight schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights {
    pub v: f64,
    pub v0: f64,
    pub v_growth: f64,
}

impl PenaltyWeights {
    pub fn new(v0: f64, v_growth: f64) -> Self {
        Self { v: v0, v0, v_growth }
    }

    /// Weights with `v` set for aggregation `index`.
    pub fn at(&self, index: usize) -> Self {
        Self {
            v: v_schedule(self, index),
            ..*self
        }
    }
}

/// `v0 * (1 + v_growth * index)`.
pub fn v_schedule(weights: &PenaltyWeights, index: usize) -> f64 {
    weights.v0 * (1.0 + weights.v_growth * index as f64)
}

/// `v (F_prev - F_cur) - Q (a e_cmp + e_com)` with the pre-update queue.
pub fn drift_penalty_value(
    weights: &PenaltyWeights,
    loss_prev: f64,
    loss_cur: f64,
    queue: &DeficitQueue,
    a: usize,
    e_cmp: f64,
    e_com: f64,
) -> f64 {
    weights.v * (loss_prev - loss_cur) - queue.q * (a as f64 * e_cmp + e_com)
}

/// True once consumption exceeds `beta * R_m`.
pub fn budget_exhausted(queue: &DeficitQueue) -> bool {
    queue.consumed > queue.usable()
}

/// Per-aggregation loss drops `F(w_{i-1}) - F(w_i)`.
pub fn decompose_training_gain(trace: &[f64]) -> Vec<f64> {
    trace.windows(2).map(|w| w[0] - w[1]).collect()
}
