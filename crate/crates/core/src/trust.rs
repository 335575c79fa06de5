//! Subjective-logic trust: learning quality, belief, reputation, diversity
//! screening of updates, and reputation-weighted aggregation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mlp::ModelParams;

/// Floor applied to the twin deviation inside [`belief`].
pub const DEVIATION_FLOOR: f64 = 1e-3;

/// One stored interaction: belief, failure probability and quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub belief: f64,
    pub failure_prob: f64,
    pub quality: f64,
}

/// Curator-side ledger for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationRecord {
    pub curator_id: usize,
    pub node_id: usize,
    /// Positive interactions, starting from a prior of 1.
    pub alpha: f64,
    /// Malicious actions, starting from a prior of 1.
    pub beta: f64,
    pub uncertainty_coeff: f64,
    pub history: Vec<Interaction>,
}

impl ReputationRecord {
    pub fn new(curator_id: usize, node_id: usize, uncertainty_coeff: f64) -> Self {
        Self {
            curator_id,
            node_id,
            alpha: 1.0,
            beta: 1.0,
            uncertainty_coeff,
            history: Vec::new(),
        }
    }
}

/// A node's model as received by its curator.
#[derive(Debug, Clone, PartialEq)]
pub struct Upload {
    pub node_id: usize,
    pub params: ModelParams,
    pub timestamp: usize,
    pub failure_prob: f64,
}

fn mean_params(uploads: &[Upload]) -> Vec<f64> {
    let n = uploads.len() as f64;
    let mut mean = vec![0.0; uploads[0].params.flat_view().len()];
    for up in uploads {
        for (m, v) in mean.iter_mut().zip(up.params.flat_view()) {
            *m += v / n;
        }
    }
    mean
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Normalised distance of each upload from the upload mean; sums to 1.
pub fn learning_quality(uploads: &[Upload]) -> BTreeMap<usize, f64> {
    if uploads.is_empty() {
        return BTreeMap::new();
    }
    let mean = mean_params(uploads);
    let dists: Vec<f64> = uploads.iter().map(|u| l2_distance(u.params.flat_view(), &mean)).collect();
    let total: f64 = dists.iter().sum();
    let n = uploads.len() as f64;
    uploads
        .iter()
        .zip(dists)
        .map(|(u, d)| (u.node_id, if total > 0.0 { d / total } else { 1.0 / n }))
        .collect()
}

/// Re-weights distance qualities so that uploads close to the consensus score
/// high: `q'_i ∝ 1 / q_i`, normalised to sum to 1.
pub fn closeness_quality(quality: &BTreeMap<usize, f64>) -> BTreeMap<usize, f64> {
    let inv: BTreeMap<usize, f64> = quality.iter().map(|(&id, &q)| (id, 1.0 / q.max(1e-12))).collect();
    let total: f64 = inv.values().sum();
    inv.into_iter().map(|(id, v)| (id, v / total)).collect()
}

/// Curator belief in a node for one interaction.
pub fn belief(u: f64, q: f64, deviation: f64, alpha: f64, beta: f64) -> f64 {
    (1.0 - u) * q / deviation.max(DEVIATION_FLOOR) * (alpha / (alpha + beta))
}

/// Sum of `b + iota * u` over the whole history.
pub fn reputation(record: &ReputationRecord) -> f64 {
    reputation_window(record, record.history.len())
}

/// Like [`reputation`] but over the latest `window` interactions only.
pub fn reputation_window(record: &ReputationRecord, window: usize) -> f64 {
    let start = record.history.len().saturating_sub(window);
    record.history[start..]
        .iter()
        .map(|h| h.belief + record.uncertainty_coeff * h.failure_prob)
        .sum()
}

/// Bumps `beta` when flagged, `alpha` otherwise, and appends the interaction.
pub fn record_interaction(mut record: ReputationRecord, flagged: bool, b: f64, u: f64, q: f64) -> ReputationRecord {
    if flagged {
        record.beta += 1.0;
    } else {
        record.alpha += 1.0;
    }
    record.history.push(Interaction {
        belief: b,
        failure_prob: u,
        quality: q,
    });
    record
}

/// `Σ T_i w_i / Σ T_i` over the uploads; nodes missing from `reputations` count as 0.
pub fn trust_weighted_aggregate(uploads: &[Upload], reputations: &BTreeMap<usize, f64>) -> Result<ModelParams> {
    let weights: Vec<f64> = uploads
        .iter()
        .map(|u| reputations.get(&u.node_id).copied().unwrap_or(0.0).max(0.0))
        .collect();
    let total: f64 = weights.iter().sum();
    if uploads.is_empty() || total <= 0.0 {
        return Err(Error::AllUntrusted);
    }
    let arch = uploads[0].params.arch();
    let mut out = ModelParams::zeros(arch);
    for (up, w) in uploads.iter().zip(&weights) {
        if up.params.arch() != arch {
            return Err(Error::ArchMismatch);
        }
        if *w > 0.0 {
            out.add_scaled(w / total, up.params.flat_view());
        }
    }
    Ok(out)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        // Two null updates are identical; a null and a non-null one are unrelated.
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot / (na * nb)
}

/// Nodes whose update `w_i - prev_global` has cosine similarity above
/// `threshold` with some other node's update.
pub fn gradient_diversity_flags(uploads: &[Upload], prev_global: &ModelParams, threshold: f64) -> BTreeSet<usize> {
    let base = prev_global.flat_view();
    let deltas: Vec<Vec<f64>> = uploads
        .iter()
        .map(|u| u.params.flat_view().iter().zip(base).map(|(w, g)| w - g).collect())
        .collect();
    let mut flagged = BTreeSet::new();
    for i in 0..deltas.len() {
        for j in i + 1..deltas.len() {
            if cosine(&deltas[i], &deltas[j]) > threshold {
                flagged.insert(uploads[i].node_id);
                flagged.insert(uploads[j].node_id);
            }
        }
    }
    flagged
}
