//! Local model training: softmax cross-entropy loss, its gradient, gradient
//! descent passes over a shard, and the hidden-layer summary fed to the DQN.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::DatasetShard;
use crate::error::{Error, Result};
use crate::mlp::{self, ModelParams};
use crate::scenario::{AttackKind, DeviceNode};

/// Optimiser knobs for local training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Mini-batch size; 0 means full batch.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.05, batch_size: 0 }
    }
}

/// Outcome of one call to [`local_train_steps`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub loss_after: f64,
    pub hidden_mean: f64,
    pub steps_done: usize,
}

/// Mean cross-entropy of `logits` against `labels`, and its gradient with respect to the logits.
fn softmax_xent(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (mut row, &y) in grad.axis_iter_mut(Axis(0)).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| v - max);
        let shifted_y = row[y];
        row.mapv_inplace(f64::exp);
        let z: f64 = row.sum();
        loss += z.ln() - shifted_y;
        row.mapv_inplace(|v| v / z);
        row[y] -= 1.0;
    }
    grad.mapv_inplace(|g| g / n as f64);
    (loss / n as f64, grad)
}

fn xent_only(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (row, &y) in logits.axis_iter(Axis(0)).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        loss += z.ln() + max - row[y];
    }
    loss / logits.nrows() as f64
}

/// Mean cross-entropy of `params` over `shard`.
pub fn local_loss(params: &ModelParams, shard: &DatasetShard) -> Result<f64> {
    if shard.is_empty() {
        return Err(Error::EmptyShard);
    }
    Ok(xent_only(&params.predict(shard.features().view()), shard.labels()))
}

/// Mean rectified hidden activation over samples and units.
pub fn hidden_layer_summary(params: &ModelParams, shard: &DatasetShard) -> Result<f64> {
    if shard.is_empty() {
        return Err(Error::EmptyShard);
    }
    Ok(mlp::hidden_mean(&params.forward(shard.features().view())))
}

/// Loss and flat gradient of mean cross-entropy over a batch.
pub fn loss_and_gradient(params: &ModelParams, x: ArrayView2<'_, f64>, labels: &[usize]) -> (f64, Vec<f64>) {
    let acts = params.forward(x);
    let (loss, d_out) = softmax_xent(&acts.output, labels);
    (loss, params.backward(x, &acts, d_out.view()))
}

/// Exact gradient of mean cross-entropy over a batch.
pub fn gradient(params: &ModelParams, x: ArrayView2<'_, f64>, labels: &[usize]) -> Vec<f64> {
    loss_and_gradient(params, x, labels).1
}

/// Plain gradient-descent update `w -= lr * grad`.
pub fn descend(w: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in w.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Classification accuracy of `params` on `shard`, in [0, 1].
pub fn accuracy(params: &ModelParams, shard: &DatasetShard) -> f64 {
    if shard.is_empty() {
        return 0.0;
    }
    let out = params.predict(shard.features().view());
    let hits = out
        .axis_iter(Axis(0))
        .zip(shard.labels())
        .filter(|(row, &y)| argmax(row.iter().copied()) == y)
        .count();
    hits as f64 / shard.size() as f64
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn one_pass<R: Rng + ?Sized>(params: &mut ModelParams, shard: &DatasetShard, cfg: &TrainConfig, rng: &mut R) -> Result<()> {
    let n = shard.size();
    if cfg.batch_size == 0 || cfg.batch_size >= n {
        let (loss, grad) = loss_and_gradient(params, shard.features().view(), shard.labels());
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { loss });
        }
        descend(params.flat_mut(), &grad, cfg.lr);
        return Ok(());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for chunk in order.chunks(cfg.batch_size) {
        let batch = shard.select(chunk);
        let (loss, grad) = loss_and_gradient(params, batch.features().view(), batch.labels());
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { loss });
        }
        descend(params.flat_mut(), &grad, cfg.lr);
    }
    Ok(())
}

/// Runs `a` gradient-descent passes of `node` over its shard starting from
/// `params`, applying the node's attacker behaviour.
pub fn local_train_steps<R: Rng + ?Sized>(
    node: &DeviceNode,
    params: &ModelParams,
    a: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(ModelParams, TrainReport)> {
    let mut w = params.clone();
    if a > 0 {
        match node.malicious {
            AttackKind::Lazy => {}
            AttackKind::Honest => {
                for _ in 0..a {
                    one_pass(&mut w, &node.shard, cfg, rng)?;
                }
            }
            AttackKind::Noisy { std } => {
                for _ in 0..a {
                    one_pass(&mut w, &node.shard, cfg, rng)?;
                }
                let noise = Normal::new(0.0, std).map_err(|e| Error::BadConfig(e.to_string()))?;
                for v in w.flat_mut() {
                    *v += noise.sample(rng);
                }
            }
        }
    }
    let acts = w.forward(node.shard.features().view());
    let loss_after = xent_only(&acts.output, node.shard.labels());
    if !loss_after.is_finite() || !w.is_finite() {
        return Err(Error::NonFiniteLoss { loss: loss_after });
    }
    let report = TrainReport {
        loss_after,
        hidden_mean: mlp::hidden_mean(&acts),
        steps_done: a,
    };
    Ok((w, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Architecture;
    use crate::rng::{substream, Stream};
    use ndarray::array;

    fn node(shard: DatasetShard, params: ModelParams, malicious: AttackKind) -> DeviceNode {
        DeviceNode {
            id: 0,
            true_cpu_freq: 1.0,
            shard,
            params,
            energy_spent: 0.0,
            malicious,
        }
    }

    fn toy_shard() -> DatasetShard {
        DatasetShard::new(
            array![[0.5, -1.0, 0.2], [1.5, 0.3, -0.7], [-0.2, 0.8, 1.1], [0.0, -0.4, 0.9]],
            vec![0, 1, 2, 1],
        )
        .unwrap()
    }

    #[test]
    fn uniform_prediction_loss() {
        let p = ModelParams::zeros(Architecture::new(3, 4, 10));
        let shard = DatasetShard::new(array![[1.0, 2.0, 3.0]], vec![7]).unwrap();
        assert!((local_loss(&p, &shard).unwrap() - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_class_hand_loss() {
        let mut p = ModelParams::zeros(Architecture::new(1, 1, 2));
        p.set_b2(&[1.0, 0.0]);
        let shard = DatasetShard::new(array![[0.0]], vec![0]).unwrap();
        let e = std::f64::consts::E;
        let want = -(e / (e + 1.0)).ln();
        assert!((local_loss(&p, &shard).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn confident_fit_has_near_zero_loss_and_gradient() {
        let mut p = ModelParams::zeros(Architecture::new(1, 1, 2));
        p.set_b2(&[60.0, -60.0]);
        let shard = DatasetShard::new(array![[0.3], [0.9]], vec![0, 0]).unwrap();
        assert!(local_loss(&p, &shard).unwrap() < 1e-40);
        let g = gradient(&p, shard.features().view(), shard.labels());
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-9);
    }

    #[test]
    fn empty_shard_errors() {
        let p = ModelParams::zeros(Architecture::new(2, 2, 2));
        let empty = DatasetShard::new(Array2::zeros((0, 2)), vec![]).unwrap();
        assert!(matches!(local_loss(&p, &empty), Err(Error::EmptyShard)));
        assert!(matches!(hidden_layer_summary(&p, &empty), Err(Error::EmptyShard)));
    }

    #[test]
    fn quadratic_gd_step() {
        let mut w = [0.0];
        let grad = [2.0 * (w[0] - 3.0)];
        descend(&mut w, &grad, 0.1);
        assert!((w[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn hidden_summary_examples() {
        let shard = toy_shard();
        let zero = ModelParams::zeros(Architecture::new(3, 5, 3));
        assert_eq!(hidden_layer_summary(&zero, &shard).unwrap(), 0.0);

        let mut p = ModelParams::zeros(Architecture::new(2, 1, 2));
        p.set_w1_row(0, &[1.0, 1.0]);
        let one = DatasetShard::new(array![[2.0, 3.0]], vec![0]).unwrap();
        assert_eq!(hidden_layer_summary(&p, &one).unwrap(), 5.0);

        let mut rng = substream(1, Stream::ModelInit);
        let p = ModelParams::random(Architecture::new(3, 6, 3), &mut rng);
        let reversed = shard.select(&[3, 2, 1, 0]);
        let a = hidden_layer_summary(&p, &shard).unwrap();
        let b = hidden_layer_summary(&p, &reversed).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_is_identity_and_training_is_deterministic() {
        let mut rng = substream(2, Stream::ModelInit);
        let p = ModelParams::random(Architecture::new(3, 6, 3), &mut rng);
        let n = node(toy_shard(), p.clone(), AttackKind::Honest);
        let cfg = TrainConfig { lr: 0.1, batch_size: 2 };
        let (w, rep) = local_train_steps(&n, &p, 0, &cfg, &mut substream(3, Stream::Training)).unwrap();
        assert_eq!(w, p);
        assert_eq!(rep.steps_done, 0);

        let (w1, r1) = local_train_steps(&n, &p, 4, &cfg, &mut substream(3, Stream::Training)).unwrap();
        let (w2, r2) = local_train_steps(&n, &p, 4, &cfg, &mut substream(3, Stream::Training)).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(r1, r2);
        assert!(r1.loss_after < local_loss(&p, &n.shard).unwrap());
    }

    #[test]
    fn attackers() {
        let mut rng = substream(4, Stream::ModelInit);
        let p = ModelParams::random(Architecture::new(3, 6, 3), &mut rng);
        let cfg = TrainConfig::default();
        let lazy = node(toy_shard(), p.clone(), AttackKind::Lazy);
        let (w, _) = local_train_steps(&lazy, &p, 5, &cfg, &mut substream(5, Stream::Training)).unwrap();
        assert_eq!(w, p);

        let honest = node(toy_shard(), p.clone(), AttackKind::Honest);
        let noisy = node(toy_shard(), p.clone(), AttackKind::Noisy { std: 0.5 });
        let (wh, _) = local_train_steps(&honest, &p, 2, &cfg, &mut substream(5, Stream::Training)).unwrap();
        let (wn, _) = local_train_steps(&noisy, &p, 2, &cfg, &mut substream(5, Stream::Training)).unwrap();
        let dist: f64 = wh.flat_view().iter().zip(wn.flat_view()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dist > 1.0);
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = substream(6, Stream::ModelInit);
        let p = ModelParams::random(Architecture::new(3, 6, 3), &mut rng);
        let n = node(toy_shard(), p.clone(), AttackKind::Honest);
        let cfg = TrainConfig { lr: 1e200, batch_size: 0 };
        let r = local_train_steps(&n, &p, 3, &cfg, &mut substream(7, Stream::Training));
        assert!(matches!(r, Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let mut p = ModelParams::zeros(Architecture::new(1, 1, 2));
        p.set_b2(&[0.0, 1.0]);
        let shard = DatasetShard::new(array![[0.0], [0.0], [0.0], [0.0]], vec![1, 1, 0, 1]).unwrap();
        assert_eq!(accuracy(&p, &shard), 0.75);
    }
}
