//! Scenario model: devices, their digital twins, and the seeded
//! construction of both from a [`ScenarioConfig`].

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::dataset::{self, BlobSpec, DatasetShard};
use crate::error::{Error, Result};
use crate::mlp::{Architecture, ModelParams};
use crate::rng::{substream, Stream};
use crate::trainer;

/// Attacker model attached to a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    Honest,
    /// Skips training and uploads the parameters it was given.
    Lazy,
    /// Adds zero-mean Gaussian noise with this std to its trained parameters.
    Noisy { std: f64 },
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackKind::Honest => write!(f, "honest"),
            AttackKind::Lazy => write!(f, "lazy"),
            AttackKind::Noisy { std } => write!(f, "noisy:{std}"),
        }
    }
}

/// A physical trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceNode {
    pub id: usize,
    /// Actual CPU frequency, in cycles per time unit.
    pub true_cpu_freq: f64,
    pub shard: DatasetShard,
    pub params: ModelParams,
    /// Energy spent so far; only ever increases.
    pub energy_spent: f64,
    pub malicious: AttackKind,
}

/// The server-side mirror of a device: `{F(w), f, E}` plus the frequency
/// deviation between the device and its mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalTwin {
    pub node_id: usize,
    pub mapped_loss: f64,
    pub mapped_cpu_freq: f64,
    pub mapped_energy: f64,
    pub deviation: f64,
}

/// Frequency after self-calibration: mapped value plus the empirical deviation.
pub fn calibrate_twin(twin: &DigitalTwin) -> f64 {
    twin.mapped_cpu_freq + twin.deviation
}

/// Draws a twin deviation from `Uniform[lo, hi]`.
pub fn sample_dt_deviation<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Result<f64> {
    if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::BadRange { lo, hi });
    }
    if lo == hi {
        return Ok(lo);
    }
    let dist = Uniform::new_inclusive(lo, hi).map_err(|_| Error::BadRange { lo, hi })?;
    Ok(dist.sample(rng))
}

/// Where the training data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Idx,
}

/// Gaussian-blob dataset with `samples_per_node * num_nodes` training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub features: usize,
    pub samples_per_node: usize,
    pub test_samples: usize,
    pub class_sep: f64,
    pub noise_std: f64,
}

/// IDX image/label pair; the last `test_samples` samples are held out.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxSpec {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub test_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_nodes: usize,
    pub num_clusters: usize,
    pub seed: u64,
    /// Total resource budget `R_m`.
    pub budget_total: f64,
    /// Fraction `beta` of the budget that may be consumed.
    pub budget_fraction: f64,
    pub num_classes: usize,
    pub rounds_max: usize,
    pub dataset: DatasetKind,
    pub synthetic: SyntheticSpec,
    pub idx: IdxSpec,
    /// Fraction of a node's samples drawn from its dominant class.
    pub label_skew: f64,
    pub hidden_dim: usize,
    pub cpu_freq_min: f64,
    pub cpu_freq_max: f64,
    pub deviation_lo: f64,
    pub deviation_hi: f64,
    pub noisy_attackers: usize,
    pub lazy_attackers: usize,
    pub attacker_noise_std: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_nodes: 20,
            num_clusters: 4,
            seed: 0,
            budget_total: 6000.0,
            budget_fraction: 0.8,
            num_classes: 10,
            rounds_max: 50,
            dataset: DatasetKind::Synthetic,
            synthetic: SyntheticSpec {
                features: 10,
                samples_per_node: 200,
                test_samples: 1000,
                class_sep: 1.5,
                noise_std: 1.0,
            },
            idx: IdxSpec {
                images: PathBuf::from("train-images-idx3-ubyte"),
                labels: PathBuf::from("train-labels-idx1-ubyte"),
                test_samples: 1000,
            },
            label_skew: 0.5,
            hidden_dim: 200,
            cpu_freq_min: 0.5,
            cpu_freq_max: 2.0,
            deviation_lo: 0.0,
            deviation_hi: 0.2,
            noisy_attackers: 0,
            lazy_attackers: 0,
            attacker_noise_std: 0.5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadConfig(msg));
        if self.num_nodes == 0 {
            return bad("num_nodes must be at least 1".into());
        }
        if self.num_clusters == 0 || self.num_clusters > self.num_nodes {
            return bad(format!(
                "num_clusters = {} must lie in [1, num_nodes = {}]",
                self.num_clusters, self.num_nodes
            ));
        }
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return bad(format!("budget_fraction = {} outside (0, 1]", self.budget_fraction));
        }
        if !(self.budget_total > 0.0) {
            return bad("budget_total must be positive".into());
        }
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1".into());
        }
        if self.rounds_max == 0 {
            return bad("rounds_max must be at least 1".into());
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.label_skew) {
            return bad(format!("label_skew = {} outside [0, 1]", self.label_skew));
        }
        if !(self.cpu_freq_min > 0.0 && self.cpu_freq_min <= self.cpu_freq_max) {
            return bad("cpu frequencies need 0 < min <= max".into());
        }
        if !(self.deviation_lo >= 0.0 && self.deviation_lo <= self.deviation_hi) {
            return Err(Error::BadRange {
                lo: self.deviation_lo,
                hi: self.deviation_hi,
            });
        }
        if self.deviation_hi >= self.cpu_freq_min {
            return bad("deviation_hi must stay below cpu_freq_min so mapped frequencies stay positive".into());
        }
        if self.noisy_attackers + self.lazy_attackers > self.num_nodes {
            return bad("more attackers than nodes".into());
        }
        if self.dataset == DatasetKind::Synthetic && (self.synthetic.features == 0 || self.synthetic.samples_per_node == 0) {
            return bad("synthetic dataset needs features and samples".into());
        }
        Ok(())
    }

    /// Attacker tag of node `id`: noisy attackers take the highest ids, lazy ones the ids just below.
    pub fn attack_kind(&self, id: usize) -> AttackKind {
        let n = self.num_nodes;
        if id >= n - self.noisy_attackers {
            AttackKind::Noisy {
                std: self.attacker_noise_std,
            }
        } else if id >= n - self.noisy_attackers - self.lazy_attackers {
            AttackKind::Lazy
        } else {
            AttackKind::Honest
        }
    }
}

/// Immutable product of [`init_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub nodes: Vec<DeviceNode>,
    pub twins: Vec<DigitalTwin>,
    pub test_set: DatasetShard,
    /// The global model `w_0` broadcast to every node.
    pub initial_params: ModelParams,
}

impl Scenario {
    pub fn architecture(&self) -> Architecture {
        self.initial_params.arch()
    }

    pub fn twin(&self, node_id: usize) -> &DigitalTwin {
        &self.twins[node_id]
    }
}

fn load_source(config: &ScenarioConfig) -> Result<(DatasetShard, DatasetShard)> {
    match config.dataset {
        DatasetKind::Synthetic => {
            let syn = &config.synthetic;
            let spec = BlobSpec {
                features: syn.features,
                num_classes: config.num_classes,
                train_samples: syn.samples_per_node * config.num_nodes,
                test_samples: syn.test_samples,
                class_sep: syn.class_sep,
                noise_std: syn.noise_std,
            };
            dataset::synthetic_blobs(&spec, &mut substream(config.seed, Stream::Data))
        }
        DatasetKind::Idx => {
            let all = dataset::load_idx_dataset(&config.idx.images, &config.idx.labels)?;
            if let Some(&bad) = all.labels().iter().find(|&&y| y >= config.num_classes) {
                return Err(Error::BadConfig(format!(
                    "IDX label {bad} outside num_classes = {}",
                    config.num_classes
                )));
            }
            Ok(all.split_tail(config.idx.test_samples))
        }
    }
}

/// Builds devices, shards, twins and `w_0` from `config`. Pure in `config`.
pub fn init_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let (train, test_set) = load_source(config)?;
    let shards = dataset::partition(
        &train,
        config.num_nodes,
        config.num_classes,
        config.label_skew,
        &mut substream(config.seed, Stream::Partition),
    )?;

    let arch = Architecture::new(train.dim(), config.hidden_dim, config.num_classes);
    let initial_params = ModelParams::random(arch, &mut substream(config.seed, Stream::ModelInit));

    let mut hw_rng = substream(config.seed, Stream::Hardware);
    let mut dev_rng = substream(config.seed, Stream::Deviation);
    let freq = Uniform::new_inclusive(config.cpu_freq_min, config.cpu_freq_max)
        .map_err(|e| Error::BadConfig(e.to_string()))?;

    let mut nodes = Vec::with_capacity(config.num_nodes);
    let mut twins = Vec::with_capacity(config.num_nodes);
    for (id, shard) in shards.into_iter().enumerate() {
        let true_cpu_freq = freq.sample(&mut hw_rng);
        let deviation = sample_dt_deviation(&mut dev_rng, config.deviation_lo, config.deviation_hi)?;
        let mapped_loss = trainer::local_loss(&initial_params, &shard)?;
        twins.push(DigitalTwin {
            node_id: id,
            mapped_loss,
            mapped_cpu_freq: true_cpu_freq - deviation,
            mapped_energy: 0.0,
            deviation,
        });
        nodes.push(DeviceNode {
            id,
            true_cpu_freq,
            shard,
            params: initial_params.clone(),
            energy_spent: 0.0,
            malicious: config.attack_kind(id),
        });
    }

    Ok(Scenario {
        config: config.clone(),
        nodes,
        twins,
        test_set,
        initial_params,
    })
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn write_shard(out: &mut String, prefix: &str, shard: &DatasetShard) {
    let _ = writeln!(out, "{prefix}.size = {}", shard.size());
    for i in 0..shard.size() {
        let (x, y) = shard.sample(i);
        let _ = writeln!(out, "{prefix}.sample.{i} = {y} | {}", join(&x));
    }
}

/// Line-per-field text dump with a fixed field order; used for golden tests.
pub fn serialize_scenario(s: &Scenario) -> String {
    let c = &s.config;
    let mut out = String::new();
    let _ = writeln!(out, "scenario.num_nodes = {}", c.num_nodes);
    let _ = writeln!(out, "scenario.num_clusters = {}", c.num_clusters);
    let _ = writeln!(out, "scenario.seed = {}", c.seed);
    let _ = writeln!(out, "scenario.budget_total = {}", c.budget_total);
    let _ = writeln!(out, "scenario.budget_fraction = {}", c.budget_fraction);
    let _ = writeln!(out, "scenario.num_classes = {}", c.num_classes);
    let _ = writeln!(out, "scenario.rounds_max = {}", c.rounds_max);
    let _ = writeln!(out, "scenario.label_skew = {}", c.label_skew);
    let arch = s.architecture();
    let _ = writeln!(out, "model.arch = {} {} {}", arch.input, arch.hidden, arch.output);
    let _ = writeln!(out, "model.w0 = {}", join(s.initial_params.flat_view()));
    for (node, twin) in s.nodes.iter().zip(&s.twins) {
        let p = format!("node.{}", node.id);
        let _ = writeln!(out, "{p}.true_cpu_freq = {}", node.true_cpu_freq);
        let _ = writeln!(out, "{p}.energy_spent = {}", node.energy_spent);
        let _ = writeln!(out, "{p}.malicious = {}", node.malicious);
        write_shard(&mut out, &format!("{p}.shard"), &node.shard);
        let t = format!("twin.{}", twin.node_id);
        let _ = writeln!(out, "{t}.mapped_loss = {}", twin.mapped_loss);
        let _ = writeln!(out, "{t}.mapped_cpu_freq = {}", twin.mapped_cpu_freq);
        let _ = writeln!(out, "{t}.mapped_energy = {}", twin.mapped_energy);
        let _ = writeln!(out, "{t}.deviation = {}", twin.deviation);
    }
    write_shard(&mut out, "test", &s.test_set);
    out
}
