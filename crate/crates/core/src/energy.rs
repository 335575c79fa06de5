//! Computation and communication energy, and the Markov channel process that
//! drives noise levels and packet failures.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Per-node energy constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    /// CPU cycles for one training pass.
    pub cycles_per_training: f64,
    pub n_cmp: f64,
    pub n_com: f64,
    /// Size of an upload, in bits.
    pub model_bits: f64,
}

/// One uplink sub-channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subchannel {
    pub time_fraction: f64,
    pub bandwidth: f64,
    pub tx_power: f64,
    pub gain: f64,
    pub noise_power: f64,
}

impl Subchannel {
    pub fn capacity(&self) -> f64 {
        self.time_fraction * self.bandwidth * (1.0 + self.tx_power * self.gain / self.noise_power).log2()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAllocation {
    pub entries: Vec<Subchannel>,
}

impl ChannelAllocation {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if self.entries.is_empty() {
            return bad("channel allocation is empty");
        }
        let mut share = 0.0;
        for e in &self.entries {
            if !(0.0..=1.0).contains(&e.time_fraction) {
                return bad("time fraction outside [0, 1]");
            }
            if !(e.bandwidth > 0.0 && e.noise_power > 0.0 && e.tx_power >= 0.0 && e.gain >= 0.0) {
                return bad("sub-channel needs W, I > 0 and p, h >= 0");
            }
            share += e.time_fraction;
        }
        if share > 1.0 + 1e-12 {
            return bad("time fractions sum above 1");
        }
        Ok(())
    }
}

/// Energy of `a` training passes at `cpu_freq`.
pub fn compute_energy(a: usize, model: &EnergyModel, cpu_freq: f64) -> f64 {
    a as f64 * model.n_cmp * model.cycles_per_training / cpu_freq
}

/// Energy to upload one model over `alloc`.
pub fn comm_energy(alloc: &ChannelAllocation, model: &EnergyModel) -> Result<f64> {
    let capacity: f64 = alloc.entries.iter().map(Subchannel::capacity).sum();
    if !(capacity > 1e-12) {
        return Err(Error::DegenerateChannel);
    }
    Ok(model.n_com * model.model_bits / capacity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelKind {
    Good = 0,
    Medium = 1,
    Bad = 2,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::Good, ChannelKind::Medium, ChannelKind::Bad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Good => "good",
            ChannelKind::Medium => "medium",
            ChannelKind::Bad => "bad",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Current channel state plus its transition law.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub state: ChannelKind,
    pub transition: [[f64; 3]; 3],
    pub p_good: f64,
}

/// Stationary distribution targeted for a given `p_good`.
pub fn stationary(p_good: f64) -> [f64; 3] {
    let rest = (1.0 - p_good) / 2.0;
    [p_good, rest, rest]
}

fn sample_row<R: Rng + ?Sized>(row: &[f64; 3], rng: &mut R) -> ChannelKind {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in ChannelKind::ALL.into_iter().zip(row) {
        acc += p;
        if x < acc {
            return k;
        }
    }
    // Rounding left a sliver above the last cumulative sum; take the last
    // state with positive mass.
    ChannelKind::ALL
        .into_iter()
        .zip(row)
        .rev()
        .find(|(_, &p)| p > 0.0)
        .map(|(k, _)| k)
        .unwrap_or(ChannelKind::Good)
}

impl ChannelState {
    /// Sticky chain `T = (1 - s) I + s 1 pi^T`, whose stationary law is
    /// `pi = (p_good, (1 - p_good)/2, (1 - p_good)/2)`. `mixing = s` in (0, 1]
    /// sets how fast the chain forgets its state; the start is drawn from `pi`.
    pub fn markov<R: Rng + ?Sized>(p_good: f64, mixing: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_good) || !(mixing > 0.0 && mixing <= 1.0) {
            return Err(Error::BadConfig(format!(
                "channel needs p_good in [0, 1] and mixing in (0, 1], got {p_good}, {mixing}"
            )));
        }
        let pi = stationary(p_good);
        let mut transition = [[0.0; 3]; 3];
        for (i, row) in transition.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = mixing * pi[j] + if i == j { 1.0 - mixing } else { 0.0 };
            }
        }
        let state = sample_row(&pi, rng);
        Ok(Self {
            state,
            transition,
            p_good,
        })
    }

    /// A chain frozen in `kind`.
    pub fn fixed(kind: ChannelKind) -> Self {
        let mut transition = [[0.0; 3]; 3];
        for (i, row) in transition.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self {
            state: kind,
            transition,
            p_good: if kind == ChannelKind::Good { 1.0 } else { 0.0 },
        }
    }
}

/// Moves the chain one step.
pub fn step_channel<R: Rng + ?Sized>(state: &ChannelState, rng: &mut R) -> ChannelState {
    let next = sample_row(&state.transition[state.state.index()], rng);
    ChannelState {
        state: next,
        ..state.clone()
    }
}

/// Radio constants and per-state noise/failure levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    /// Mean noise per state (good, medium, bad), in dB.
    pub noise_db: [f64; 3],
    /// Packet failure probability per state.
    pub failure_prob: [f64; 3],
    /// Linear noise power corresponding to 0 dB.
    pub noise_ref: f64,
    pub subchannels: usize,
    pub bandwidth: f64,
    pub tx_power: f64,
    pub gain: f64,
}

impl Default for ChannelProfile {
    fn default() -> Self {
        Self {
            noise_db: [0.1, 0.3, 0.5],
            failure_prob: [0.05, 0.15, 0.30],
            noise_ref: 1.0,
            subchannels: 1,
            bandwidth: 1.0,
            tx_power: 1.0,
            gain: 1.0,
        }
    }
}

impl ChannelProfile {
    pub fn validate(&self) -> Result<()> {
        if self.subchannels == 0 || !(self.noise_ref > 0.0) {
            return Err(Error::BadConfig("channel needs subchannels >= 1 and noise_ref > 0".into()));
        }
        if self.failure_prob.iter().any(|u| !(0.0..1.0).contains(u)) {
            return Err(Error::BadConfig("failure probabilities must lie in [0, 1)".into()));
        }
        self.allocation(0.0).validate()
    }

    fn allocation(&self, noise_db: f64) -> ChannelAllocation {
        let share = 1.0 / self.subchannels as f64;
        let noise_power = self.noise_ref * 10f64.powf(noise_db / 10.0);
        ChannelAllocation {
            entries: vec![
                Subchannel {
                    time_fraction: share,
                    bandwidth: self.bandwidth,
                    tx_power: self.tx_power,
                    gain: self.gain,
                    noise_power,
                };
                self.subchannels
            ],
        }
    }
}

/// Allocation at the state's mean noise level, and its failure probability.
pub fn channel_params_for(kind: ChannelKind, profile: &ChannelProfile) -> (ChannelAllocation, f64) {
    (
        profile.allocation(profile.noise_db[kind.index()]),
        profile.failure_prob[kind.index()],
    )
}

/// Noise level drawn as `Poisson(10 * mean_db) / 10`.
pub fn sample_noise_db<R: Rng + ?Sized>(mean_db: f64, rng: &mut R) -> f64 {
    if mean_db <= 0.0 {
        return 0.0;
    }
    let poisson = Poisson::new(10.0 * mean_db).expect("positive mean");
    poisson.sample(rng) / 10.0
}

/// Allocation with Poisson-jittered noise, and the state's failure probability.
pub fn jittered_params<R: Rng + ?Sized>(kind: ChannelKind, profile: &ChannelProfile, rng: &mut R) -> (ChannelAllocation, f64) {
    let db = sample_noise_db(profile.noise_db[kind.index()], rng);
    (profile.allocation(db), profile.failure_prob[kind.index()])
}
