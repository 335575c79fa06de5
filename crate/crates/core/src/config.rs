//! Simulation settings and the `section.key = value` configuration format.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; `dtfl print-defaults` lists them all in a form that parses back.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dqn::DqnConfig;
use crate::energy::{ChannelKind, ChannelProfile};
use crate::error::{Error, Result};
use crate::scenario::{DatasetKind, ScenarioConfig};
use crate::trainer::TrainConfig;

/// Per-node energy constants; the cycle count of one pass scales with shard size.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    pub cycles_per_sample: f64,
    pub n_cmp: f64,
    pub n_com: f64,
    pub model_bits: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            cycles_per_sample: 0.005,
            n_cmp: 1.0,
            n_com: 1.0,
            model_bits: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub profile: ChannelProfile,
    /// Stationary probability of the good state.
    pub p_good: f64,
    /// Per-step probability of redrawing the state from the stationary law.
    pub mixing: f64,
    /// Pin the channel to one state.
    pub fixed_state: Option<ChannelKind>,
    /// Poisson jitter on the noise level of each upload.
    pub jitter: bool,
    /// Charge expected retransmissions, `E_com / (1 - u)`.
    pub retransmit: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            profile: ChannelProfile::default(),
            p_good: 0.5,
            mixing: 0.3,
            fixed_state: None,
            jitter: true,
            retransmit: true,
        }
    }
}

/// Which learning-quality score enters the belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityMode {
    /// Inverse distance to the upload mean, normalised.
    Closeness,
    /// Distance to the upload mean, normalised.
    Distance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustConfig {
    /// Weight `iota` of the failure probability in the reputation.
    pub iota: f64,
    pub flag_threshold: f64,
    pub quality_mode: QualityMode,
    /// Interactions summed into the reputation; 0 keeps the whole history.
    pub window: usize,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self {
            iota: 0.0,
            flag_threshold: 0.99,
            quality_mode: QualityMode::Closeness,
            window: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetConfig {
    pub v0: f64,
    pub v_growth: f64,
    /// Shrink or skip a round whose projected cost would overrun the budget.
    pub predictive_halt: bool,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            v0: 100.0,
            v_growth: 0.02,
            predictive_halt: true,
        }
    }
}

/// Settings of the single-cluster environment the agents train in.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Steps per training episode; 0 uses `scenario.rounds_max`.
    pub episode_len: usize,
    /// Append the channel state to the observation.
    pub observe_channel: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_len: 0,
            observe_channel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    AsyncDqn,
    SyncFixed,
    AsyncFixed,
}

/// Frequency policy of a federation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    AsyncDqn,
    SyncFixed(usize),
    AsyncFixed(usize),
}

impl Mode {
    pub fn label(&self) -> String {
        match self {
            Mode::AsyncDqn => "async_dqn".into(),
            Mode::SyncFixed(t) => format!("sync_fixed_{t}"),
            Mode::AsyncFixed(t) => format!("async_fixed_{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub mode: ModeKind,
    pub fixed_t: usize,
    /// Global epochs; 0 uses `scenario.rounds_max`.
    pub rounds: usize,
    pub alpha0: f64,
    pub rho: f64,
    pub alpha_max: f64,
    /// Epochs between global merges.
    pub global_every: usize,
    /// Add the twin deviation back to mapped frequencies.
    pub calibrated: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            mode: ModeKind::AsyncDqn,
            fixed_t: 5,
            rounds: 0,
            alpha0: 0.5,
            rho: 0.05,
            alpha_max: 1.0,
            global_every: 1,
            calibrated: true,
        }
    }
}

impl FederationConfig {
    pub fn run_mode(&self) -> Mode {
        match self.mode {
            ModeKind::AsyncDqn => Mode::AsyncDqn,
            ModeKind::SyncFixed => Mode::SyncFixed(self.fixed_t),
            ModeKind::AsyncFixed => Mode::AsyncFixed(self.fixed_t),
        }
    }
}

/// Everything a single federation run needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub energy: EnergyConfig,
    pub channel: ChannelConfig,
    pub trust: TrustConfig,
    pub budget: BudgetConfig,
    pub dqn: DqnConfig,
    pub env: EnvConfig,
    pub federation: FederationConfig,
}

impl SimConfig {
    pub fn rounds(&self) -> usize {
        if self.federation.rounds == 0 {
            self.scenario.rounds_max
        } else {
            self.federation.rounds
        }
    }

    pub fn episode_len(&self) -> usize {
        if self.env.episode_len == 0 {
            self.scenario.rounds_max
        } else {
            self.env.episode_len
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.dqn.validate()?;
        self.channel.profile.validate()?;
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if !(self.train.lr > 0.0) {
            return bad("train.lr must be positive");
        }
        let e = &self.energy;
        if !(e.cycles_per_sample > 0.0 && e.n_cmp > 0.0 && e.n_com > 0.0 && e.model_bits > 0.0) {
            return bad("energy constants must be positive");
        }
        if !(0.0..=1.0).contains(&self.channel.p_good) || !(self.channel.mixing > 0.0 && self.channel.mixing <= 1.0) {
            return bad("channel.p_good must lie in [0, 1] and channel.mixing in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.trust.iota) {
            return bad("trust.iota must lie in [0, 1]");
        }
        if !(self.budget.v0 > 0.0) || self.budget.v_growth < 0.0 {
            return bad("budget.v0 must be positive and budget.v_growth non-negative");
        }
        let f = &self.federation;
        if !(f.alpha0 > 0.0 && f.alpha0 <= f.alpha_max && f.alpha_max <= 1.0) || f.rho < 0.0 {
            return bad("federation needs 0 < alpha0 <= alpha_max <= 1 and rho >= 0");
        }
        if f.global_every == 0 {
            return bad("federation.global_every must be at least 1");
        }
        if f.mode != ModeKind::AsyncDqn && f.fixed_t == 0 {
            return bad("federation.fixed_t must be at least 1");
        }
        Ok(())
    }
}

/// What `dtfl run` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// One federation run per seed in the configured mode.
    Run,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    All,
}

impl ExperimentKind {
    const NAMES: [(&'static str, ExperimentKind); 9] = [
        ("run", ExperimentKind::Run),
        ("fig2", ExperimentKind::Fig2),
        ("fig3", ExperimentKind::Fig3),
        ("fig4", ExperimentKind::Fig4),
        ("fig5", ExperimentKind::Fig5),
        ("fig6", ExperimentKind::Fig6),
        ("fig7", ExperimentKind::Fig7),
        ("fig8", ExperimentKind::Fig8),
        ("all", ExperimentKind::All),
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Number of seeds, counting up from `scenario.seed`.
    pub repeats: usize,
    pub p_good_sweep: Vec<f64>,
    pub cluster_sweep: Vec<usize>,
    pub fixed_sweep: Vec<usize>,
    pub output_dir: PathBuf,
    /// Also write reputation, budget and channel CSVs per run.
    pub detail_csvs: bool,
    /// Accuracy that counts as "reached" for time-to-accuracy.
    pub accuracy_target: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Run,
            repeats: 3,
            p_good_sweep: vec![0.2, 0.4, 0.6, 0.8],
            cluster_sweep: vec![1, 2, 4],
            fixed_sweep: vec![1, 5, 10],
            output_dir: PathBuf::from("out"),
            detail_csvs: false,
            accuracy_target: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentSpec {
    pub sim: SimConfig,
    pub experiment: ExperimentConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let x = &self.experiment;
        if x.repeats == 0 {
            return Err(Error::BadConfig("experiment.repeats must be at least 1".into()));
        }
        if x.p_good_sweep.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::BadConfig("experiment.p_good_sweep values must lie in [0, 1]".into()));
        }
        if x.cluster_sweep.iter().any(|&k| k == 0 || k > self.sim.scenario.num_nodes) {
            return Err(Error::BadConfig("experiment.cluster_sweep values must lie in [1, num_nodes]".into()));
        }
        if x.fixed_sweep.contains(&0) {
            return Err(Error::BadConfig("experiment.fixed_sweep values must be positive".into()));
        }
        Ok(())
    }
}

/// A value that can appear on the right-hand side of a config line.
trait ConfigValue {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String>;
    fn render(&self) -> String;
}

macro_rules! parsed_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
                *self = s.parse().map_err(|e| format!("`{s}`: {e}"))?;
                Ok(())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

parsed_value!(usize, u64, f64, bool);

impl ConfigValue for PathBuf {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = PathBuf::from(s);
        Ok(())
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl<T: ConfigValue + Default> ConfigValue for Vec<T> {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let mut v = T::default();
            v.parse_into(part)?;
            out.push(v);
        }
        *self = out;
        Ok(())
    }
    fn render(&self) -> String {
        self.iter().map(ConfigValue::render).collect::<Vec<_>>().join(", ")
    }
}

fn parse_name<T: Copy>(s: &str, names: &[(&str, T)]) -> std::result::Result<T, String> {
    names.iter().find(|(n, _)| *n == s).map(|(_, v)| *v).ok_or_else(|| {
        let options: Vec<&str> = names.iter().map(|(n, _)| *n).collect();
        format!("`{s}` is not one of {}", options.join(", "))
    })
}

fn render_name<T: Copy + PartialEq>(v: T, names: &[(&'static str, T)]) -> String {
    names.iter().find(|(_, x)| *x == v).map(|(n, _)| n.to_string()).unwrap_or_default()
}

macro_rules! named_value {
    ($t:ty, $names:expr) => {
        impl ConfigValue for $t {
            fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
                *self = parse_name(s, &$names)?;
                Ok(())
            }
            fn render(&self) -> String {
                render_name(*self, &$names)
            }
        }
    };
}

named_value!(DatasetKind, [("synthetic", DatasetKind::Synthetic), ("idx", DatasetKind::Idx)]);
named_value!(
    QualityMode,
    [("closeness", QualityMode::Closeness), ("distance", QualityMode::Distance)]
);
named_value!(
    ModeKind,
    [
        ("async_dqn", ModeKind::AsyncDqn),
        ("sync_fixed", ModeKind::SyncFixed),
        ("async_fixed", ModeKind::AsyncFixed)
    ]
);
named_value!(ExperimentKind, ExperimentKind::NAMES);

impl ConfigValue for Option<ChannelKind> {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = match s {
            "none" => None,
            other => Some(ChannelKind::parse(other).ok_or_else(|| format!("`{s}` is not one of none, good, medium, bad"))?),
        };
        Ok(())
    }
    fn render(&self) -> String {
        self.map_or("none", ChannelKind::name).to_string()
    }
}

impl ConfigValue for [f64; 3] {
    fn parse_into(&mut self, s: &str) -> std::result::Result<(), String> {
        let mut v: Vec<f64> = Vec::new();
        v.parse_into(s)?;
        *self = v.try_into().map_err(|_| format!("`{s}`: expected three values (good, medium, bad)"))?;
        Ok(())
    }
    fn render(&self) -> String {
        self.to_vec().render()
    }
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+;)*) => {
        fn set_key(spec: &mut ExperimentSpec, key: &str, value: &str) -> Option<std::result::Result<(), String>> {
            match key {
                $($key => Some(ConfigValue::parse_into(&mut spec.$($field).+, value)),)*
                _ => None,
            }
        }

        fn render_keys(spec: &ExperimentSpec) -> Vec<(&'static str, String)> {
            vec![$(($key, ConfigValue::render(&spec.$($field).+)),)*]
        }
    };
}

keys! {
    "scenario.num_nodes" => sim.scenario.num_nodes;
    "scenario.num_clusters" => sim.scenario.num_clusters;
    "scenario.seed" => sim.scenario.seed;
    "scenario.budget_total" => sim.scenario.budget_total;
    "scenario.budget_fraction" => sim.scenario.budget_fraction;
    "scenario.num_classes" => sim.scenario.num_classes;
    "scenario.rounds_max" => sim.scenario.rounds_max;
    "scenario.dataset" => sim.scenario.dataset;
    "scenario.features" => sim.scenario.synthetic.features;
    "scenario.samples_per_node" => sim.scenario.synthetic.samples_per_node;
    "scenario.test_samples" => sim.scenario.synthetic.test_samples;
    "scenario.class_sep" => sim.scenario.synthetic.class_sep;
    "scenario.noise_std" => sim.scenario.synthetic.noise_std;
    "scenario.idx_images" => sim.scenario.idx.images;
    "scenario.idx_labels" => sim.scenario.idx.labels;
    "scenario.idx_test_samples" => sim.scenario.idx.test_samples;
    "scenario.label_skew" => sim.scenario.label_skew;
    "scenario.hidden_dim" => sim.scenario.hidden_dim;
    "scenario.cpu_freq_min" => sim.scenario.cpu_freq_min;
    "scenario.cpu_freq_max" => sim.scenario.cpu_freq_max;
    "scenario.deviation_lo" => sim.scenario.deviation_lo;
    "scenario.deviation_hi" => sim.scenario.deviation_hi;
    "scenario.noisy_attackers" => sim.scenario.noisy_attackers;
    "scenario.lazy_attackers" => sim.scenario.lazy_attackers;
    "scenario.attacker_noise_std" => sim.scenario.attacker_noise_std;
    "train.lr" => sim.train.lr;
    "train.batch_size" => sim.train.batch_size;
    "energy.cycles_per_sample" => sim.energy.cycles_per_sample;
    "energy.n_cmp" => sim.energy.n_cmp;
    "energy.n_com" => sim.energy.n_com;
    "energy.model_bits" => sim.energy.model_bits;
    "channel.p_good" => sim.channel.p_good;
    "channel.mixing" => sim.channel.mixing;
    "channel.fixed_state" => sim.channel.fixed_state;
    "channel.jitter" => sim.channel.jitter;
    "channel.retransmit" => sim.channel.retransmit;
    "channel.noise_db" => sim.channel.profile.noise_db;
    "channel.failure_prob" => sim.channel.profile.failure_prob;
    "channel.noise_ref" => sim.channel.profile.noise_ref;
    "channel.subchannels" => sim.channel.profile.subchannels;
    "channel.bandwidth" => sim.channel.profile.bandwidth;
    "channel.tx_power" => sim.channel.profile.tx_power;
    "channel.gain" => sim.channel.profile.gain;
    "trust.iota" => sim.trust.iota;
    "trust.flag_threshold" => sim.trust.flag_threshold;
    "trust.quality_mode" => sim.trust.quality_mode;
    "trust.window" => sim.trust.window;
    "budget.v0" => sim.budget.v0;
    "budget.v_growth" => sim.budget.v_growth;
    "budget.predictive_halt" => sim.budget.predictive_halt;
    "dqn.gamma" => sim.dqn.gamma;
    "dqn.epsilon0" => sim.dqn.epsilon0;
    "dqn.epsilon_growth" => sim.dqn.epsilon_growth;
    "dqn.epsilon_max" => sim.dqn.epsilon_max;
    "dqn.target_update_every" => sim.dqn.target_update_every;
    "dqn.batch_size" => sim.dqn.batch_size;
    "dqn.lr" => sim.dqn.lr;
    "dqn.capacity" => sim.dqn.capacity;
    "dqn.episodes" => sim.dqn.episodes;
    "dqn.hidden" => sim.dqn.hidden;
    "dqn.a_max" => sim.dqn.a_max;
    "dqn.normalize_rewards" => sim.dqn.normalize_rewards;
    "dqn.max_env_steps" => sim.dqn.max_env_steps;
    "dqn.episode_len" => sim.env.episode_len;
    "dqn.observe_channel" => sim.env.observe_channel;
    "federation.mode" => sim.federation.mode;
    "federation.fixed_t" => sim.federation.fixed_t;
    "federation.rounds" => sim.federation.rounds;
    "federation.alpha0" => sim.federation.alpha0;
    "federation.rho" => sim.federation.rho;
    "federation.alpha_max" => sim.federation.alpha_max;
    "federation.global_every" => sim.federation.global_every;
    "federation.calibrated" => sim.federation.calibrated;
    "experiment.kind" => experiment.kind;
    "experiment.repeats" => experiment.repeats;
    "experiment.p_good_sweep" => experiment.p_good_sweep;
    "experiment.cluster_sweep" => experiment.cluster_sweep;
    "experiment.fixed_sweep" => experiment.fixed_sweep;
    "experiment.output_dir" => experiment.output_dir;
    "experiment.detail_csvs" => experiment.detail_csvs;
    "experiment.accuracy_target" => experiment.accuracy_target;
}

/// Applies the lines of `text` on top of `base` without validating.
pub fn apply_config_text(base: ExperimentSpec, text: &str) -> Result<ExperimentSpec> {
    let mut spec = base;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected `section.key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match set_key(&mut spec, key, value) {
            None => {
                return Err(Error::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                })
            }
            Some(Err(msg)) => return Err(Error::Parse { line: line_no, msg: format!("{key}: {msg}") }),
            Some(Ok(())) => {}
        }
    }
    Ok(spec)
}

/// Parses config text over the defaults and validates the result.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec> {
    let spec = apply_config_text(ExperimentSpec::default(), text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// Every key with its value, one per line, grouped by section.
pub fn render_config(spec: &ExperimentSpec) -> String {
    let mut out = String::new();
    let mut section = "";
    for (key, value) in render_keys(spec) {
        let this = key.split('.').next().unwrap_or("");
        if this != section {
            if !section.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "# {this}");
            section = this;
        }
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

pub fn print_defaults() -> String {
    render_config(&ExperimentSpec::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config_str("").unwrap(), ExperimentSpec::default());
        assert_eq!(parse_config_str("# only a comment\n\n").unwrap(), ExperimentSpec::default());
    }

    #[test]
    fn assignment() {
        let spec = parse_config_str("scenario.num_nodes = 20\nexperiment.fixed_sweep = 1, 2\nchannel.fixed_state = bad").unwrap();
        assert_eq!(spec.sim.scenario.num_nodes, 20);
        assert_eq!(spec.experiment.fixed_sweep, vec![1, 2]);
        assert_eq!(spec.sim.channel.fixed_state, Some(ChannelKind::Bad));
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_config_str("\nscenario.bogus = 1") {
            Err(Error::UnknownKey { line, key }) => assert_eq!((line, key.as_str()), (2, "scenario.bogus")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config_str("scenario.num_nodes = x"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config_str("no equals sign"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_config_str("scenario.num_nodes = 20\nscenario.num_clusters = 30"),
            Err(Error::BadConfig(_))
        ));
    }

    #[test]
    fn defaults_round_trip() {
        let text = print_defaults();
        assert_eq!(parse_config_str(&text).unwrap(), ExperimentSpec::default());
        let mut spec = ExperimentSpec::default();
        spec.sim.federation.mode = ModeKind::SyncFixed;
        spec.sim.channel.fixed_state = Some(ChannelKind::Medium);
        spec.experiment.p_good_sweep = vec![0.25];
        assert_eq!(parse_config_str(&render_config(&spec)).unwrap(), spec);
    }
}
