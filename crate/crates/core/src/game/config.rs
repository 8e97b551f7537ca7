use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agents::{ConvArch, SenderArch};
use crate::data::{cifar, DatasetSpec, Source, Split};
use crate::inference::InferenceConfig;
use crate::learner::PpoConfig;
use crate::probe::ProbeConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Manipulation,
    ManipulationThenCooperation,
    Cooperation,
    Part2Behaviorist,
    Part2Inferential,
    Part2AblatePref,
}

impl Regime {
    pub fn is_part2(self) -> bool {
        matches!(self, Regime::Part2Behaviorist | Regime::Part2Inferential | Regime::Part2AblatePref)
    }

    /// Senders select pictographs and receivers infer referents.
    pub fn is_inferential(self) -> bool {
        matches!(self, Regime::Part2Inferential | Regime::Part2AblatePref)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Manipulation => "manipulation",
            Regime::ManipulationThenCooperation => "manipulation_then_cooperation",
            Regime::Cooperation => "cooperation",
            Regime::Part2Behaviorist => "part2_behaviorist",
            Regime::Part2Inferential => "part2_inferential",
            Regime::Part2AblatePref => "part2_ablate_pref",
        }
    }
}

/// A class given by dataset label id or, for CIFAR-100, by fine-label name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassRef {
    Id(u32),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub source: Source,
    /// Defaults to all ten MNIST digits or the ten default CIFAR-100 classes.
    pub classes: Option<Vec<ClassRef>>,
    /// 0 keeps every sample.
    pub max_samples: usize,
    /// Overrides `$SIGG_DATA_DIR`.
    pub root: Option<PathBuf>,
    /// Canvas background; Part II defaults to the dataset mean.
    pub background: Option<f64>,
    pub ink: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { source: Source::Mnist, classes: None, max_samples: 0, root: None, background: None, ink: None }
    }
}

impl DatasetConfig {
    pub fn class_ids(&self) -> Result<Vec<u32>, String> {
        match (&self.classes, self.source) {
            (None, Source::Mnist) => Ok((0..10).collect()),
            (None, Source::Cifar100) => Ok(cifar::DEFAULT_CLASSES
                .iter()
                .map(|n| cifar::fine_label_id(n).expect("default class exists"))
                .collect()),
            (Some(list), source) => list
                .iter()
                .map(|c| match c {
                    ClassRef::Id(id) => Ok(*id),
                    ClassRef::Name(name) if source == Source::Cifar100 => cifar::fine_label_id(name)
                        .ok_or_else(|| format!("dataset.classes: unknown CIFAR-100 class \"{name}\"")),
                    ClassRef::Name(name) => Err(format!("dataset.classes: MNIST classes are digits, got \"{name}\"")),
                })
                .collect(),
        }
    }

    pub fn spec(&self) -> Result<DatasetSpec, String> {
        Ok(DatasetSpec {
            source: self.source,
            class_subset: self.class_ids()?,
            max_samples: self.max_samples,
            split: Split::Train,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub plateau_acc: f64,
    pub plateau_window: usize,
    pub ramp_epochs: usize,
    pub comm_fraction_max: f64,
    /// Communication starts after this many epochs even without a plateau.
    pub max_solipsistic_epochs: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            plateau_acc: 0.9,
            plateau_window: 10,
            ramp_epochs: 50,
            comm_fraction_max: 0.5,
            max_solipsistic_epochs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub regime: Option<Regime>,
    /// Defaults to 5 (Part I) or 10 (Part II).
    pub population: Option<usize>,
    pub seed: u64,
    pub epochs: usize,
    pub rounds_per_epoch: usize,
    /// Bézier curves per signal; defaults to 2 (Part I) or 3 (Part II).
    pub curves: Option<usize>,
    pub noise_sigma: f64,
    pub entropy_bonus: f64,
    pub lambda_curve: f64,
    pub lambda_size: f64,
    /// Communication epochs of manipulation before cooperation begins.
    pub switch_epoch: usize,
    pub env_wrong_reward: f64,
    pub coop_wrong_reward: f64,
    pub checkpoint_every: usize,
    pub probe_enabled: bool,
    pub dataset: DatasetConfig,
    pub schedule: ScheduleConfig,
    pub ppo: PpoConfig,
    pub inference: InferenceConfig,
    pub probe: ProbeConfig,
    pub receiver_arch: ConvArch,
    pub sender_arch: SenderArch,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            regime: None,
            population: None,
            seed: 0,
            epochs: 100,
            rounds_per_epoch: 512,
            curves: None,
            noise_sigma: 0.05,
            entropy_bonus: 0.5,
            lambda_curve: 0.0,
            lambda_size: 0.0,
            switch_epoch: 300,
            env_wrong_reward: -0.1,
            coop_wrong_reward: 0.0,
            checkpoint_every: 50,
            probe_enabled: true,
            dataset: DatasetConfig::default(),
            schedule: ScheduleConfig::default(),
            ppo: PpoConfig::default(),
            inference: InferenceConfig::default(),
            probe: ProbeConfig::default(),
            receiver_arch: ConvArch::default(),
            sender_arch: SenderArch::default(),
        }
    }
}

fn unit(name: &str, v: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} must be in [0, 1], got {v}"))
    }
}

impl RunConfig {
    /// Checks every field and fills regime-dependent defaults.
    pub fn validate(mut self) -> Result<Self, String> {
        let regime = self.regime.ok_or("regime missing")?;
        let population = *self.population.get_or_insert(if regime.is_part2() { 10 } else { 5 });
        if population < 2 {
            return Err("population must be ≥ 2".into());
        }
        let curves = *self.curves.get_or_insert(if regime.is_part2() { 3 } else { 2 });
        if curves == 0 {
            return Err("curves must be ≥ 1".into());
        }
        if self.epochs == 0 {
            return Err("epochs must be ≥ 1".into());
        }
        if self.rounds_per_epoch == 0 {
            return Err("rounds_per_epoch must be ≥ 1".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(format!("noise_sigma must be ≥ 0, got {}", self.noise_sigma));
        }
        for (name, v) in [
            ("entropy_bonus", self.entropy_bonus),
            ("lambda_curve", self.lambda_curve),
            ("lambda_size", self.lambda_size),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be ≥ 0, got {v}"));
            }
        }
        unit("schedule.plateau_acc", self.schedule.plateau_acc)?;
        unit("schedule.comm_fraction_max", self.schedule.comm_fraction_max)?;
        if self.schedule.plateau_window == 0 {
            return Err("schedule.plateau_window must be ≥ 1".into());
        }
        if let Some(bg) = self.dataset.background {
            unit("dataset.background", bg)?;
        }
        if let Some(ink) = self.dataset.ink {
            unit("dataset.ink", ink)?;
        }
        let classes = self.dataset.class_ids()?;
        if classes.is_empty() {
            return Err("dataset.classes must not be empty".into());
        }
        let limit = self.dataset.source.label_count();
        if let Some(bad) = classes.iter().find(|&&c| c >= limit) {
            return Err(format!("dataset.classes: id {bad} must be < {limit}"));
        }
        for arch in [self.receiver_arch, self.probe.arch] {
            if arch.conv1 == 0 || arch.conv2 == 0 || arch.hidden == 0 {
                return Err("network layer sizes must be ≥ 1".into());
            }
        }
        if self.sender_arch.hidden == 0 {
            return Err("sender_arch.hidden must be ≥ 1".into());
        }
        self.ppo.validate()?;
        self.inference.validate()?;
        if regime == Regime::Part2AblatePref {
            self.inference.ablate_pref = true;
        }
        if regime.is_part2() && self.schedule.max_solipsistic_epochs.is_none() {
            self.schedule.max_solipsistic_epochs = Some(100);
        }
        Ok(self)
    }

    pub fn regime(&self) -> Regime {
        self.regime.expect("validated config")
    }

    pub fn population(&self) -> usize {
        self.population.expect("validated config")
    }

    pub fn curves(&self) -> usize {
        self.curves.expect("validated config")
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let raw: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        raw.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
