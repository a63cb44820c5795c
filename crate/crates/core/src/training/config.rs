//! Run configuration: everything a training run needs, serializable to and
//! from TOML so a run is fully reproducible from its config echo alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::{make_gaussian_mixture, make_rings, DatasetKind, DatasetPair, LabeledDataset};
use crate::error::{Error, Result};
use crate::models::ModelConfig;

/// Adversarial objective for the two players.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvLossKind {
    /// Margin form: critic pushes real scores above +1 and generated scores
    /// below -1; the generator maximizes its scores.
    Hinge,
    /// Raw score difference (critic maximizes real minus generated score);
    /// relies entirely on spectral normalization for score control.
    #[serde(rename = "alg1_literal")]
    ScoreDiff,
}

/// How the critic and generator are conditioned on labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditioningKind {
    /// No conditioning anywhere: unconditional baseline.
    #[serde(rename = "none")]
    None,
    /// Auxiliary classifier head with softmax cross-entropy.
    #[serde(rename = "acgan")]
    AcGan,
    /// Label-projection inner product added to the critic score.
    #[serde(rename = "projgan")]
    ProjGan,
    /// Pair-based contrastive loss over jittered views, labels unused.
    #[serde(rename = "ntxent")]
    NtXent,
    /// Proxy-neighborhood loss against the class table.
    #[serde(rename = "pnca")]
    PNca,
    /// Class-proxy contrastive loss (no in-batch positives).
    #[serde(rename = "eq7")]
    DataToClass,
    /// Conditional contrastive loss with in-batch same-label positives.
    #[serde(rename = "2c")]
    TwoC,
    /// Conditional contrastive loss over batches joined with jittered views.
    #[serde(rename = "2c-aps")]
    TwoCAps,
}

impl ConditioningKind {
    pub const ALL: [ConditioningKind; 8] = [
        ConditioningKind::None,
        ConditioningKind::AcGan,
        ConditioningKind::ProjGan,
        ConditioningKind::NtXent,
        ConditioningKind::PNca,
        ConditioningKind::DataToClass,
        ConditioningKind::TwoC,
        ConditioningKind::TwoCAps,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::AcGan => "acgan",
            Self::ProjGan => "projgan",
            Self::NtXent => "ntxent",
            Self::PNca => "pnca",
            Self::DataToClass => "eq7",
            Self::TwoC => "2c",
            Self::TwoCAps => "2c-aps",
        }
    }

    /// Modes whose conditioning term needs jittered views of the batch.
    pub fn needs_augmentation(&self) -> bool {
        matches!(self, Self::NtXent | Self::TwoCAps)
    }

    /// Modes with a temperature-scaled contrastive term.
    pub fn uses_temperature(&self) -> bool {
        matches!(self, Self::NtXent | Self::DataToClass | Self::TwoC | Self::TwoCAps)
    }
}

impl FromStr for ConditioningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.as_str()).collect();
                Error::Config(format!(
                    "unknown conditioning '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

impl fmt::Display for ConditioningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl AdvLossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Hinge => "hinge",
            Self::ScoreDiff => "alg1_literal",
        }
    }
}

impl FromStr for AdvLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(Self::Hinge),
            "alg1_literal" => Ok(Self::ScoreDiff),
            other => Err(Error::Config(format!(
                "unknown adversarial loss '{other}' (expected 'hinge' or 'alg1_literal')"
            ))),
        }
    }
}

impl fmt::Display for AdvLossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named optimizer settings (critic lr, generator lr, beta1, beta2, critic
/// steps per generator step).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Preset {
    pub const ALL: [Preset; 6] =
        [Preset::A, Preset::B, Preset::C, Preset::D, Preset::E, Preset::F];

    /// (lr_d, lr_g, beta1, beta2, n_dis)
    pub fn values(self) -> (f64, f64, f64, f64, usize) {
        match self {
            Preset::A => (1e-4, 1e-4, 0.5, 0.999, 2),
            Preset::B => (1e-4, 1e-4, 0.5, 0.999, 1),
            Preset::C => (2e-4, 2e-4, 0.5, 0.999, 1),
            Preset::D => (2e-4, 2e-4, 0.5, 0.999, 2),
            Preset::E => (2e-4, 2e-4, 0.5, 0.999, 5),
            Preset::F => (4e-4, 1e-4, 0.0, 0.999, 1),
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig) {
        let (lr_d, lr_g, beta1, beta2, n_dis) = self.values();
        cfg.lr_d = lr_d;
        cfg.lr_g = lr_g;
        cfg.beta1 = beta1;
        cfg.beta2 = beta2;
        cfg.n_dis = n_dis;
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Preset::A),
            "B" => Ok(Preset::B),
            "C" => Ok(Preset::C),
            "D" => Ok(Preset::D),
            "E" => Ok(Preset::E),
            "F" => Ok(Preset::F),
            other => Err(Error::Config(format!("unknown preset '{other}' (expected A..F)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Preset::A => 'A',
            Preset::B => 'B',
            Preset::C => 'C',
            Preset::D => 'D',
            Preset::E => 'E',
            Preset::F => 'F',
        };
        write!(f, "{c}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmaConfig {
    pub enabled: bool,
    pub decay: f64,
    pub start_iter: usize,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self { enabled: true, decay: 0.9999, start_iter: 20_000 }
    }
}

/// Consistency regularization: penalize score changes under small input
/// jitter. `jitter_sigma` is also the augmentation width used by the
/// pair-based and augmented contrastive modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrConfig {
    pub enabled: bool,
    pub coefficient: f64,
    pub jitter_sigma: f64,
}

impl Default for CrConfig {
    fn default() -> Self {
        Self { enabled: false, coefficient: 10.0, jitter_sigma: 0.05 }
    }
}

/// Which dataset the run trains on. Either generated in memory from the
/// parameters here, or loaded from a CSV previously written by the data
/// generator (in which case `classes` must agree with the file).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DatasetKind,
    pub classes: usize,
    pub per_class: usize,
    /// Ring radius of the mixture centers (gaussian mixture only).
    pub radius: f64,
    /// Per-class spread (gaussian mixture only; rings use a fixed width).
    pub sigma: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub csv: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Gmm,
            classes: 8,
            per_class: 500,
            radius: 1.0,
            sigma: 0.1,
            seed: 0,
            train_fraction: 0.9,
            csv: None,
        }
    }
}

impl DataConfig {
    /// Build (or load) the dataset and split it.
    pub fn materialize(&self) -> Result<DatasetPair> {
        let ds = match &self.csv {
            Some(path) => {
                let ds = LabeledDataset::load_csv(std::path::Path::new(path))?;
                if ds.num_classes != self.classes {
                    return Err(Error::Config(format!(
                        "config says {} classes but {path} holds {}",
                        self.classes, ds.num_classes
                    )));
                }
                ds
            }
            None => match self.kind {
                DatasetKind::Gmm => make_gaussian_mixture(
                    self.classes,
                    self.per_class,
                    self.radius,
                    self.sigma,
                    self.seed,
                )?,
                DatasetKind::Rings => make_rings(self.classes, self.per_class, self.seed)?,
            },
        };
        ds.split(self.train_fraction)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Number of generator iterations.
    pub iterations: usize,
    pub batch_size: usize,
    /// Critic steps per generator step.
    pub n_dis: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adv_loss: AdvLossKind,
    pub conditioning: ConditioningKind,
    /// Weight of the conditioning term in both players' objectives.
    pub lambda: f64,
    pub temperature: f64,
    /// Evaluate every this many generator iterations (and at the end).
    pub eval_interval: usize,
    /// Points generated per evaluation.
    pub eval_samples: usize,
    pub ema: EmaConfig,
    pub cr: CrConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            iterations: 5000,
            batch_size: 64,
            n_dis: 1,
            lr_d: 2e-4,
            lr_g: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            adv_loss: AdvLossKind::Hinge,
            conditioning: ConditioningKind::TwoC,
            lambda: 1.0,
            temperature: 1.0,
            eval_interval: 500,
            eval_samples: 1000,
            ema: EmaConfig::default(),
            cr: CrConfig::default(),
            model: ModelConfig::default(),
            data: DataConfig::default(),
        };
        Preset::C.apply(&mut cfg);
        cfg
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
            Ok(())
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if self.n_dis == 0 {
            return Err(Error::Config("n_dis must be >= 1".into()));
        }
        positive("lr_d", self.lr_d)?;
        positive("lr_g", self.lr_g)?;
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        positive("temperature", self.temperature)?;
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be >= 1".into()));
        }
        if self.eval_samples < 2 * self.data.classes {
            return Err(Error::Config(format!(
                "eval_samples must cover every class twice: need >= {}, got {}",
                2 * self.data.classes,
                self.eval_samples
            )));
        }
        if !(self.ema.decay.is_finite() && (0.0..1.0).contains(&self.ema.decay)) {
            return Err(Error::Config(format!(
                "ema.decay must lie in [0, 1), got {}",
                self.ema.decay
            )));
        }
        if self.cr.enabled && !(self.cr.coefficient.is_finite() && self.cr.coefficient >= 0.0) {
            return Err(Error::Config(format!(
                "cr.coefficient must be finite and non-negative, got {}",
                self.cr.coefficient
            )));
        }
        if self.cr.enabled || self.conditioning.needs_augmentation() {
            positive("cr.jitter_sigma", self.cr.jitter_sigma)?;
        }
        if self.data.classes < 2 {
            return Err(Error::Config(format!(
                "data.classes must be >= 2, got {}",
                self.data.classes
            )));
        }
        if self.data.csv.is_none() && self.data.per_class < 2 {
            return Err(Error::Config(format!(
                "data.per_class must be >= 2, got {}",
                self.data.per_class
            )));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "data.train_fraction must lie in (0, 1), got {}",
                self.data.train_fraction
            )));
        }
        if self.model.data_dim == 0
            || self.model.noise_dim == 0
            || self.model.embed_dim == 0
            || self.model.gen_hidden.iter().any(|&w| w == 0)
            || self.model.disc_hidden.iter().any(|&w| w == 0)
        {
            return Err(Error::Config("model dimensions must all be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
