//! Training configuration: built-in defaults first, config file second,
//! CLI flags last.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discriminator::DiscWiring;
use crate::error::{Error, Result};
use crate::generator::{GeneratorArch, FRAME};
use crate::objectives::LossWeights;

/// The three trained model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Plain strided-conv encoder with a single global discriminator
    /// (baseline stand-in).
    GlobalOnly,
    /// Plain encoder with dual global/local discriminators.
    Local,
    /// Residual encoder with dual discriminators.
    Residual,
}

impl Variant {
    pub fn generator_arch(self) -> GeneratorArch {
        match self {
            Variant::Residual => GeneratorArch::Residual,
            Variant::GlobalOnly | Variant::Local => GeneratorArch::Plain,
        }
    }

    pub fn disc_wiring(self) -> DiscWiring {
        match self {
            Variant::GlobalOnly => DiscWiring::GlobalOnly,
            Variant::Local | Variant::Residual => DiscWiring::Dual,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::GlobalOnly => "global-only",
            Variant::Local => "local",
            Variant::Residual => "residual",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global-only" => Ok(Variant::GlobalOnly),
            "local" => Ok(Variant::Local),
            "residual" => Ok(Variant::Residual),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected global-only, local, or residual)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub variant: Variant,
    pub lambda_rec: f64,
    pub lambda_adv_early: f64,
    pub lambda_adv_mid: f64,
    pub lambda_adv_late: f64,
    pub lambda_adv_break1: u32,
    pub lambda_adv_break2: u32,
    pub outer_size: usize,
    pub inner_size: usize,
    pub inward_margin: usize,
    pub data_dir: Option<PathBuf>,
    pub val_dir: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    pub checkpoint_every: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        TrainConfig {
            learning_rate: 0.0003,
            beta1: 0.5,
            beta2: 0.999,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            variant: Variant::Residual,
            lambda_rec: w.lambda_rec,
            lambda_adv_early: w.adv_early,
            lambda_adv_mid: w.adv_mid,
            lambda_adv_late: w.adv_late,
            lambda_adv_break1: w.adv_break1,
            lambda_adv_break2: w.adv_break2,
            outer_size: FRAME,
            inner_size: 128,
            inward_margin: 0,
            data_dir: None,
            val_dir: None,
            checkpoint_dir: PathBuf::from("checkpoints"),
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_rec: self.lambda_rec,
            adv_early: self.lambda_adv_early,
            adv_mid: self.lambda_adv_mid,
            adv_late: self.lambda_adv_late,
            adv_break1: self.lambda_adv_break1,
            adv_break2: self.lambda_adv_break2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0 <= self.beta1 && self.beta1 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::Config(format!(
                "betas must satisfy 0 <= beta1 < beta2 < 1, got beta1={}, beta2={}",
                self.beta1, self.beta2
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.outer_size != FRAME {
            return Err(Error::Config(format!(
                "outer_size must be {FRAME} (network layout), got {}",
                self.outer_size
            )));
        }
        if self.inner_size > self.outer_size {
            return Err(Error::Config(format!(
                "inner_size ({}) must not exceed outer_size ({})",
                self.inner_size, self.outer_size
            )));
        }
        if (self.outer_size - self.inner_size) % 2 != 0 {
            return Err(Error::Config(
                "outer_size - inner_size must be even".into(),
            ));
        }
        if self.checkpoint_every < 1 {
            return Err(Error::Config("checkpoint_every must be >= 1".into()));
        }
        self.loss_weights().validate()
    }

    /// Parse a TOML key-value file on top of the defaults. Unknown keys
    /// and type errors are rejected with the offending key named.
    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_training_protocol() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 0.0003);
        assert_eq!(c.beta1, 0.5);
        assert_eq!(c.beta2, 0.999);
        assert_eq!(c.epochs, 50);
        assert_eq!(c.lambda_adv_early, 0.001);
        assert_eq!(c.lambda_adv_mid, 0.005);
        assert_eq!(c.lambda_adv_late, 0.015);
        c.validate().unwrap();
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c: TrainConfig = toml::from_str("").unwrap();
        assert_eq!(c.learning_rate, TrainConfig::default().learning_rate);
        assert_eq!(c.epochs, 50);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = toml::from_str::<TrainConfig>("momentum = 0.9").unwrap_err();
        assert!(err.message().contains("momentum"), "{err}");
    }

    #[test]
    fn bad_beta2_is_rejected_by_name() {
        let c: TrainConfig = toml::from_str("beta2 = 1.5").unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("beta2"), "{err}");
    }

    #[test]
    fn variant_round_trip() {
        for v in [Variant::GlobalOnly, Variant::Local, Variant::Residual] {
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("batchnorm".parse::<Variant>().is_err());
    }
}
