//! Loss, optimiser, training and finetuning loops, checkpoints.

mod checkpoint;
mod optim;
mod pairs;
mod trainer;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::NetConfig;
use crate::{Error, Result};

pub use checkpoint::TrainState;
pub use optim::{poly_learning_rate, AdamW};
pub use pairs::{pair_loss_and_gradient, predict_pairs, sample_set_mre};
pub use trainer::{
    finetune, train, train_biharmonic, train_step, Batch, EpochRecord, StepRecord, TrainOutputs,
    TrainRun, TrainingMesh,
};

/// Training hyperparameters. Every field has a default, so a config file
/// only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
    /// Meshes per optimisation step.
    pub batch_meshes: usize,
    pub epochs: usize,
    /// Steps per epoch; by default one pass over the training meshes.
    pub steps_per_epoch: Option<usize>,
    /// Exponent of the polynomial learning-rate decay.
    pub poly_power: f64,
    /// Vertex pairs drawn per mesh per step.
    pub pairs_per_mesh: usize,
    /// Added to the target distance in the relative-error denominator.
    pub epsilon: f64,
    /// Fraction of meshes held out for model selection.
    pub validation_fraction: f64,
    pub seed: u64,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0025,
            weight_decay: 0.01,
            batch_meshes: 4,
            epochs: 100,
            steps_per_epoch: None,
            poly_power: 0.9,
            pairs_per_mesh: 4096,
            epsilon: 0.001,
            validation_fraction: 0.1,
            seed: 0,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("weight_decay", self.weight_decay)?;
        positive("epsilon", self.epsilon)?;
        if !(self.poly_power > 0.0 && self.poly_power <= 2.0) {
            return Err(Error::Config(format!(
                "poly_power must be in (0, 2], got {}",
                self.poly_power
            )));
        }
        if self.batch_meshes == 0 || self.pairs_per_mesh == 0 || self.steps_per_epoch == Some(0) {
            return Err(Error::Config(
                "batch_meshes, pairs_per_mesh and steps_per_epoch must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        self.net.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Mean relative error `mean |pred - gt| / (gt + epsilon)`.
pub fn mre_loss(predicted: &[f64], ground_truth: &[f64], epsilon: f64) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::InvalidArgument("relative error of an empty batch".into()));
    }
    if predicted.len() != ground_truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            predicted.len(),
            ground_truth.len()
        )));
    }
    let total: f64 = predicted
        .iter()
        .zip(ground_truth)
        .map(|(p, g)| (p - g).abs() / (g + epsilon))
        .sum();
    Ok(total / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loss_examples() {
        assert_eq!(mre_loss(&[1.0, 2.0], &[1.0, 2.0], 0.001).unwrap(), 0.0);
        let l = mre_loss(&[1.1], &[1.0], 0.001).unwrap();
        assert!((l - 0.1 / 1.001).abs() < 1e-12);
        assert_eq!(mre_loss(&[0.0], &[0.0], 0.001).unwrap(), 0.0);
        assert!(mre_loss(&[], &[], 0.001).is_err());
    }

    proptest! {
        #[test]
        fn loss_ignores_pair_order(v in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..40), seed in any::<u64>()) {
            let (p, g): (Vec<f64>, Vec<f64>) = v.iter().copied().unzip();
            let mut idx: Vec<usize> = (0..p.len()).collect();
            use rand::seq::SliceRandom;
            idx.shuffle(&mut crate::rng::stream(seed, "perm"));
            let ps: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let gs: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
            let a = mre_loss(&p, &g, 0.001).unwrap();
            let b = mre_loss(&ps, &gs, 0.001).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn config_parsing() {
        let c = TrainConfig::from_toml("epochs = 3\nlearning_rate = 0.001\n[net]\naggregation = \"mean\"\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.net.aggregation, crate::nn::Aggregation::Mean);
        assert_eq!(c.pairs_per_mesh, 4096);
        let err = TrainConfig::from_toml("epochz = 3\n").unwrap_err().to_string();
        assert!(err.contains("epochz"), "{err}");
        assert!(TrainConfig::from_toml("poly_power = 3.0\n").is_err());
        assert!(TrainConfig::from_toml("[net]\ngroups = 7\n").is_err());
    }
}
