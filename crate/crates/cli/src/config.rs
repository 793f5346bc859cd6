//! Run configuration: defaults, then a JSON file, then command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spatial_core::embed::Vocabulary;
use spatial_core::eval::EvalConfig;
use spatial_core::field::TrainConfig;
use spatial_core::ground::GroundConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds scene generation and training; the only entropy source.
    pub seed: u64,
    /// Seed of the concept embedding table. Fixed per model, not per run.
    pub vocab_seed: u64,
    /// Norm of the per-view perturbation of mask embeddings.
    pub noise: f64,
    pub tau_bin: f64,
    pub min_visible: usize,
    pub train: TrainConfig,
    pub ground: GroundConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eval = EvalConfig::default();
        Self {
            seed: 0,
            vocab_seed: eval.vocab_seed,
            noise: eval.noise,
            tau_bin: eval.tau_bin,
            min_visible: eval.min_visible,
            train: eval.train,
            ground: eval.ground,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Field { path: String, reason: String },
    #[error("cannot read {0}: {1}")]
    Read(String, std::io::Error),
}

fn field(path: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Field {
        path: path.to_owned(),
        reason: reason.to_string(),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            field(if path.is_empty() { "." } else { &path }, e.into_inner())
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read(p.display().to_string(), e))?;
                Self::from_json(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(field("noise", "must be finite and nonnegative"));
        }
        if !(self.tau_bin > 0.0 && self.tau_bin < 1.0) {
            return Err(field("tau_bin", "must lie in (0, 1)"));
        }
        self.train.validate().map_err(|e| field("train", e))?;
        self.ground.validate().map_err(|e| field("ground", e))?;
        if (self.ground.lambda_in - self.train.lambda_in).abs() > 0.0 {
            return Err(field("ground.lambda_in", "must equal train.lambda_in"));
        }
        Ok(())
    }

    /// Copies `seed` into the module configs that consume it, overriding
    /// any seed they were given directly.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary {
            seed: self.vocab_seed,
            ..Vocabulary::default()
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            train: self.train.clone(),
            ground: self.ground.clone(),
            tau_bin: self.tau_bin,
            noise: self.noise,
            min_visible: self.min_visible,
            vocab_seed: self.vocab_seed,
            use_checkpoint: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let mut c = RunConfig::default();
        c.propagate_seed();
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 9, "train": {"steps": 5}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.steps, 5);
        assert_eq!(c.train.lr, TrainConfig::default().lr);
        assert_eq!(c.ground, GroundConfig::default());
    }

    #[test]
    fn type_error_names_the_field() {
        let e = RunConfig::from_json(r#"{"train": {"lr": "fast"}}"#).unwrap_err();
        assert!(e.to_string().starts_with("train.lr:"), "{e}");
    }

    #[test]
    fn unknown_top_level_field() {
        let e = RunConfig::from_json(r#"{"sead": 1}"#).unwrap_err();
        assert!(e.to_string().contains("sead"), "{e}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = RunConfig::default();
        c.tau_bin = 1.5;
        assert!(c.validate().unwrap_err().to_string().starts_with("tau_bin"));
        let mut c = RunConfig::default();
        c.train.lr = -1.0;
        assert!(c.validate().unwrap_err().to_string().starts_with("train:"));
        let mut c = RunConfig::default();
        c.ground.tau = 0.0;
        assert!(c.validate().unwrap_err().to_string().starts_with("ground:"));
    }
}
