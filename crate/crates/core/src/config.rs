//! Run configuration: one TOML file with a section per stage.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::field::ModelConfig;
use crate::optim::{CalibrationConfig, TrainConfig};
use crate::scene::{RigSpec, SceneSpec, SynthConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: SynthConfig,
    pub scene: SceneSpec,
    pub rig: RigSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub calibration: CalibrationConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train_config().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Training settings with the model section folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model.clone(),
            ..self.train.clone()
        }
    }

    /// Short hex digest of the resolved configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ModelKind;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml_str(
            "[model]\nkind = \"latent\"\n[train]\niterations = 200\nlr_field = 0.003\n[data]\nunsync_scale = 1.5\n",
        )
        .unwrap();
        assert_eq!(cfg.model.kind, ModelKind::Latent);
        assert_eq!(cfg.train.iterations, 200);
        assert_eq!(cfg.train_config().base_lr(), 0.003);
        assert_eq!(cfg.data.unsync_scale, 1.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml_str("[train]\nlearning_rate = 1\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("[trian]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml_str("[train]\niterations = 0\n").is_err());
    }

    #[test]
    fn round_trip_and_fingerprint() {
        let mut cfg = RunConfig::default();
        cfg.train.lr_field = Some(0.01);
        let s = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&s).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
        cfg.train.seed = 9;
        assert_ne!(back.fingerprint(), cfg.fingerprint());
    }
}
