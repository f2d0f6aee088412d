//! Model description files and the JSON overlay for command options.
//!
//! Option values resolve as command-line flag, then config file, then the
//! built-in default.

use std::path::Path;

use beamosd_core::models::{ModelConfig, ModelKind};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MODEL_FILE: &str = "model.json";

/// `{"model", "F", "D", "heads", "layers", "seed"}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: String,
    #[serde(rename = "F")]
    pub fbank: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub seed: u64,
}

impl From<&ModelConfig> for ModelFile {
    fn from(c: &ModelConfig) -> Self {
        Self {
            model: c.kind.as_str().to_string(),
            fbank: c.fbank,
            dim: c.dim,
            heads: c.heads,
            layers: c.layers,
            seed: c.seed,
        }
    }
}

impl ModelFile {
    pub fn to_config(&self) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            kind: self.model.parse().map_err(|e: beamosd_core::Error| Error::data(e.to_string()))?,
            fbank: self.fbank,
            dim: self.dim,
            heads: self.heads,
            layers: self.layers,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

/// Keys a config file may set. Each command reads the keys it understands.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<String>,
    #[serde(rename = "F")]
    pub fbank: Option<usize>,
    #[serde(rename = "D")]
    pub dim: Option<usize>,
    pub heads: Option<usize>,
    pub layers: Option<usize>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f32>,
    pub eval_split: Option<String>,
    pub split: Option<String>,
    pub threshold: Option<f64>,
    pub num: Option<usize>,
    pub overlap_frac: Option<f64>,
    pub seconds: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::usage(format!("config file: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::usage(format!("{}: {e}", p.display())))
            }
        }
    }
}

/// Flag, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn parse_kind(s: &str) -> Result<ModelKind> {
    s.parse().map_err(|e: beamosd_core::Error| Error::usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_keys() {
        let cfg = ModelConfig::new(ModelKind::BeamTransformer);
        let json = ModelFile::from(&cfg).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let pos: Vec<usize> = ["\"model\"", "\"F\"", "\"D\"", "\"heads\"", "\"layers\"", "\"seed\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(v.as_object().unwrap().len(), 6);
        assert_eq!(v["model"], "bt");
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_config().unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ConfigFile::parse("{\"epochs\": 3, \"learning_rate\": 0.1}").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let c = ConfigFile::parse("{\"epochs\": 3, \"D\": 16}").unwrap();
        assert_eq!((c.epochs, c.dim), (Some(3), Some(16)));
    }

    #[test]
    fn precedence_flag_file_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }
}
