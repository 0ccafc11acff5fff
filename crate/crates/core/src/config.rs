//! Effective experiment configuration and `key=value` overrides.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{LabelMap, NormMode};
use crate::nn::ModelConfig;
use crate::train::{Precision, TrainConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("override {0:?} is not of the form key=value")]
    Syntax(String),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub norm_mode: NormMode,
    pub label_map: LabelMap,
}

/// Everything that determines the outcome of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

/// Every key accepted by [`ExperimentConfig::set`].
pub const OVERRIDE_KEYS: &[&str] = &[
    "model.in_channels",
    "model.window_len",
    "model.depth",
    "model.base_channels",
    "model.conv_kernel",
    "model.pool_kernel",
    "model.dropout_rate",
    "model.fc_hidden",
    "model.num_classes",
    "train.max_epochs",
    "train.batch_size",
    "train.shuffle",
    "train.seed",
    "train.precision",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.weight_decay",
    "data.norm_mode",
    "data.label.neutral",
    "data.label.stress",
    "data.label.amusement",
];

/// Splits `key=value`, trimming whitespace around both halves.
pub fn parse_override(raw: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = raw.split_once('=').ok_or_else(|| ConfigError::Syntax(raw.into()))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || v.is_empty() {
        return Err(ConfigError::Syntax(raw.into()));
    }
    Ok((k.to_string(), v.to_string()))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let x: f64 = parse(key, value)?;
    if !x.is_finite() {
        return Err(ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "must be finite".into(),
        });
    }
    Ok(x)
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "model.in_channels" => m.in_channels = parse(key, value)?,
            "model.window_len" => m.window_len = parse(key, value)?,
            "model.depth" => m.depth = parse(key, value)?,
            "model.base_channels" => m.base_channels = parse(key, value)?,
            "model.conv_kernel" => m.conv_kernel = parse(key, value)?,
            "model.pool_kernel" => m.pool_kernel = parse(key, value)?,
            "model.dropout_rate" => m.dropout_rate = parse_f64(key, value)?,
            "model.fc_hidden" => m.fc_hidden = parse(key, value)?,
            "model.num_classes" => m.num_classes = parse(key, value)?,
            "train.max_epochs" => t.max_epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.shuffle" => t.shuffle = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            "train.precision" => {
                t.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected f32 or f64".into(),
                        })
                    }
                }
            }
            "train.lr" => t.optimizer.lr = parse_f64(key, value)?,
            "train.beta1" => t.optimizer.beta1 = parse_f64(key, value)?,
            "train.beta2" => t.optimizer.beta2 = parse_f64(key, value)?,
            "train.eps" => t.optimizer.eps = parse_f64(key, value)?,
            "train.weight_decay" => t.optimizer.weight_decay = parse_f64(key, value)?,
            "data.norm_mode" => {
                self.data.norm_mode = match value {
                    "full" => NormMode::Full,
                    "train-only" => NormMode::TrainOnly,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected full or train-only".into(),
                        })
                    }
                }
            }
            "data.label.neutral" => self.data.label_map.neutral = parse(key, value)?,
            "data.label.stress" => self.data.label_map.stress = parse(key, value)?,
            "data.label.amusement" => self.data.label_map.amusement = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies raw `key=value` strings in order; later keys win.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for raw in overrides {
            let (k, v) = parse_override(raw.as_ref())?;
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.model.in_channels as usize != crate::data::NUM_MODALITIES
            || self.model.window_len as usize != crate::data::WINDOW_LEN
        {
            return Err(ConfigError::Invalid(format!(
                "windows are {}x{}, model expects {}x{}",
                crate::data::NUM_MODALITIES,
                crate::data::WINDOW_LEN,
                self.model.in_channels,
                self.model.window_len
            )));
        }
        if self.model.num_classes != 3 {
            return Err(ConfigError::Invalid("num_classes must be 3".into()));
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let l = &self.data.label_map;
        if l.neutral == l.stress || l.neutral == l.amusement || l.stress == l.amusement {
            return Err(ConfigError::Invalid("label codes must be distinct".into()));
        }
        Ok(())
    }

    /// Canonical JSON: fields in declaration order, no whitespace.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json). Includes the seed.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
