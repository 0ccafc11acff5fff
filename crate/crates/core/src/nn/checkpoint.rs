//! `AFCK` checkpoint files.
//!
//! Layout (little-endian): magic `AFCK`, u16 version, the nine [`ModelConfig`]
//! fields as u32 (dropout rate in parts per million), u64 seed, u32 epoch,
//! f64 validation loss, then one record per parameter tensor in
//! [`ModelConfig::param_names`] order: u16 name length, ASCII name,
//! u32 element count, f32 data.

use std::path::Path;

use thiserror::Error;

use super::{EmotionNet, ModelConfig, NnError, Param};
use crate::tensor::{Real, Tensor};
use crate::wire::{Reader, ShortRead};

pub const MAGIC: &[u8; 4] = b"AFCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {found:?}, expected \"AFCK\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated checkpoint at byte {offset}: need {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("checkpoint holds an invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint config {found:?} does not match expected {expected:?}")]
    ConfigMismatch {
        expected: Box<ModelConfig>,
        found: Box<ModelConfig>,
    },
    #[error("parameter record {index} at byte {offset}: {detail}")]
    ParamMismatch {
        index: usize,
        offset: usize,
        detail: String,
    },
    #[error("{extra} trailing bytes after byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ShortRead> for CheckpointError {
    fn from(e: ShortRead) -> Self {
        CheckpointError::Truncated {
            offset: e.offset,
            needed: e.needed,
            available: e.available,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: u32,
    pub val_loss: f64,
}

/// A model snapshot plus the metadata persisted alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: EmotionNet<T>,
    pub meta: CheckpointMeta,
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_checkpoint(&self.model, &self.meta)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        save_checkpoint(&self.model, &self.meta, path)
    }
}

/// A decoded checkpoint whose parameters have not yet been bound to a model.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub config: ModelConfig,
    pub meta: CheckpointMeta,
    pub params: Vec<(String, Vec<f32>)>,
}

fn config_fields(cfg: &ModelConfig) -> [u32; 9] {
    [
        cfg.in_channels,
        cfg.window_len,
        cfg.depth,
        cfg.base_channels,
        cfg.conv_kernel,
        cfg.pool_kernel,
        (cfg.dropout_rate * 1e6).round() as u32,
        cfg.fc_hidden,
        cfg.num_classes,
    ]
}

fn config_from_fields(f: [u32; 9]) -> ModelConfig {
    ModelConfig {
        in_channels: f[0],
        window_len: f[1],
        depth: f[2],
        base_channels: f[3],
        conv_kernel: f[4],
        pool_kernel: f[5],
        dropout_rate: f[6] as f64 / 1e6,
        fc_hidden: f[7],
        num_classes: f[8],
    }
}

pub fn encode_checkpoint<T: Real>(model: &EmotionNet<T>, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for f in config_fields(model.config()) {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out.extend_from_slice(&meta.epoch.to_le_bytes());
    out.extend_from_slice(&meta.val_loss.to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.len() as u32).to_le_bytes());
        for v in p.value.data() {
            let x = v.to_f32().expect("finite parameter");
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<RawCheckpoint, CheckpointError> {
    let mut r = Reader::new(bytes);
    let magic = r.bytes(4.min(bytes.len()))?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic { found: magic.to_vec() });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mut fields = [0u32; 9];
    for f in &mut fields {
        *f = r.u32()?;
    }
    let config = config_from_fields(fields);
    config
        .validate()
        .map_err(|e| CheckpointError::InvalidConfig(e.to_string()))?;
    let meta = CheckpointMeta {
        seed: r.u64()?,
        epoch: r.u32()?,
        val_loss: r.f64()?,
    };

    let names = config.param_names();
    let layers = config.layers();
    let mut params = Vec::with_capacity(names.len());
    for (index, expected) in names.iter().enumerate() {
        let offset = r.offset();
        let len = r.u16()? as usize;
        let name = r.bytes(len)?;
        if name != expected.as_bytes() {
            return Err(CheckpointError::ParamMismatch {
                index,
                offset,
                detail: format!("expected name {expected}, found {:?}", String::from_utf8_lossy(name)),
            });
        }
        let count = r.u32()? as usize;
        let layer = &layers[index / 2];
        let want = if index % 2 == 0 {
            layer.weight_shape().iter().product()
        } else {
            layer.bias_len()
        };
        if count != want {
            return Err(CheckpointError::ParamMismatch {
                index,
                offset,
                detail: format!("{expected} holds {count} values, expected {want}"),
            });
        }
        params.push((expected.clone(), r.f32s(count)?));
    }
    if r.remaining() > 0 {
        return Err(CheckpointError::TrailingBytes {
            offset: r.offset(),
            extra: r.remaining(),
        });
    }
    Ok(RawCheckpoint { config, meta, params })
}

impl RawCheckpoint {
    /// Binds the stored parameters to a model, rejecting a config that differs
    /// from `expected`.
    pub fn into_model<T: Real>(self, expected: &ModelConfig) -> Result<EmotionNet<T>, CheckpointError> {
        if config_fields(expected) != config_fields(&self.config) {
            return Err(CheckpointError::ConfigMismatch {
                expected: Box::new(expected.clone()),
                found: Box::new(self.config),
            });
        }
        let layers = self.config.layers();
        let params = self
            .params
            .into_iter()
            .enumerate()
            .map(|(i, (name, data))| {
                let layer = &layers[i / 2];
                let shape = if i % 2 == 0 {
                    layer.weight_shape()
                } else {
                    vec![layer.bias_len()]
                };
                let data = data.into_iter().map(|x| T::lit(x as f64)).collect();
                Ok(Param {
                    name,
                    value: Tensor::new(shape, data).map_err(NnError::from)?,
                })
            })
            .collect::<Result<Vec<_>, NnError>>()
            .map_err(|e| CheckpointError::InvalidConfig(e.to_string()))?;
        EmotionNet::from_params(self.config, params).map_err(|e| CheckpointError::InvalidConfig(e.to_string()))
    }
}

pub fn save_checkpoint<T: Real>(
    model: &EmotionNet<T>,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(model, meta))?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(
    path: &Path,
    expected: &ModelConfig,
) -> Result<(EmotionNet<T>, CheckpointMeta), CheckpointError> {
    let raw = decode_checkpoint(&std::fs::read(path)?)?;
    let meta = raw.meta;
    Ok((raw.into_model(expected)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            base_channels: 2,
            fc_hidden: 4,
            ..Default::default()
        }
    }

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            seed: 77,
            epoch: 5,
            val_loss: 0.4321,
        }
    }

    #[test]
    fn f32_round_trip_is_bitwise() {
        let net = EmotionNet::<f32>::build(small(), &mut Rng::new(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.afck");
        save_checkpoint(&net, &meta(), &path).unwrap();
        let (back, m) = load_checkpoint::<f32>(&path, &small()).unwrap();
        assert_eq!(m, meta());
        for (a, b) in net.params().iter().zip(back.params()) {
            let ab: Vec<u32> = a.value.data().iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u32> = b.value.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn f64_model_reencodes_identically() {
        let net = EmotionNet::<f64>::build(small(), &mut Rng::new(2)).unwrap();
        let bytes = encode_checkpoint(&net, &meta());
        let back: EmotionNet<f64> = decode_checkpoint(&bytes).unwrap().into_model(&small()).unwrap();
        assert_eq!(encode_checkpoint(&back, &meta()), bytes);
    }

    #[test]
    fn header_layout() {
        let net = EmotionNet::<f32>::build(small(), &mut Rng::new(1)).unwrap();
        let bytes = encode_checkpoint(&net, &meta());
        assert_eq!(&bytes[..4], b"AFCK");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        // nine config words
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[30..34].try_into().unwrap()), 150_000);
        assert_eq!(u64::from_le_bytes(bytes[42..50].try_into().unwrap()), 77);
        let first_name_len = u16::from_le_bytes([bytes[62], bytes[63]]) as usize;
        assert_eq!(&bytes[64..64 + first_name_len], b"conv1.weight");
    }

    #[test]
    fn corrupted_magic() {
        let net = EmotionNet::<f32>::build(small(), &mut Rng::new(1)).unwrap();
        let mut bytes = encode_checkpoint(&net, &meta());
        bytes[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(CheckpointError::BadMagic { .. })
        ));
    }

    #[test]
    fn version_and_truncation() {
        let net = EmotionNet::<f32>::build(small(), &mut Rng::new(1)).unwrap();
        let bytes = encode_checkpoint(&net, &meta());
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            decode_checkpoint(&v2),
            Err(CheckpointError::UnsupportedVersion(2))
        ));
        for cut in [3, 20, 70, bytes.len() - 1] {
            assert!(
                matches!(
                    decode_checkpoint(&bytes[..cut]),
                    Err(CheckpointError::Truncated { .. }) | Err(CheckpointError::BadMagic { .. })
                ),
                "cut {cut}"
            );
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_checkpoint(&long),
            Err(CheckpointError::TrailingBytes { extra: 1, .. })
        ));
    }

    #[test]
    fn config_mismatch_rejected() {
        let net = EmotionNet::<f32>::build(small(), &mut Rng::new(1)).unwrap();
        let bytes = encode_checkpoint(&net, &meta());
        let other = ModelConfig {
            base_channels: 4,
            ..small()
        };
        let err = decode_checkpoint(&bytes).unwrap().into_model::<f32>(&other);
        assert!(matches!(err, Err(CheckpointError::ConfigMismatch { .. })));
    }
}
