//! AFB1 subject container.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "AFB1"
//! 4       2           version (1)
//! 6       2           subject id
//! 8       2           modality count (8)
//! 10      2           reserved (0)
//! 12      8           sample count N
//! 20      64          8 modality names, 8 ASCII bytes each, NUL padded
//! 84      4           sample rate in Hz (700)
//! 88      N           raw label codes, one byte per sample
//! 88+N    8 * 4N      f32 samples, modality-major, canonical order
//! ```
//! All integers are little-endian.

use std::path::Path;

use thiserror::Error;

use super::recording::{SubjectRecording, MODALITY_NAMES, NUM_MODALITIES, SAMPLE_RATE_HZ};
use crate::wire::{Reader, ShortRead};

pub const AFB_MAGIC: &[u8; 4] = b"AFB1";
pub const AFB_VERSION: u16 = 1;
const HEADER_LEN: usize = 88;

#[derive(Debug, Error)]
pub enum AfbError {
    #[error("bad magic {found:?} at byte 0, expected \"AFB1\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported version {found} at byte {offset}")]
    UnsupportedVersion { offset: usize, found: u16 },
    #[error("modality count {found} at byte {offset}, expected 8")]
    ModalityCount { offset: usize, found: u16 },
    #[error("reserved field {found} at byte {offset}, expected 0")]
    Reserved { offset: usize, found: u16 },
    #[error("modality table out of canonical order at byte {offset}: slot {index} holds {found}, expected {expected}")]
    ModalityOrder {
        offset: usize,
        index: usize,
        found: String,
        expected: &'static str,
    },
    #[error("unknown modality name {found:?} at byte {offset}")]
    UnknownModality { offset: usize, found: String },
    #[error("unsupported sample rate {found} Hz at byte {offset}, expected 700")]
    SampleRate { offset: usize, found: u32 },
    #[error("truncated file at byte {offset}: need {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("non-finite sample in {modality} at index {index} (byte {offset})")]
    NonFinite {
        modality: &'static str,
        index: usize,
        offset: usize,
    },
    #[error("{extra} trailing bytes after byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ShortRead> for AfbError {
    fn from(e: ShortRead) -> Self {
        AfbError::Truncated {
            offset: e.offset,
            needed: e.needed,
            available: e.available,
        }
    }
}

fn padded_name(name: &str) -> [u8; 8] {
    let mut out = [0u8; 8];
    out[..name.len()].copy_from_slice(name.as_bytes());
    out
}

pub fn encode_afb(rec: &SubjectRecording) -> Vec<u8> {
    let n = rec.len();
    let mut out = Vec::with_capacity(HEADER_LEN + n * (1 + 4 * NUM_MODALITIES));
    out.extend_from_slice(AFB_MAGIC);
    out.extend_from_slice(&AFB_VERSION.to_le_bytes());
    out.extend_from_slice(&rec.subject_id().to_le_bytes());
    out.extend_from_slice(&(NUM_MODALITIES as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for name in MODALITY_NAMES {
        out.extend_from_slice(&padded_name(name));
    }
    out.extend_from_slice(&rec.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(rec.labels());
    for m in rec.modalities() {
        for &x in m {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_afb(bytes: &[u8]) -> Result<SubjectRecording, AfbError> {
    let mut r = Reader::new(bytes);
    let magic = r.bytes(4.min(bytes.len()))?;
    if magic != AFB_MAGIC {
        return Err(AfbError::BadMagic { found: magic.to_vec() });
    }
    let offset = r.offset();
    let version = r.u16()?;
    if version != AFB_VERSION {
        return Err(AfbError::UnsupportedVersion { offset, found: version });
    }
    let subject_id = r.u16()?;
    let offset = r.offset();
    let nmod = r.u16()?;
    if nmod as usize != NUM_MODALITIES {
        return Err(AfbError::ModalityCount { offset, found: nmod });
    }
    let offset = r.offset();
    let reserved = r.u16()?;
    if reserved != 0 {
        return Err(AfbError::Reserved {
            offset,
            found: reserved,
        });
    }
    let num_samples = r.u64()?;
    for (index, expected) in MODALITY_NAMES.iter().enumerate() {
        let offset = r.offset();
        let raw = r.bytes(8)?;
        if raw != padded_name(expected) {
            let end = raw.iter().position(|&b| b == 0).unwrap_or(8);
            let found = String::from_utf8_lossy(&raw[..end]).into_owned();
            let known = MODALITY_NAMES.iter().any(|n| raw == padded_name(n));
            return Err(if known {
                AfbError::ModalityOrder {
                    offset,
                    index,
                    found,
                    expected,
                }
            } else {
                AfbError::UnknownModality { offset, found }
            });
        }
    }
    let offset = r.offset();
    let rate = r.u32()?;
    if rate != SAMPLE_RATE_HZ {
        return Err(AfbError::SampleRate { offset, found: rate });
    }

    let payload = usize::try_from(num_samples)
        .ok()
        .and_then(|n| n.checked_mul(1 + 4 * NUM_MODALITIES));
    match payload {
        Some(p) if p <= r.remaining() => {}
        _ => {
            return Err(AfbError::Truncated {
                offset: r.offset(),
                needed: payload.unwrap_or(usize::MAX),
                available: r.remaining(),
            })
        }
    }
    let n = num_samples as usize;
    let labels = r.bytes(n)?.to_vec();
    let mut modalities = Vec::with_capacity(NUM_MODALITIES);
    for name in MODALITY_NAMES {
        let start = r.offset();
        let values = r.f32s(n)?;
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(AfbError::NonFinite {
                modality: name,
                index,
                offset: start + 4 * index,
            });
        }
        modalities.push(values.into_iter().map(f64::from).collect());
    }
    if r.remaining() > 0 {
        return Err(AfbError::TrailingBytes {
            offset: r.offset(),
            extra: r.remaining(),
        });
    }
    SubjectRecording::new(subject_id, modalities, labels).map_err(|e| AfbError::Invalid(e.to_string()))
}

pub fn write_subject(path: &Path, rec: &SubjectRecording) -> Result<(), AfbError> {
    std::fs::write(path, encode_afb(rec))?;
    Ok(())
}

pub fn load_subject(path: &Path) -> Result<SubjectRecording, AfbError> {
    decode_afb(&std::fs::read(path)?)
}
