//! Model files and emission dumps.
//!
//! Checkpoints are JSON: a format tag, a version, the model configuration and
//! a list of named tensors, each stored as base64 of little-endian `f64`
//! bytes so that a save/load round trip is bit-exact.
//!
//! Emission files are binary, little-endian:
//!
//! ```text
//! "CVEM" | u32 version | u32 frames | u32 tokens | u8 normalized | u8 has_transitions
//! tokens × (u16 byte length, UTF-8) | u32 silence | u32 repetition
//! frames × tokens f64 scores | [tokens × tokens f64 transitions]
//! ```

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::acoustic::EmissionTable;
use crate::criterion::Alphabet;
use crate::error::{Error, Result};
use crate::lm::{GcnnConfig, GcnnModel, Vocabulary};
use crate::math::Table;
use crate::optim::ParamSet;
use crate::pipeline::train::{AsrModel, ModelConfig};

const FORMAT: &str = "convasr-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub len: usize,
    pub data: String,
}

/// The on-disk container shared by every model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<StoredTensor>,
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Checkpoint(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!(
            "{} bytes is not a whole number of f64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Checkpoint {
    pub fn new<P: ParamSet + ?Sized>(kind: &str, config: serde_json::Value, params: &P) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            config,
            tensors: params
                .tensors()
                .into_iter()
                .map(|(name, t)| StoredTensor {
                    name,
                    len: t.len(),
                    data: encode_f64s(t),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, kind: &str) -> Result<Self> {
        let c: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format {:?})", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        if c.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                c.kind
            )));
        }
        Ok(c)
    }

    /// Copies stored tensors into `params`, which must have exactly the same
    /// names and sizes in the same order.
    pub fn restore<P: ParamSet + ?Sized>(&self, params: &mut P) -> Result<()> {
        let names: Vec<(String, usize)> = params.tensors().into_iter().map(|(n, t)| (n, t.len())).collect();
        if names.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} tensors, checkpoint has {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((slot, (name, len)), stored) in params.tensors_mut().into_iter().zip(&names).zip(&self.tensors) {
            if stored.name != *name || stored.len != *len {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} ({} values) does not match model tensor {name:?} ({len} values)",
                    stored.name, stored.len
                )));
            }
            let values = decode_f64s(&stored.data)?;
            if values.len() != *len {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} holds {} values, header says {len}",
                    values.len()
                )));
            }
            slot.copy_from_slice(&values);
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct AsrConfig {
    model: ModelConfig,
    alphabet: Alphabet,
}

#[derive(Serialize, Deserialize)]
struct LmConfig {
    model: GcnnConfig,
    vocab: Vocabulary,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn acoustic_to_json(model: &AsrModel) -> String {
    let config = serde_json::to_value(AsrConfig {
        model: model.config.clone(),
        alphabet: model.alphabet.clone(),
    })
    .expect("config serializes");
    Checkpoint::new("acoustic", config, model).to_json()
}

pub fn acoustic_from_json(text: &str) -> Result<AsrModel> {
    let c = Checkpoint::from_json(text, "acoustic")?;
    let cfg: AsrConfig =
        serde_json::from_value(c.config.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut model = AsrModel::new(cfg.alphabet, cfg.model, &mut StdRng::seed_from_u64(0))?;
    c.restore(&mut model)?;
    Ok(model)
}

pub fn save_acoustic(path: &Path, model: &AsrModel) -> Result<()> {
    write(path, &acoustic_to_json(model))
}

pub fn load_acoustic(path: &Path) -> Result<AsrModel> {
    acoustic_from_json(&read(path)?)
}

pub fn gcnn_to_json(model: &GcnnModel) -> String {
    let config = serde_json::to_value(LmConfig {
        model: model.config.clone(),
        vocab: model.vocab.clone(),
    })
    .expect("config serializes");
    Checkpoint::new("gcnn", config, model).to_json()
}

pub fn gcnn_from_json(text: &str) -> Result<GcnnModel> {
    let c = Checkpoint::from_json(text, "gcnn")?;
    let mut cfg: LmConfig =
        serde_json::from_value(c.config.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    cfg.vocab.reindex();
    let mut model = GcnnModel::new(cfg.model, cfg.vocab, &mut StdRng::seed_from_u64(0))?;
    c.restore(&mut model)?;
    Ok(model)
}

pub fn save_gcnn(path: &Path, model: &GcnnModel) -> Result<()> {
    write(path, &gcnn_to_json(model))
}

pub fn load_gcnn(path: &Path) -> Result<GcnnModel> {
    gcnn_from_json(&read(path)?)
}

const EMISSION_MAGIC: &[u8; 4] = b"CVEM";

/// Emissions together with the alphabet they index and, optionally, the
/// transition table needed to decode them.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionFile {
    pub alphabet: Alphabet,
    pub emissions: EmissionTable,
    pub transitions: Option<Table>,
}

impl EmissionFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (t, a) = self.emissions.scores.shape();
        let mut out = Vec::new();
        out.extend_from_slice(EMISSION_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&(a as u32).to_le_bytes());
        out.push(u8::from(self.emissions.normalized));
        out.push(u8::from(self.transitions.is_some()));
        for tok in self.alphabet.tokens() {
            out.extend_from_slice(&(tok.len() as u16).to_le_bytes());
            out.extend_from_slice(tok.as_bytes());
        }
        out.extend_from_slice(&(self.alphabet.silence() as u32).to_le_bytes());
        out.extend_from_slice(&(self.alphabet.repetition() as u32).to_le_bytes());
        let tables = std::iter::once(&self.emissions.scores).chain(self.transitions.as_ref());
        for table in tables {
            for v in table.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != EMISSION_MAGIC {
            return Err(Error::Checkpoint("not an emission file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported emission file version {version}")));
        }
        let frames = r.u32()? as usize;
        let n = r.u32()? as usize;
        let normalized = r.take(1)?[0] != 0;
        let has_transitions = r.take(1)?[0] != 0;
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let tok = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("token is not UTF-8".into()))?;
            tokens.push(tok.to_string());
        }
        let silence = r.u32()? as usize;
        let repetition = r.u32()? as usize;
        let alphabet = Alphabet::new(tokens, silence, repetition)?;
        let scores = Table::from_vec(frames, n, r.f64s(frames * n)?);
        let transitions = if has_transitions {
            Some(Table::from_vec(n, n, r.f64s(n * n)?))
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the emission data",
                bytes.len() - r.pos
            )));
        }
        Ok(EmissionFile {
            alphabet,
            emissions: EmissionTable { scores, normalized },
            transitions,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "emission file truncated: need {n} bytes at offset {}, {} remain",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::train::FrontendKind;

    #[test]
    fn f64_codec_is_bit_exact() {
        let v = vec![0.0, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, f64::MAX, -1e-300];
        let back = decode_f64s(&encode_f64s(&v)).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(decode_f64s("AAAA").is_err());
    }

    #[test]
    fn wrong_kind_and_layout_rejected() {
        let mut rng = StdRng::seed_from_u64(1);
        let a = Alphabet::with_letters(&["a", "b"]).unwrap();
        let m = AsrModel::new(a.clone(), ModelConfig::small(FrontendKind::Mel), &mut rng).unwrap();
        let json = acoustic_to_json(&m);
        assert!(matches!(gcnn_from_json(&json), Err(Error::Checkpoint(_))));
        let c = Checkpoint::from_json(&json, "acoustic").unwrap();
        let mut other = AsrModel::new(a, ModelConfig::small(FrontendKind::Learnable), &mut rng).unwrap();
        assert!(matches!(c.restore(&mut other), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn emission_file_round_trip() {
        let a = Alphabet::with_letters(&["a", "é"]).unwrap();
        let scores = Table::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.1 - 0.55).collect());
        let f = EmissionFile {
            alphabet: a.clone(),
            emissions: EmissionTable {
                scores,
                normalized: false,
            },
            transitions: Some(Table::filled(4, 4, -0.25)),
        };
        let bytes = f.to_bytes();
        assert_eq!(EmissionFile::from_bytes(&bytes).unwrap(), f);
        assert!(EmissionFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(EmissionFile::from_bytes(&bad).is_err());
        let bare = EmissionFile { transitions: None, ..f };
        assert_eq!(EmissionFile::from_bytes(&bare.to_bytes()).unwrap(), bare);
    }
}
