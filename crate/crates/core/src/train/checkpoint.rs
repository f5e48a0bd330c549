//! Versioned checkpoint container.
//!
//! ```text
//! magic    8 bytes  "MILKDCKP"
//! version  u32 LE
//! hlen     u32 LE   length of the JSON header
//! header   hlen bytes of UTF-8 JSON
//! payload  f32 LE values, parameters concatenated in header order
//! crc32    u32 LE   over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{NumericArray, ParameterStore, Scalar};
use crate::error::{Error, Result};
use crate::models::ModelConfig;

use super::config::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MILKDCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializable position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte seed, hex encoded.
    pub seed: String,
    pub stream: u64,
    /// Word position, decimal (it does not fit a JSON number).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = || Error::InvalidInput(format!("invalid rng state {self:?}"));
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let word_pos: u128 = self.word_pos.parse().map_err(|_| bad())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    epoch: usize,
    config: TrainConfig,
    model: ModelConfig,
    rng: RngState,
    params: Vec<ParamHeader>,
}

/// Everything needed to resume training or evaluate a model.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    /// Number of completed epochs.
    pub epoch: usize,
    pub config: TrainConfig,
    pub model: ModelConfig,
    pub rng: RngState,
    pub params: ParameterStore<f32>,
}

impl CheckpointRecord {
    pub fn new<T: Scalar>(
        epoch: usize,
        config: TrainConfig,
        model: ModelConfig,
        rng: &ChaCha8Rng,
        params: &ParameterStore<T>,
    ) -> Self {
        Self {
            epoch,
            config,
            model,
            rng: RngState::capture(rng),
            params: params.cast(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            epoch: self.epoch,
            config: self.config.clone(),
            model: self.model.clone(),
            rng: self.rng.clone(),
            params: self
                .params
                .iter()
                .map(|(name, p)| ParamHeader {
                    name: name.to_string(),
                    shape: p.value.shape().to_vec(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(header.len() + 4 * self.params.num_values() + 20);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, p) in self.params.iter() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parses a checkpoint. Nothing is returned unless every check passes.
    pub fn from_bytes(bytes: &[u8], source: &Path) -> Result<Self> {
        let corrupt = |detail: &str| Error::Corrupt {
            path: source.to_path_buf(),
            detail: detail.to_string(),
        };
        if bytes.len() < 20 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_VERSION.to_string(),
                found: version.to_string(),
            });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let hlen = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
        let header_end = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length out of range"))?;
        let header: Header =
            serde_json::from_slice(&body[16..header_end]).map_err(|e| corrupt(&e.to_string()))?;
        let payload = &body[header_end..];
        let expected: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
        if payload.len() != expected * 4 {
            return Err(corrupt(&format!(
                "payload has {} bytes, header describes {}",
                payload.len(),
                expected * 4
            )));
        }
        let mut params = ParameterStore::new();
        let mut at = 0;
        for p in header.params {
            let len: usize = p.shape.iter().product();
            let data = payload[at..at + 4 * len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            at += 4 * len;
            params.insert(p.name, NumericArray::new(p.shape, data)?)?;
        }
        header.rng.restore()?;
        Ok(Self {
            epoch: header.epoch,
            config: header.config,
            model: header.model,
            rng: header.rng,
            params,
        })
    }

    /// Writes via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingFile {
                    path: path.to_path_buf(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};

    fn record() -> CheckpointRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let _ = rng.next_u64();
        let mut params = ParameterStore::<f32>::new();
        params
            .insert("a", NumericArray::matrix(2, 2, vec![1.5, -0.25, 3.0e-8, 7.0]).unwrap())
            .unwrap();
        params.insert("b", NumericArray::vector(vec![0.1])).unwrap();
        CheckpointRecord::new(4, TrainConfig::default(), ModelConfig::new(3, true), &rng, &params)
    }

    #[test]
    fn bytes_round_trip() {
        let r = record();
        let bytes = r.to_bytes().unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(CheckpointRecord::from_bytes(&bytes, Path::new("x")).unwrap(), r);
    }

    #[test]
    fn rng_state_resumes_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..37 {
            rng.next_u32();
        }
        let mut resumed = RngState::capture(&rng).restore().unwrap();
        for _ in 0..10 {
            assert_eq!(rng.next_u64(), resumed.next_u64());
        }
    }

    #[test]
    fn corruption_detected() {
        let bytes = record().to_bytes().unwrap();
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 10;
        flipped[mid] ^= 1;
        assert!(CheckpointRecord::from_bytes(&flipped, Path::new("x")).is_err());
        assert!(CheckpointRecord::from_bytes(&bytes[..bytes.len() - 3], Path::new("x")).is_err());
        let mut versioned = bytes.clone();
        versioned[8] = 9;
        assert!(matches!(
            CheckpointRecord::from_bytes(&versioned, Path::new("x")),
            Err(Error::VersionMismatch { .. })
        ));
    }
}
