//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "WDIFFCKP"
//! version  u32 LE
//! hlen     u64 LE
//! header   hlen bytes of JSON (config, step, RNG states, tensor index)
//! payload  f64 LE values, tensors in index order
//! crc32    u32 LE over every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::TrainState;
use crate::error::{Error, Result};
use crate::network::{DagConfig, DagNetwork};
use crate::nn::Module;

const MAGIC: &[u8; 8] = b"WDIFFCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::CorruptCheckpoint("bad RNG position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: DagConfig,
    step: u64,
    adam_updates: u64,
    rng: RngState,
    data_rng: RngState,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload: Vec<f64> = Vec::new();
    for (name, p) in state.network.named_params() {
        tensors.push(TensorEntry {
            name: format!("net.{name}"),
            shape: p.shape().to_vec(),
        });
        payload.extend_from_slice(&p.value);
    }
    for (name, m, v) in &state.optimizer.moments {
        for (kind, data) in [("m", m), ("v", v)] {
            tensors.push(TensorEntry {
                name: format!("adam.{kind}.{name}"),
                shape: vec![data.len()],
            });
            payload.extend_from_slice(data);
        }
    }
    let header = Header {
        config: state.network.config().clone(),
        step: state.step,
        adam_updates: state.optimizer.t,
        rng: RngState::capture(&state.rng),
        data_rng: RngState::capture(&state.data_rng),
        tensors,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::config(e.to_string()))?;

    let mut bytes = Vec::with_capacity(24 + header.len() + 8 * payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    for v in &payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());

    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 4 + 8 + 4 {
        return Err(corrupt("file is truncated"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(hlen)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("header length exceeds file"))?;
    let header: Header =
        serde_json::from_slice(&body[20..header_end]).map_err(|e| corrupt(e.to_string()))?;
    let raw = &body[header_end..];
    if raw.len() % 8 != 0 {
        return Err(corrupt("payload is not a whole number of f64 values"));
    }
    let mut values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));

    let mut network = DagNetwork::new(header.config.clone(), 0)?;
    let mut optimizer = Adam::new(&network);
    optimizer.t = header.adam_updates;
    let mut entries = header.tensors.iter();
    let mut take = |name: &str, shape: &[usize], dst: &mut [f64]| -> Result<()> {
        let entry = entries
            .next()
            .ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if entry.name != name || entry.shape != shape {
            return Err(corrupt(format!(
                "expected tensor {name} {shape:?}, found {} {:?}",
                entry.name, entry.shape
            )));
        }
        for d in dst.iter_mut() {
            *d = values.next().ok_or_else(|| corrupt("payload ends early"))?;
        }
        Ok(())
    };
    for (name, p) in network.named_params_mut() {
        let shape = p.shape().to_vec();
        take(&format!("net.{name}"), &shape, &mut p.value)?;
    }
    for (name, m, v) in &mut optimizer.moments {
        let n = m.len();
        take(&format!("adam.m.{name}"), &[n], m)?;
        take(&format!("adam.v.{name}"), &[n], v)?;
    }
    if values.next().is_some() {
        return Err(corrupt("trailing payload values"));
    }
    Ok(TrainState {
        step: header.step,
        network,
        optimizer,
        rng: header.rng.restore()?,
        data_rng: header.data_rng.restore()?,
    })
}

/// Loads a checkpoint and checks that its label vocabulary has `vocab_size` entries.
pub fn load_checkpoint_for_vocab(path: &Path, vocab_size: usize) -> Result<TrainState> {
    let state = load_checkpoint(path)?;
    let found = state.network.config().vocab_size;
    if found != vocab_size {
        return Err(Error::config(format!(
            "checkpoint was trained with {found} labels but the dataset has {vocab_size}"
        )));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::TrainConfig;

    fn state() -> TrainState {
        let net = DagNetwork::new(DagConfig::miniature(3), 5).unwrap();
        TrainState::new(net, &TrainConfig::default())
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let mut s = state();
        s.step = 17;
        s.optimizer.t = 17;
        s.optimizer.moments[0].1[0] = 0.25;
        use rand::RngCore;
        s.rng.next_u64();
        save_checkpoint(&s, &path).unwrap();
        let mut back = load_checkpoint(&path).unwrap();
        assert_eq!(back.step, 17);
        assert_eq!(back.optimizer, s.optimizer);
        assert_eq!(back.network.named_params(), s.network.named_params());
        assert_eq!(back.rng.next_u64(), s.rng.next_u64());
        assert_eq!(back.data_rng.next_u64(), s.data_rng.next_u64());
    }

    #[test]
    fn rejects_damaged_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save_checkpoint(&state(), &path).unwrap();
        let good = fs::read(&path).unwrap();

        let mut bumped = good.clone();
        bumped[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        fs::write(&path, &bumped).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));

        fs::write(&path, &good[..good.len() - 100]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CorruptCheckpoint(_))
        ));

        let mut flipped = good.clone();
        let mid = good.len() / 2;
        flipped[mid] ^= 0x40;
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CorruptCheckpoint(_))
        ));

        fs::write(&path, &good[..10]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn vocab_mismatch_is_a_configuration_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save_checkpoint(&state(), &path).unwrap();
        assert!(load_checkpoint_for_vocab(&path, 3).is_ok());
        assert!(matches!(
            load_checkpoint_for_vocab(&path, 4),
            Err(Error::Config(_))
        ));
    }
}
