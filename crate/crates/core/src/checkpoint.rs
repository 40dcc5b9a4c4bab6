//! Binary checkpoints: `WQA1`, a u32 tensor count, then per tensor a u32
//! name length, the UTF-8 name, u32 rows, u32 cols and row-major f64 LE
//! values. The config snapshot, epoch and validation score go to
//! `<path>.meta` (key=value) and the vocabulary to `<path>.vocab`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{EmbeddingTraining, TrainConfig};
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numeric::{Matrix, ParamTensor, Rng};

pub const MAGIC: &[u8; 4] = b"WQA1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub epoch: usize,
    pub validation_f1: f64,
    pub tensors: Vec<(String, Matrix)>,
    pub vocab: Vocab,
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Serializes named tensors in the checkpoint layout.
pub fn encode_tensors(tensors: &[(String, Matrix)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptCheckpoint {
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Matrix)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.corrupt("bad magic, expected WQA1"));
    }
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")?;
        let start = r.pos;
        let name = std::str::from_utf8(r.take(len, "tensor name")?).map_err(|_| {
            Error::CorruptCheckpoint {
                offset: start as u64,
                reason: "tensor name is not UTF-8".into(),
            }
        })?;
        let rows = r.u32("rows")?;
        let cols = r.u32("cols")?;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| r.corrupt(format!("tensor {name} is too large")))?;
        let data = r.take(n, "tensor values")?;
        let values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push((name.to_string(), Matrix::from_vec(rows, cols, values)));
    }
    if r.pos != bytes.len() {
        return Err(r.corrupt("trailing bytes after the last tensor"));
    }
    Ok(tensors)
}

impl Checkpoint {
    pub fn capture(model: &Model, vocab: &Vocab, epoch: usize, validation_f1: f64) -> Checkpoint {
        Checkpoint {
            config: model.config().clone(),
            epoch,
            validation_f1,
            tensors: model
                .store()
                .iter()
                .map(|t| (t.name.clone(), t.value.clone()))
                .collect(),
            vocab: vocab.clone(),
        }
    }

    fn meta_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.config.entries() {
            s.push_str(&format!("{k}={v}\n"));
        }
        s.push_str(&format!("epoch={}\nvalidation_f1={}\n", self.epoch, self.validation_f1));
        s
    }

    fn parse_meta(text: &str) -> Result<(TrainConfig, usize, f64)> {
        let mut config = TrainConfig::default();
        let (mut epoch, mut f1) = (None, None);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("checkpoint metadata line {}: expected key=value", i + 1)))?;
            let bad = || Error::Data(format!("checkpoint metadata line {}: bad value for {k}", i + 1));
            match k {
                "epoch" => epoch = Some(v.parse().map_err(|_| bad())?),
                "validation_f1" => f1 = Some(v.parse().map_err(|_| bad())?),
                _ => config.set(k, v)?,
            }
        }
        match (epoch, f1) {
            (Some(e), Some(f)) => Ok((config, e, f)),
            _ => Err(Error::Data("checkpoint metadata lacks epoch or validation_f1".into())),
        }
    }

    /// Writes the tensor file and both sidecars.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, encode_tensors(&self.tensors)).map_err(|e| Error::io(path, e))?;
        let meta = sidecar(path, "meta");
        fs::write(&meta, self.meta_text()).map_err(|e| Error::io(&meta, e))?;
        let vocab = sidecar(path, "vocab");
        fs::write(&vocab, self.vocab.to_text()).map_err(|e| Error::io(&vocab, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let tensors = decode_tensors(&bytes)?;
        let meta_path = sidecar(path, "meta");
        let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let (config, epoch, validation_f1) = Self::parse_meta(&meta)?;
        let vocab_path = sidecar(path, "vocab");
        let vocab = Vocab::parse(&fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?)?;
        Ok(Checkpoint {
            config,
            epoch,
            validation_f1,
            tensors,
            vocab,
        })
    }

    /// Fails with every differing architecture key when `expected` would
    /// build a differently shaped model.
    pub fn check_config(&self, expected: &TrainConfig) -> Result<()> {
        let diff = expected.architecture_diff(&self.config);
        if diff.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigMismatch(diff.join(", ")))
        }
    }

    /// Rebuilds the model with the stored values. Optimizer caches start at
    /// zero; trainable flags follow the stored config.
    pub fn to_model(&self) -> Result<Model> {
        let find = |name: &str| self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m);
        let emb = find("embedding.E")
            .ok_or_else(|| Error::Data("checkpoint has no embedding.E tensor".into()))?;
        if emb.cols() != self.vocab.len() {
            return Err(Error::Data(format!(
                "embedding has {} columns but the vocabulary has {} entries",
                emb.cols(),
                self.vocab.len()
            )));
        }
        let trainable = self.config.embedding_training != EmbeddingTraining::Frozen;
        let embedding = ParamTensor::new("embedding.E", emb.clone(), trainable);
        let mut model = Model::new(&self.config, embedding, &mut Rng::new(0))?;
        let store = model.store_mut();
        if store.len() != self.tensors.len() {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint has {} tensors, the configured model {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (name, value) in &self.tensors {
            let id = store
                .id(name)
                .ok_or_else(|| Error::ConfigMismatch(format!("unexpected tensor {name}")))?;
            let t = store.get_mut(id);
            if t.value.shape() != value.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "{name}: stored {:?} vs model {:?}",
                    value.shape(),
                    t.value.shape()
                )));
            }
            t.value = value.clone();
        }
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::toy_example;

    fn small_model(hidden: usize) -> (Model, Vocab) {
        let cfg = TrainConfig {
            hidden,
            word_dim: 6,
            embedding_training: EmbeddingTraining::Trainable,
            ..TrainConfig::default()
        };
        let vocab = Vocab::from_tokens((0..7).map(|i| format!("w{i}")));
        let mut rng = Rng::new(3);
        let emb = Matrix::from_fn(6, vocab.len(), |_, _| rng.uniform_range(-1.0, 1.0));
        let model = Model::new(&cfg, ParamTensor::new("embedding.E", emb, true), &mut rng).unwrap();
        (model, vocab)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (model, vocab) = small_model(5);
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        Checkpoint::capture(&model, &vocab, 3, 0.625).save(&a).unwrap();
        let loaded = Checkpoint::load(&a).unwrap();
        assert_eq!(loaded.epoch, 3);
        assert_eq!(loaded.validation_f1, 0.625);
        assert_eq!(loaded.config, *model.config());
        loaded.save(&b).unwrap();
        for ext in ["", ".meta", ".vocab"] {
            let pa = format!("{}{ext}", a.display());
            let pb = format!("{}{ext}", b.display());
            assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap(), "{ext}");
        }
    }

    #[test]
    fn reload_gives_identical_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let (model, vocab) = small_model(5);
        let p = dir.path().join("m.ckpt");
        Checkpoint::capture(&model, &vocab, 0, 0.0).save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap().to_model().unwrap();
        let ex = toy_example();
        assert_eq!(model.nll(&ex).unwrap().to_bits(), back.nll(&ex).unwrap().to_bits());
        assert_eq!(
            model.decode(&ex.question, &ex.evidence, &ex.features).unwrap(),
            back.decode(&ex.question, &ex.evidence, &ex.features).unwrap()
        );
    }

    #[test]
    fn mismatched_hidden_is_named() {
        let (model, vocab) = small_model(64);
        let ck = Checkpoint::capture(&model, &vocab, 0, 0.0);
        let mut other = model.config().clone();
        other.hidden = 32;
        let err = ck.check_config(&other).unwrap_err().to_string();
        assert!(err.contains("H: 32 vs 64"), "{err}");
        assert!(ck.check_config(model.config()).is_ok());
    }

    #[test]
    fn corruption_reports_offsets() {
        let (model, vocab) = small_model(3);
        let bytes = encode_tensors(&Checkpoint::capture(&model, &vocab, 0, 0.0).tensors);
        match decode_tensors(b"WQA2\0\0\0\0") {
            Err(Error::CorruptCheckpoint { offset: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        let cut = bytes.len() - 3;
        match decode_tensors(&bytes[..cut]) {
            Err(Error::CorruptCheckpoint { offset, reason }) => {
                assert!(offset as usize <= cut && reason.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            decode_tensors(&extra),
            Err(Error::CorruptCheckpoint { offset, .. }) if offset as usize == bytes.len()
        ));
        assert_eq!(decode_tensors(&bytes).unwrap().len(), model.store().len());
    }

    #[test]
    fn layout_is_little_endian() {
        let bytes = encode_tensors(&[("x".into(), Matrix::from_vec(1, 2, vec![1.0, -2.5]))]);
        assert_eq!(&bytes[..4], b"WQA1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(bytes[12], b'x');
        assert_eq!(&bytes[13..17], &1u32.to_le_bytes());
        assert_eq!(&bytes[17..21], &2u32.to_le_bytes());
        assert_eq!(&bytes[21..29], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[29..37], &(-2.5f64).to_le_bytes());
        assert_eq!(bytes.len(), 37);
    }
}
