//! Checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `VXCOLOR\0` |
//! | 4     | format version (`u32`, currently 1) |
//! | 8     | header length `h` (`u64`) |
//! | h     | UTF-8 JSON [`CheckpointHeader`] |
//! | rest  | parameter values in header order, row-major, `f32` or `f64` |

use super::{CuNet, Model, ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Precision, Real, Tensor};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"VXCOLOR\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

/// JSON header of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub precision: Precision,
    pub model: ModelConfig,
    /// Training settings the weights came from, if known.
    pub train: Option<TrainConfig>,
    pub params: Vec<ParamMeta>,
}

pub fn save_checkpoint<F: Real>(path: &Path, net: &CuNet<F>, train: Option<&TrainConfig>) -> Result<()> {
    let header = CheckpointHeader {
        precision: F::PRECISION,
        model: *net.config(),
        train: train.cloned(),
        params: net
            .store()
            .entries()
            .iter()
            .map(|e| ParamMeta {
                name: e.name.clone(),
                shape: e.value.shape().to_vec(),
                trainable: e.trainable,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(20 + json.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for e in net.store().entries() {
        for &x in e.value.data() {
            match F::PRECISION {
                Precision::F32 => buf.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes()),
                Precision::F64 => buf.extend_from_slice(&x.to_f64_lossy().to_le_bytes()),
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn read_store<F: Real>(header: &CheckpointHeader, mut data: &[u8]) -> Result<ParamStore<F>> {
    let width = match header.precision {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    let mut store = ParamStore::new();
    for p in &header.params {
        let n: usize = p.shape.iter().product();
        let raw = take(&mut data, n * width)?;
        let values: Vec<F> = raw
            .chunks_exact(width)
            .map(|c| match header.precision {
                Precision::F32 => F::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64),
                Precision::F64 => F::from_f64_lossy(f64::from_le_bytes(c.try_into().unwrap())),
            })
            .collect();
        store.add(p.name.clone(), Tensor::new(p.shape.clone(), values)?, p.trainable);
    }
    if !data.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", data.len())));
    }
    Ok(store)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rest = bytes.as_slice();
    if take(&mut rest, 8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(take(&mut rest, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut rest, 8)?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| Error::Checkpoint("header too large".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(take(&mut rest, len)?).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let model = match header.precision {
        Precision::F32 => Model::F32(CuNet::from_store(header.model, read_store(&header, rest)?)?),
        Precision::F64 => Model::F64(CuNet::from_store(header.model, read_store(&header, rest)?)?),
    };
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            channels: 6,
            blocks: 2,
            kernel_size: 3,
            v_train: 4,
        }
    }

    #[test]
    fn round_trip_both_precisions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let net = CuNet::<f32>::with_init(cfg(), 3, false).unwrap();
        let tc = TrainConfig::for_ratio(4);
        save_checkpoint(&path, &net, Some(&tc)).unwrap();
        let (m, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.train, Some(tc));
        assert_eq!(header.model, cfg());
        let Model::F32(back) = m else { panic!("precision changed") };
        assert_eq!(back.store().entries().len(), net.store().entries().len());
        for (a, b) in back.store().entries().iter().zip(net.store().entries()) {
            assert_eq!((&a.name, &a.value, a.trainable), (&b.name, &b.value, b.trainable));
        }

        let net64 = CuNet::<f64>::with_init(cfg(), 4, false).unwrap();
        save_checkpoint(&path, &net64, None).unwrap();
        let (m, _) = load_checkpoint(&path).unwrap();
        let Model::F64(back) = m else { panic!("precision changed") };
        for (a, b) in back.store().entries().iter().zip(net64.store().entries()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        let net = CuNet::<f32>::new(cfg(), 1).unwrap();
        save_checkpoint(&path, &net, None).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
