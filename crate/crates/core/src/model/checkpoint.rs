//! Checkpoint file: 8-byte magic, u32 LE header length, JSON header, then
//! every tensor as little-endian f32 in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, VariantKind};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TSCKPT01";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: VariantKind,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

fn stat_names(i: usize) -> (String, String) {
    (format!("bn{i}.running_mean"), format!("bn{i}.running_var"))
}

pub fn write_checkpoint<T: Scalar, W: Write>(model: &Model<T>, mut w: W) -> Result<()> {
    let mut tensors = Vec::new();
    let mut blobs: Vec<&[T]> = Vec::new();
    for p in model.params() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            trainable: true,
        });
        blobs.push(p.tensor.data());
    }
    for (i, s) in model.running_stats().iter().enumerate() {
        let (m, v) = stat_names(i);
        for (name, data) in [(m, &s.mean), (v, &s.var)] {
            tensors.push(TensorEntry {
                name,
                shape: vec![data.len()],
                trainable: false,
            });
            blobs.push(data);
        }
    }
    let header = serde_json::to_vec(&Header {
        format_version: FORMAT_VERSION,
        kind: model.kind(),
        config: model.config().clone(),
        tensors,
    })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for blob in blobs {
        for &v in blob {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R, origin: &Path) -> Result<Model<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(origin, "file shorter than magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format(origin, format!("bad magic {magic:?}")));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)
        .map_err(|_| Error::format(origin, "truncated header"))?;
    let header: Header = serde_json::from_slice(&header)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(
            origin,
            format!("unsupported checkpoint version {}", header.format_version),
        ));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() * 4)
        .sum();
    if payload.len() != expected {
        return Err(Error::format(
            origin,
            format!(
                "payload has {} bytes, header declares {expected}",
                payload.len()
            ),
        ));
    }

    let mut model = Model::<T>::new(header.kind, header.config, 0)?;
    let mut values = payload
        .chunks_exact(4)
        .map(|c| T::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64));
    let mut take = |entry: &TensorEntry, dst: &mut [T]| -> Result<()> {
        let n: usize = entry.shape.iter().product();
        if n != dst.len() {
            return Err(Error::format(
                origin,
                format!(
                    "tensor `{}` has {n} values, model expects {}",
                    entry.name,
                    dst.len()
                ),
            ));
        }
        for d in dst.iter_mut() {
            *d = values.next().expect("length checked");
        }
        Ok(())
    };

    let n_params = model.params().len();
    let n_stats = model.running_stats().len();
    if header.tensors.len() != n_params + 2 * n_stats {
        return Err(Error::format(
            origin,
            format!(
                "{} tensors in file, model has {}",
                header.tensors.len(),
                n_params + 2 * n_stats
            ),
        ));
    }
    for (entry, p) in header.tensors[..n_params].iter().zip(model.params_mut()) {
        if entry.name != p.name || entry.shape != p.tensor.shape() {
            return Err(Error::format(
                origin,
                format!(
                    "tensor `{}` {:?} does not match model parameter `{}` {:?}",
                    entry.name,
                    entry.shape,
                    p.name,
                    p.tensor.shape()
                ),
            ));
        }
        take(entry, p.tensor.data_mut())?;
    }
    for (i, s) in model.running_stats_mut().iter_mut().enumerate() {
        let (m, v) = (
            &header.tensors[n_params + 2 * i],
            &header.tensors[n_params + 2 * i + 1],
        );
        if (m.name.clone(), v.name.clone()) != stat_names(i) {
            return Err(Error::format(
                origin,
                format!("unexpected tensor `{}`", m.name),
            ));
        }
        take(m, &mut s.mean)?;
        take(v, &mut s.var)?;
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let path = path.as_ref();
    read_checkpoint(BufReader::new(File::open(path)?), path)
}
