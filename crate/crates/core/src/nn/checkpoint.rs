//! CNNC checkpoint files.
//!
//! Layout (all integers little-endian):
//! magic "CNNC", version u32 = 1, layer count u32, per-layer records
//! (kind u8 followed by that kind's integer fields as u32), parameter count
//! u32, per-parameter shape table (ndim u32, dims u32 each), float32 payloads
//! in declaration order, then a length-prefixed metadata JSON blob.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::network::Network;
use crate::nn::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CNNC";
pub const FORMAT_VERSION: u32 = 1;

const KIND_CONV2D: u8 = 0;
const KIND_RELU: u8 = 1;
const KIND_MAXPOOL2: u8 = 2;
const KIND_FLATTEN: u8 = 3;
const KIND_FC: u8 = 4;

/// Training metadata stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: u32,
    pub train_config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    epoch: u32,
    train_config_hash: String,
    rng_seed: u64,
}

pub fn save_checkpoint(net: &Network, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes()).map_err(io)?;
    for spec in net.layers() {
        match *spec {
            LayerSpec::Conv2d { in_ch, out_ch, kernel, stride, pad } => {
                w.write_all(&[KIND_CONV2D]).map_err(io)?;
                for v in [in_ch, out_ch, kernel, stride, pad] {
                    w.write_all(&(v as u32).to_le_bytes()).map_err(io)?;
                }
            }
            LayerSpec::Relu => w.write_all(&[KIND_RELU]).map_err(io)?,
            LayerSpec::MaxPool2 => w.write_all(&[KIND_MAXPOOL2]).map_err(io)?,
            LayerSpec::Flatten => w.write_all(&[KIND_FLATTEN]).map_err(io)?,
            LayerSpec::Fc { in_dim, out_dim } => {
                w.write_all(&[KIND_FC]).map_err(io)?;
                w.write_all(&(in_dim as u32).to_le_bytes()).map_err(io)?;
                w.write_all(&(out_dim as u32).to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.write_all(&(net.params().len() as u32).to_le_bytes()).map_err(io)?;
    for p in net.params() {
        w.write_all(&(p.shape().len() as u32).to_le_bytes()).map_err(io)?;
        for &d in p.shape() {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
        }
    }
    for p in net.params() {
        for &v in p.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    let meta_json = serde_json::to_vec(&MetaRecord {
        epoch: meta.epoch,
        train_config_hash: meta.train_config_hash.clone(),
        rng_seed: net.rng_seed(),
    })
    .expect("metadata serializes");
    w.write_all(&(meta_json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&meta_json).map_err(io)?;
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}, expected \"CNNC\"",
            path.display()
        )));
    }
    let version = read_u32(&mut r, path)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported CNNC version {version}",
            path.display()
        )));
    }
    let layer_count = read_u32(&mut r, path)? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let mut kind = [0u8; 1];
        read_exact(&mut r, &mut kind, path)?;
        let spec = match kind[0] {
            KIND_CONV2D => {
                let f: Vec<u32> = (0..5)
                    .map(|_| read_u32(&mut r, path))
                    .collect::<Result<_>>()?;
                LayerSpec::Conv2d {
                    in_ch: f[0] as usize,
                    out_ch: f[1] as usize,
                    kernel: f[2] as usize,
                    stride: f[3] as usize,
                    pad: f[4] as usize,
                }
            }
            KIND_RELU => LayerSpec::Relu,
            KIND_MAXPOOL2 => LayerSpec::MaxPool2,
            KIND_FLATTEN => LayerSpec::Flatten,
            KIND_FC => LayerSpec::Fc {
                in_dim: read_u32(&mut r, path)? as usize,
                out_dim: read_u32(&mut r, path)? as usize,
            },
            k => {
                return Err(Error::Format(format!(
                    "{}: unknown layer kind {k}",
                    path.display()
                )))
            }
        };
        layers.push(spec);
    }

    let param_count = read_u32(&mut r, path)? as usize;
    let mut shapes = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        let ndim = read_u32(&mut r, path)? as usize;
        if ndim == 0 || ndim > 4 {
            return Err(Error::Format(format!(
                "{}: parameter rank {ndim} out of range",
                path.display()
            )));
        }
        let dims: Vec<usize> = (0..ndim)
            .map(|_| read_u32(&mut r, path).map(|v| v as usize))
            .collect::<Result<_>>()?;
        shapes.push(dims);
    }
    let mut params = Vec::with_capacity(param_count);
    for shape in &shapes {
        let n: usize = shape.iter().product();
        let mut buf = vec![0u8; n * 4];
        read_exact(&mut r, &mut buf, path)?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!(
                "{}: non-finite parameter value",
                path.display()
            )));
        }
        params.push(Tensor::from_vec(shape, data)?);
    }

    let meta_len = read_u32(&mut r, path)? as usize;
    let mut meta_buf = vec![0u8; meta_len];
    read_exact(&mut r, &mut meta_buf, path)?;
    let meta: MetaRecord = serde_json::from_slice(&meta_buf)
        .map_err(|e| Error::Corrupt(format!("{}: metadata: {e}", path.display())))?;

    let net = Network::from_parts(layers, params, meta.rng_seed)?;
    Ok((
        net,
        CheckpointMeta {
            epoch: meta.epoch,
            train_config_hash: meta.train_config_hash,
        },
    ))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Corrupt(format!("{}: truncated file", path.display()))
        } else {
            Error::io(path, e)
        }
    })
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path)?;
    Ok(u32::from_le_bytes(buf))
}
