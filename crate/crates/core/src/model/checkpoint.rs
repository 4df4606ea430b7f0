//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `PRECKPT1`, a little-endian `u64` header length,
//! a JSON header naming every tensor, then all parameters as little-endian
//! `f64` in model order. Precomputed vector tables are not embedded.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Dims, Model};
use crate::corpus::{ArticleId, ArticleIndex};
use crate::encoder::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PRECKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    architecture: Architecture,
    dims: Dims,
    encoder: EncoderConfig,
    articles: Vec<u32>,
    tensors: Vec<Tensor>,
}

fn tensors(model: &Model) -> Vec<Tensor> {
    let mut out = Vec::new();
    let d = model.dims();
    if model.encoder_config().kind == EncoderKind::HashedBow {
        for e in 0..model.architecture().n_encoders() {
            let r = model.encoder_param_range(e);
            out.push(Tensor {
                name: format!("encoder.{e}.embedding"),
                shape: vec![model.encoder_config().vocab_buckets, d.d1],
                offset: r.start,
                len: r.len(),
            });
        }
    }
    for (k, a) in model.articles().articles().iter().enumerate() {
        for (h, spec) in model.heads().iter().enumerate() {
            let (v, u) = model.layout.head_range(k, h, d.d1);
            out.push(Tensor {
                name: format!("article.{}.head.{h}.v", a.0),
                shape: vec![spec.hidden, d.d1],
                offset: v.start,
                len: v.len(),
            });
            out.push(Tensor {
                name: format!("article.{}.head.{h}.u", a.0),
                shape: vec![spec.outputs, spec.hidden],
                offset: u.start,
                len: u.len(),
            });
        }
    }
    out
}

pub fn write_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        architecture: model.architecture(),
        dims: model.dims(),
        encoder: *model.encoder_config(),
        articles: model.articles().articles().iter().map(|a| a.0).collect(),
        tensors: tensors(model),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * model.n_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Model> {
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    header.encoder.validate()?;
    let articles = ArticleIndex::new(header.articles.iter().map(|&a| ArticleId(a)));
    if articles.len() != header.dims.k || header.dims.d1 != header.encoder.width {
        return Err(bad("dims disagree with articles or encoder".into()));
    }
    let mut model = Model::zeroed(header.architecture, articles, header.encoder, header.dims);
    if tensors(&model) != header.tensors {
        return Err(bad("tensor table does not match the architecture".into()));
    }
    let payload = &bytes[16 + hlen..];
    if payload.len() != 8 * model.n_params() {
        return Err(bad(format!(
            "expected {} parameters, found {} bytes",
            model.n_params(),
            payload.len()
        )));
    }
    for (p, chunk) in model.params_mut().iter_mut().zip(payload.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(model)
}
