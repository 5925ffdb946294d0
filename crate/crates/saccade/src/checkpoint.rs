//! Self-describing checkpoint files.
//!
//! ```text
//! SACCADE-CKPT 1\n
//! {json header}\n
//! little-endian f32 payload
//! ```
//!
//! The header carries the model spec, the run metadata, the Adam scalars
//! and a table of `{name, shape, offset}` entries. Offsets count `f32`
//! values from the start of the payload. Parameters come first; when the
//! optimiser has taken a step, its first and second moments follow under
//! the names `adam.m/<param>` and `adam.v/<param>`.

use std::io::Write;
use std::path::Path;

use saccade_core::data::NormStats;
use saccade_core::models::{Model, ModelSpec};
use saccade_core::nn::adam::{AdamConfig, AdamState};
use saccade_core::nn::Parameters;
use saccade_core::rng::{stream, Domain};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &str = "SACCADE-CKPT 1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub dataset: String,
    pub norm: NormStats,
    pub seed: u64,
    pub epoch: usize,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    meta: RunMeta,
    adam_step: u64,
    adam: AdamConfig,
    tensors: Vec<Entry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: RunMeta,
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
}

pub fn encode(model: &Model<f32>, adam: &AdamState<f32>, meta: &RunMeta) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload: Vec<f32> = Vec::new();
    let mut shapes = Vec::new();
    model.visit(&mut |name, t| {
        tensors.push(Entry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: payload.len(),
        });
        shapes.push((name.to_string(), t.shape().to_vec()));
        payload.extend_from_slice(t.data());
    });
    if !adam.m.is_empty() {
        for (prefix, bufs) in [("adam.m/", &adam.m), ("adam.v/", &adam.v)] {
            for ((name, shape), buf) in shapes.iter().zip(bufs) {
                tensors.push(Entry {
                    name: format!("{prefix}{name}"),
                    shape: shape.clone(),
                    offset: payload.len(),
                });
                payload.extend_from_slice(buf);
            }
        }
    }
    let header = Header {
        spec: model.spec().clone(),
        meta: meta.clone(),
        adam_step: adam.step,
        adam: adam.config,
        tensors,
    };
    let mut out = Vec::with_capacity(payload.len() * 4 + 4096);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], what: &str) -> Result<Checkpoint> {
    let bad = |d: String| Error::Format(format!("{what}: {d}"));
    let first = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing magic line".into()))?;
    if &bytes[..first] != MAGIC.as_bytes() {
        return Err(bad("not a saccade checkpoint".into()));
    }
    let rest = &bytes[first + 1..];
    let second = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header".into()))?;
    let header: Header = serde_json::from_slice(&rest[..second]).map_err(|e| bad(format!("header: {e}")))?;
    let payload = &rest[second + 1..];
    if payload.len() % 4 != 0 {
        return Err(bad("payload is not a whole number of f32 values".into()));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let table: std::collections::HashMap<&str, &Entry> = header.tensors.iter().map(|e| (e.name.as_str(), e)).collect();
    let fetch = |name: &str, shape: &[usize]| -> Result<&[f32]> {
        let e = table.get(name).ok_or_else(|| bad(format!("tensor '{name}' missing")))?;
        if e.shape != shape {
            return Err(bad(format!("tensor '{name}' has shape {:?}, model expects {:?}", e.shape, shape)));
        }
        let n: usize = shape.iter().product();
        values
            .get(e.offset..e.offset + n)
            .ok_or_else(|| bad(format!("tensor '{name}' runs past the payload")))
    };

    let mut model = Model::<f32>::new(header.spec.clone(), &mut stream(0, Domain::Init, 0, 0))?;
    let mut failure = None;
    model.visit_mut(&mut |name, t| {
        if failure.is_some() {
            return;
        }
        match fetch(name, t.shape()) {
            Ok(src) => t.data_mut().copy_from_slice(src),
            Err(e) => failure = Some(e),
        }
    });
    let mut adam = AdamState::new(header.adam);
    adam.step = header.adam_step;
    if table.keys().any(|k| k.starts_with("adam.m/")) {
        model.visit(&mut |name, t| {
            if failure.is_some() {
                return;
            }
            match (fetch(&format!("adam.m/{name}"), t.shape()), fetch(&format!("adam.v/{name}"), t.shape())) {
                (Ok(m), Ok(v)) => {
                    adam.m.push(m.to_vec());
                    adam.v.push(v.to_vec());
                }
                (Err(e), _) | (_, Err(e)) => failure = Some(e),
            }
        });
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Checkpoint {
        meta: header.meta,
        model,
        adam,
    })
}

pub fn save(path: &Path, model: &Model<f32>, adam: &AdamState<f32>, meta: &RunMeta) -> Result<()> {
    let bytes = encode(model, adam, meta)?;
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(&bytes))
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}
