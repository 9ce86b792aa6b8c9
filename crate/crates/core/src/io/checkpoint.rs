//! `RFKT` checkpoints: magic, u32 version, u32 metadata length, JSON
//! metadata, then every parameter group as little-endian f32 in the order the
//! metadata lists them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embeddings::{read_frame_header, read_payload, write_framed};
use crate::error::{Error, Result};
use crate::numeric::ProjectionHead;
use crate::train::Model;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RFKT";
pub const CHECKPOINT_VERSION: u32 = 1;

const GROUPS: [&str; 6] = [
    "image_head.weight",
    "image_head.bias",
    "text_head.weight",
    "text_head.bias",
    "log_temperature",
    "bias",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub raw_dim: usize,
    pub proj_dim: usize,
    pub step: usize,
    pub config_hash: String,
    /// `(name, length)` of each payload group, in payload order.
    pub groups: Vec<(String, usize)>,
}

impl CheckpointMeta {
    pub fn for_model(model: &Model, step: usize, config_hash: &str) -> Self {
        let lens = [
            model.image_head.weight.len(),
            model.image_head.bias.len(),
            model.text_head.weight.len(),
            model.text_head.bias.len(),
            1,
            1,
        ];
        Self {
            raw_dim: model.raw_dim(),
            proj_dim: model.proj_dim(),
            step,
            config_hash: config_hash.to_string(),
            groups: GROUPS.iter().zip(lens).map(|(n, l)| (n.to_string(), l)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Model,
}

pub fn write_checkpoint_to<W: Write>(w: &mut W, model: &Model, step: usize, config_hash: &str) -> Result<()> {
    let meta = CheckpointMeta::for_model(model, step, config_hash);
    let payload: Vec<f32> = model.flatten().iter().map(|&x| x as f32).collect();
    write_framed(w, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &serde_json::to_vec(&meta)?, &payload)
}

pub fn read_checkpoint_from<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let (_, meta) = read_frame_header(r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&meta).map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
    let (raw, proj) = (meta.raw_dim, meta.proj_dim);
    let expected_groups: Vec<(String, usize)> = GROUPS
        .iter()
        .zip([raw * proj, proj, raw * proj, proj, 1, 1])
        .map(|(n, l)| (n.to_string(), l))
        .collect();
    if meta.groups != expected_groups {
        return Err(Error::Format(format!(
            "checkpoint groups {:?} do not match a {raw}→{proj} model",
            meta.groups
        )));
    }
    let n: usize = expected_groups.iter().map(|g| g.1).sum();
    let values: Vec<f64> = read_payload(r, n)?.into_iter().map(f64::from).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("checkpoint holds non-finite parameters".into()));
    }
    let zero_head = || ProjectionHead {
        in_dim: raw,
        out_dim: proj,
        weight: vec![0.0; raw * proj],
        bias: vec![0.0; proj],
    };
    let mut model = Model {
        image_head: zero_head(),
        text_head: zero_head(),
        log_temperature: 0.0,
        bias: 0.0,
    };
    model.unflatten(&values)?;
    Ok(Checkpoint { meta, model })
}

pub fn write_checkpoint(path: &Path, model: &Model, step: usize, config_hash: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint_to(&mut w, model, step, config_hash)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint_from(&mut BufReader::new(File::open(path)?))
}

/// Parameters after one trip through f32 storage.
pub fn round_to_storage(model: &Model) -> Model {
    let mut m = model.clone();
    let values: Vec<f64> = model.flatten().iter().map(|&x| x as f32 as f64).collect();
    m.unflatten(&values).expect("same model");
    m
}
