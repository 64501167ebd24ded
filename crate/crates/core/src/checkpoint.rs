//! Binary checkpoint files.
//!
//! Layout (little endian):
//!
//! ```text
//! "PMC1" | u32 json_len | json metadata | u32 record_count |
//!   record*: u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 values
//! ```
//!
//! Parameters are stored under their own names; AdamW moments under
//! `adam.m/<name>` and `adam.v/<name>`.

use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, SkeletonSpec, TrainConfig};
use crate::dataio::LimbStats;
use crate::error::{Error, Result};
use crate::model::PoseModel;
use crate::optim::{AdamWConfig, OptimizerState};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"PMC1";
const M_PREFIX: &str = "adam.m/";
const V_PREFIX: &str = "adam.v/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub run_id: String,
    pub stage: String,
    pub epoch: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub skeleton: SkeletonSpec,
    pub limb_stats: Option<LimbStats>,
    pub optimizer: Option<OptimizerMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub step: u64,
    pub config: AdamWConfig,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub records: Vec<(String, ArrayD<f32>)>,
}

fn push_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_record<S: Scalar>(buf: &mut Vec<u8>, name: &str, value: &ArrayD<S>) -> Result<()> {
    push_u32(buf, name.len())?;
    buf.extend_from_slice(name.as_bytes());
    push_u32(buf, value.ndim())?;
    for &d in value.shape() {
        push_u32(buf, d)?;
    }
    for v in value.iter() {
        buf.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    Ok(())
}

impl Checkpoint {
    /// Snapshot of a model and, optionally, its optimizer state.
    pub fn capture<S: Scalar>(
        meta: CheckpointMeta,
        model: &PoseModel<S>,
        optimizer: Option<&OptimizerState<S>>,
    ) -> Self {
        let mut meta = meta;
        meta.optimizer = optimizer.map(|o| OptimizerMeta {
            step: o.step,
            config: o.cfg,
        });
        let to_f32 = |a: &ArrayD<S>| a.mapv(|v| v.as_f32());
        let mut records: Vec<(String, ArrayD<f32>)> = model
            .params
            .iter()
            .map(|(_, name, v)| (name.to_string(), to_f32(v)))
            .collect();
        if let Some(o) = optimizer {
            for (id, name, _) in model.params.iter() {
                records.push((format!("{M_PREFIX}{name}"), to_f32(&o.m[id.index()])));
                records.push((format!("{V_PREFIX}{name}"), to_f32(&o.v[id.index()])));
            }
        }
        Checkpoint { meta, records }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        push_u32(&mut buf, json.len())?;
        buf.extend_from_slice(&json);
        push_u32(&mut buf, self.records.len())?;
        for (name, value) in &self.records {
            push_record(&mut buf, name, value)?;
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let json_len = r.u32()?;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(json_len)?)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let count = r.u32()?;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()?;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?;
            let ndim = r.u32()?;
            let dims = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let len: usize = dims.iter().product();
            let raw = r.take(len * 4)?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let array = ArrayD::from_shape_vec(IxDyn(&dims), values)
                .map_err(|e| Error::Checkpoint(format!("record {name}: {e}")))?;
            records.push((name, array));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { meta, records })
    }

    /// Written to a temporary sibling first, then renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.encode()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn named<S: Scalar>(&self, keep: impl Fn(&str) -> Option<&str>) -> Vec<(String, ArrayD<S>)> {
        self.records
            .iter()
            .filter_map(|(n, v)| keep(n).map(|k| (k.to_string(), v.mapv(|x| S::lit(x as f64)))))
            .collect()
    }

    /// Rebuilds the model described by the metadata with stored weights.
    pub fn restore_model<S: Scalar>(&self) -> Result<PoseModel<S>> {
        let mut model = PoseModel::new(&self.meta.model, 0)?;
        let params = self.named::<S>(|n| {
            (!n.starts_with(M_PREFIX) && !n.starts_with(V_PREFIX)).then_some(n)
        });
        model.params.load_named(&params)?;
        Ok(model)
    }

    /// Optimizer moments, if the checkpoint carries them.
    pub fn restore_optimizer<S: Scalar>(&self, model: &PoseModel<S>) -> Result<Option<OptimizerState<S>>> {
        let Some(meta) = self.meta.optimizer else {
            return Ok(None);
        };
        let mut state = OptimizerState::new(&model.params, meta.config);
        state.step = meta.step;
        let mut scratch = model.params.clone();
        scratch.load_named(&self.named::<S>(|n| n.strip_prefix(M_PREFIX)))?;
        for (id, _, v) in scratch.iter() {
            state.m[id.index()] = v.clone();
        }
        scratch.load_named(&self.named::<S>(|n| n.strip_prefix(V_PREFIX)))?;
        for (id, _, v) in scratch.iter() {
            state.v[id.index()] = v.clone();
        }
        Ok(Some(state))
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
                "truncated: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}
