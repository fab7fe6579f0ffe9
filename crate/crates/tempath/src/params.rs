//! Model parameters: per-step relation embeddings, aggregation matrices,
//! attention projection, time codec, and the scoring vector — plus a
//! versioned binary checkpoint format with a JSON metadata sidecar.

use crate::error::{Error, Result};
use crate::timeenc::{init_time_codec, TimeCodecMode, TimeCodecParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Aggregation non-linearity δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// dδ/dx given the pre-activation and the already-computed output.
    pub fn derivative(&self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config(
                "activation",
                format!("expected identity|relu|tanh, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::Identity => write!(f, "identity"),
            Activation::Relu => write!(f, "relu"),
            Activation::Tanh => write!(f, "tanh"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Hidden width d.
    pub d: usize,
    /// Attention projection width.
    pub d_a: usize,
    /// Number of recursion steps L.
    pub num_steps: usize,
    /// Base (pre-inverse) relation count |R|.
    pub num_base_relations: usize,
}

impl Dims {
    /// Rows of each relation table: base + inverses + IDENTITY.
    pub fn rel_rows(&self) -> usize {
        2 * self.num_base_relations + 1
    }

    /// Width of the attention input [h_src ‖ h_rel ‖ h_rq ‖ h_time].
    pub fn concat_dim(&self) -> usize {
        4 * self.d
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d", "hidden width must be >= 1"));
        }
        if self.d_a == 0 {
            return Err(Error::config("d_a", "attention width must be >= 1"));
        }
        if self.num_steps == 0 {
            return Err(Error::config("num_steps", "must be >= 1"));
        }
        if self.num_base_relations == 0 {
            return Err(Error::config("num_base_relations", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: Dims,
    /// Share one relation table across all steps instead of one per step.
    pub shared_relations: bool,
    pub time_mode: TimeCodecMode,
    /// One `rel_rows × d` row-major table per step (or a single shared one).
    pub rel_emb: Vec<Vec<f64>>,
    /// One `d × d` row-major aggregation matrix per step.
    pub w_agg: Vec<Vec<f64>>,
    /// `d_a × 4d` attention projection.
    pub attn_w: Vec<f64>,
    /// `d_a` attention output vector.
    pub attn_v: Vec<f64>,
    pub time: TimeCodecParams,
    /// `d` scoring vector w.
    pub score_w: Vec<f64>,
}

impl ModelParams {
    pub fn init(
        dims: Dims,
        shared_relations: bool,
        time_mode: TimeCodecMode,
        time_span: f64,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let bound = 1.0 / (dims.d as f64).sqrt();
        let mut fill = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let tables = if shared_relations { 1 } else { dims.num_steps };
        let rel_emb = (0..tables).map(|_| fill(dims.rel_rows() * dims.d)).collect();
        let w_agg = (0..dims.num_steps).map(|_| fill(dims.d * dims.d)).collect();
        let attn_w = fill(dims.d_a * dims.concat_dim());
        let attn_v = fill(dims.d_a);
        let score_w = fill(dims.d);
        let time = init_time_codec(dims.d, time_span, time_mode, seed.wrapping_add(1))?;
        Ok(ModelParams {
            dims,
            shared_relations,
            time_mode,
            rel_emb,
            w_agg,
            attn_w,
            attn_v,
            time,
            score_w,
        })
    }

    /// Relation table used at step `step` (0-based).
    pub fn rel_table(&self, step: usize) -> &[f64] {
        if self.shared_relations {
            &self.rel_emb[0]
        } else {
            &self.rel_emb[step]
        }
    }

    /// Embedding row for relation `rel` at step `step`.
    pub fn rel_vec(&self, step: usize, rel: usize) -> &[f64] {
        let d = self.dims.d;
        &self.rel_table(step)[rel * d..(rel + 1) * d]
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Named flat tensors in a fixed declared order (checkpoint layout order).
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.rel_emb.len() {
            names.push(format!("rel_emb.{i}"));
        }
        for i in 0..self.w_agg.len() {
            names.push(format!("w_agg.{i}"));
        }
        names.extend(
            ["attn_w", "attn_v", "time.omega_p", "time.phi_p", "time.omega_np", "time.phi_np", "score_w"]
                .map(String::from),
        );
        names
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out: Vec<&Vec<f64>> = Vec::new();
        out.extend(self.rel_emb.iter());
        out.extend(self.w_agg.iter());
        out.push(&self.attn_w);
        out.push(&self.attn_v);
        out.push(&self.time.omega_p);
        out.push(&self.time.phi_p);
        out.push(&self.time.omega_np);
        out.push(&self.time.phi_np);
        out.push(&self.score_w);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let names = self.tensor_names();
        let mut refs: Vec<&mut Vec<f64>> = Vec::new();
        refs.extend(self.rel_emb.iter_mut());
        refs.extend(self.w_agg.iter_mut());
        refs.push(&mut self.attn_w);
        refs.push(&mut self.attn_v);
        refs.push(&mut self.time.omega_p);
        refs.push(&mut self.time.phi_p);
        refs.push(&mut self.time.omega_np);
        refs.push(&mut self.time.phi_np);
        refs.push(&mut self.score_w);
        names.into_iter().zip(refs).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// self += s * other (same shape).
    pub fn add_scaled(&mut self, other: &ModelParams, s: f64) {
        let theirs = other.tensors();
        for ((_, mine), them) in self.tensors_mut().into_iter().zip(theirs) {
            debug_assert_eq!(mine.len(), them.len());
            for (a, b) in mine.iter_mut().zip(them) {
                *a += s * b;
            }
        }
    }

    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        let io = |e: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            self.dims.d as u64,
            self.dims.d_a as u64,
            self.dims.num_steps as u64,
            self.dims.num_base_relations as u64,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.push(self.shared_relations as u8);
        buf.push(match self.time_mode {
            TimeCodecMode::PerDimension => 0,
            TimeCodecMode::Scalar => 1,
        });
        let tensors = self.tensors();
        buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for t in tensors {
            buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for x in t {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path).map_err(io)?;
        file.write_all(&buf).map_err(io)?;
        let meta_path = meta_path_for(path);
        let json = serde_json::to_string_pretty(meta)
            .map_err(|e| Error::Checkpoint(format!("metadata serialization failed: {e}")))?;
        std::fs::write(&meta_path, json).map_err(|e| Error::Io {
            path: meta_path,
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let io = |e: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(io)?
            .read_to_end(&mut bytes)
            .map_err(io)?;
        let mut cur = Cursor::new(&bytes);
        if cur.take(4)? != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a model checkpoint (bad magic)",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let next_u64 =
            |cur: &mut Cursor| -> Result<u64> { Ok(u64::from_le_bytes(cur.take(8)?.try_into().unwrap())) };
        let dims = Dims {
            d: next_u64(&mut cur)? as usize,
            d_a: next_u64(&mut cur)? as usize,
            num_steps: next_u64(&mut cur)? as usize,
            num_base_relations: next_u64(&mut cur)? as usize,
        };
        dims.validate()
            .map_err(|e| Error::Checkpoint(format!("invalid checkpoint dimensions: {e}")))?;
        let shared_relations = cur.take(1)?[0] != 0;
        let time_mode = match cur.take(1)?[0] {
            0 => TimeCodecMode::PerDimension,
            1 => TimeCodecMode::Scalar,
            m => return Err(Error::Checkpoint(format!("unknown time-codec mode tag {m}"))),
        };
        let mut model = ModelParams::init(dims, shared_relations, time_mode, 1.0, 0)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let count = next_u64(&mut cur)? as usize;
        let expected = model.tensors().len();
        if count != expected {
            return Err(Error::Dimension(format!(
                "checkpoint holds {count} tensors, model layout needs {expected}"
            )));
        }
        for (name, t) in model.tensors_mut() {
            let len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
            if len != t.len() {
                return Err(Error::Dimension(format!(
                    "tensor `{name}` has {len} values, expected {}",
                    t.len()
                )));
            }
            for x in t.iter_mut() {
                *x = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            }
        }
        if cur.remaining() != 0 {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last tensor",
                cur.remaining()
            )));
        }
        let meta_path = meta_path_for(path);
        let meta = if meta_path.exists() {
            let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::Io {
                path: meta_path,
                source: e,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Checkpoint(format!("bad metadata sidecar: {e}")))?
        } else {
            CheckpointMeta::default()
        };
        Ok((model, meta))
    }
}

const MAGIC: &[u8; 4] = b"TPCK";
const VERSION: u32 = 1;

/// `model.ckpt` → `model.ckpt.json`.
pub fn meta_path_for(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_mrr: f64,
    pub regime: Option<String>,
    pub granularity: Option<String>,
    pub activation: Option<String>,
    pub time_span: Option<f64>,
    pub note: Option<String>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("checkpoint file truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
