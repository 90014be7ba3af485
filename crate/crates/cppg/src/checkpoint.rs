//! Checkpoints: a JSON header plus named little-endian `f32` tensors.
//!
//! ```text
//! magic b"CPPGCKP1" | u32 header_len | header JSON | u32 n_tensors |
//!   per tensor: u32 name_len, name, u32 ndim, u32 dims[ndim], f32 data
//! ```
//!
//! Model checkpoints hold the four networks (`g_xy.*`, `g_yx.*`, `d_x.*`,
//! `d_y.*`). Training-state checkpoints add the optimizer moments, the best
//! weights so far and the history, so training can resume exactly.

use std::fs;
use std::path::Path;

use cppg_core::nn::{build_models, Inception, KernelScheme, ModelConfig, ModelSet, ParamLayout};
use cppg_core::train::{Adam, BatchLosses, EpochRecord, LossComponents, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CPPGCKP1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConfigDto {
    pub name: String,
    pub g_init_filters: usize,
    pub d_init_filters: usize,
    pub inception: String,
    pub g_kernels: String,
    pub d_kernels: String,
    pub skip_gru: bool,
    pub output_bilstm: bool,
    pub channels: usize,
    pub instance_norm: bool,
}

impl From<&ModelConfig> for ConfigDto {
    fn from(c: &ModelConfig) -> Self {
        Self {
            name: c.name.clone(),
            g_init_filters: c.g_init_filters,
            d_init_filters: c.d_init_filters,
            inception: c.inception.name().into(),
            g_kernels: c.g_kernels.name().into(),
            d_kernels: c.d_kernels.name().into(),
            skip_gru: c.skip_gru,
            output_bilstm: c.output_bilstm,
            channels: c.channels,
            instance_norm: c.instance_norm,
        }
    }
}

impl ConfigDto {
    pub fn to_config(&self) -> std::result::Result<ModelConfig, String> {
        let cfg = ModelConfig {
            name: self.name.clone(),
            g_init_filters: self.g_init_filters,
            d_init_filters: self.d_init_filters,
            inception: Inception::parse(&self.inception).ok_or_else(|| format!("unknown inception mode {:?}", self.inception))?,
            g_kernels: KernelScheme::parse(&self.g_kernels).ok_or_else(|| format!("unknown kernel scheme {:?}", self.g_kernels))?,
            d_kernels: KernelScheme::parse(&self.d_kernels).ok_or_else(|| format!("unknown kernel scheme {:?}", self.d_kernels))?,
            skip_gru: self.skip_gru,
            output_bilstm: self.output_bilstm,
            channels: self.channels,
            instance_norm: self.instance_norm,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Header {
    kind: String,
    config: ConfigDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<StateMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct StateMeta {
    epoch: usize,
    seed: u64,
    best_epoch: Option<usize>,
    adam_steps: [u64; 4],
    history: Vec<HistoryDto>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct HistoryDto {
    epoch: usize,
    /// adv, cycle, id of the Y branch, then of the X branch, then D_y, D_x.
    losses: [f64; 8],
    val_rmse: Vec<f64>,
}

impl From<&EpochRecord> for HistoryDto {
    fn from(r: &EpochRecord) -> Self {
        let l = &r.losses;
        Self { epoch: r.epoch, losses: [l.y.adv, l.y.cycle, l.y.id, l.x.adv, l.x.cycle, l.x.id, l.d_y, l.d_x], val_rmse: r.val_rmse.clone() }
    }
}

impl From<&HistoryDto> for EpochRecord {
    fn from(h: &HistoryDto) -> Self {
        let l = &h.losses;
        EpochRecord {
            epoch: h.epoch,
            losses: BatchLosses {
                y: LossComponents { adv: l[0], cycle: l[1], id: l[2] },
                x: LossComponents { adv: l[3], cycle: l[4], id: l[5] },
                d_y: l[6],
                d_x: l[7],
            },
            val_rmse: h.val_rmse.clone(),
        }
    }
}

struct Named {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn network_tensors(prefix: &str, layout: &ParamLayout, params: &[f32], out: &mut Vec<Named>) {
    for t in &layout.tensors {
        out.push(Named { name: format!("{prefix}.{}", t.name), shape: t.shape.clone(), data: params[t.offset..t.offset + t.len()].to_vec() });
    }
}

fn model_tensors(prefix: &str, m: &ModelSet<f32>, out: &mut Vec<Named>) {
    for (name, layout, params) in m.networks() {
        let p = if prefix.is_empty() { name.to_string() } else { format!("{prefix}.{name}") };
        network_tensors(&p, layout, params, out);
    }
}

fn encode(header: &Header, tensors: &[Named]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("checkpoint header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, self.pos as u64, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}

fn decode(path: &Path, bytes: &[u8]) -> Result<(Header, Vec<Named>)> {
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format(path, 0, "bad magic bytes"));
    }
    let n = r.u32("header length")?;
    let at = r.pos;
    let header: Header = serde_json::from_slice(r.take(n, "header")?).map_err(|e| Error::format(path, at as u64, format!("header JSON: {e}")))?;
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos;
        let n = r.u32("tensor name length")?;
        let name = String::from_utf8(r.take(n, "tensor name")?.to_vec()).map_err(|_| Error::format(path, at as u64, "tensor name is not UTF-8"))?;
        let nd = r.u32("tensor rank")?;
        let shape = (0..nd).map(|_| r.u32("tensor shape")).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = r.take(4 * len, "tensor data")?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        tensors.push(Named { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, r.pos as u64, "trailing bytes after last tensor"));
    }
    Ok((header, tensors))
}

fn fill(path: &Path, prefix: &str, layout: &ParamLayout, params: &mut [f32], tensors: &[Named]) -> Result<()> {
    for t in &layout.tensors {
        let name = format!("{prefix}.{}", t.name);
        let Some(src) = tensors.iter().find(|n| n.name == name) else {
            return Err(Error::Checkpoint { path: path.into(), msg: format!("missing tensor {name}") });
        };
        if src.shape != t.shape {
            return Err(Error::Checkpoint { path: path.into(), msg: format!("tensor {name} has shape {:?}, model expects {:?}", src.shape, t.shape) });
        }
        params[t.offset..t.offset + t.len()].copy_from_slice(&src.data);
    }
    Ok(())
}

fn fill_models(path: &Path, prefix: &str, m: &mut ModelSet<f32>, tensors: &[Named]) -> Result<()> {
    let p = |n: &str| if prefix.is_empty() { n.to_string() } else { format!("{prefix}.{n}") };
    let l = m.g_xy.layout().clone();
    fill(path, &p("g_xy"), &l, m.g_xy.params_mut(), tensors)?;
    let l = m.g_yx.layout().clone();
    fill(path, &p("g_yx"), &l, m.g_yx.params_mut(), tensors)?;
    let l = m.d_x.layout().clone();
    fill(path, &p("d_x"), &l, m.d_x.params_mut(), tensors)?;
    let l = m.d_y.layout().clone();
    fill(path, &p("d_y"), &l, m.d_y.params_mut(), tensors)
}

fn config_of(path: &Path, h: &Header) -> Result<ModelConfig> {
    h.config.to_config().map_err(|msg| Error::Checkpoint { path: path.into(), msg })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write-then-rename so an interrupted run never leaves a torn checkpoint.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn encode_models(m: &ModelSet<f32>) -> Vec<u8> {
    let mut t = Vec::new();
    model_tensors("", m, &mut t);
    encode(&Header { kind: "models".into(), config: (&m.config).into(), state: None }, &t)
}

pub fn decode_models(path: &Path, bytes: &[u8]) -> Result<ModelSet<f32>> {
    let (h, tensors) = decode(path, bytes)?;
    let cfg = config_of(path, &h)?;
    let mut m = build_models::<f32>(&cfg, 0)?;
    fill_models(path, "", &mut m, &tensors)?;
    Ok(m)
}

pub fn save_models(path: &Path, m: &ModelSet<f32>) -> Result<()> {
    write_bytes(path, &encode_models(m))
}

pub fn load_models(path: &Path) -> Result<ModelSet<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_models(path, &bytes)
}

const ADAM_NAMES: [&str; 4] = ["g_xy", "g_yx", "d_x", "d_y"];

pub fn save_state(path: &Path, s: &TrainState) -> Result<()> {
    let mut t = Vec::new();
    model_tensors("current", &s.models, &mut t);
    if let Some(b) = &s.best_models {
        model_tensors("best", b, &mut t);
    }
    for (name, a) in ADAM_NAMES.iter().zip(&s.adam) {
        t.push(Named { name: format!("adam.{name}.m"), shape: vec![a.m.len()], data: a.m.clone() });
        t.push(Named { name: format!("adam.{name}.v"), shape: vec![a.v.len()], data: a.v.clone() });
    }
    let meta = StateMeta {
        epoch: s.epoch,
        seed: s.seed,
        best_epoch: s.best_epoch,
        adam_steps: [s.adam[0].t, s.adam[1].t, s.adam[2].t, s.adam[3].t],
        history: s.history.iter().map(HistoryDto::from).collect(),
    };
    write_bytes(path, &encode(&Header { kind: "train_state".into(), config: (&s.models.config).into(), state: Some(meta) }, &t))
}

pub fn load_state(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (h, tensors) = decode(path, &bytes)?;
    let Some(meta) = &h.state else {
        return Err(Error::Checkpoint { path: path.into(), msg: "not a training-state checkpoint".into() });
    };
    let cfg = config_of(path, &h)?;
    let mut s = TrainState::new(&cfg, meta.seed)?;
    fill_models(path, "current", &mut s.models, &tensors)?;
    if tensors.iter().any(|t| t.name.starts_with("best.")) {
        let mut b = s.models.clone();
        fill_models(path, "best", &mut b, &tensors)?;
        s.best_models = Some(b);
    }
    for (i, name) in ADAM_NAMES.iter().enumerate() {
        let n = s.adam[i].m.len();
        let get = |suffix: &str| -> Result<Vec<f32>> {
            let full = format!("adam.{name}.{suffix}");
            match tensors.iter().find(|t| t.name == full) {
                Some(t) if t.data.len() == n => Ok(t.data.clone()),
                _ => Err(Error::Checkpoint { path: path.into(), msg: format!("missing or mis-sized tensor {full}") }),
            }
        };
        s.adam[i] = Adam { m: get("m")?, v: get("v")?, t: meta.adam_steps[i] };
    }
    s.epoch = meta.epoch;
    s.best_epoch = meta.best_epoch;
    s.history = meta.history.iter().map(EpochRecord::from).collect();
    Ok(s)
}
