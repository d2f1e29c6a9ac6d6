use std::fs;
use std::io::Read as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GnnConfig;
use crate::backends::write_atomic;
use crate::error::{Error, Result};
use crate::fusion::xavier_uniform;
use crate::graph::{HeterogeneousGraph, EDGE_FEATURE_DIM};
use crate::linalg::dot;

/// Shape-defining sizes of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Document and topic feature width (d_s + d_b).
    pub hybrid: usize,
    /// Word feature width (d_b).
    pub word: usize,
    pub hidden: usize,
    pub edge_hidden: usize,
    pub n_layers: usize,
}

impl Dims {
    pub fn new(hybrid: usize, word: usize, cfg: &GnnConfig) -> Self {
        Dims {
            hybrid,
            word,
            hidden: cfg.hidden_dim,
            edge_hidden: cfg.edge_mlp_hidden,
            n_layers: cfg.n_layers,
        }
    }

    pub fn for_graph(g: &HeterogeneousGraph, cfg: &GnnConfig) -> Self {
        Dims::new(g.topic_features.cols(), g.word_features.cols(), cfg)
    }
}

/// Dense affine map `y = W x + b` stored at fixed offsets of the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    fn alloc(next: &mut usize, inp: usize, out: usize) -> Self {
        let w = *next;
        let b = w + inp * out;
        *next = b + out;
        Linear { w, b, inp, out }
    }

    pub fn apply(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        let w = &p[self.w..self.w + self.inp * self.out];
        for o in 0..self.out {
            y[o] = p[self.b + o] + dot(&w[o * self.inp..(o + 1) * self.inp], x);
        }
    }

    /// Accumulates parameter gradients and, if given, the input gradient.
    pub fn backward(&self, p: &[f64], grad: &mut [f64], x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        for o in 0..self.out {
            let d = dy[o];
            if d == 0.0 {
                continue;
            }
            grad[self.b + o] += d;
            let row = self.w + o * self.inp;
            for (g, xi) in grad[row..row + self.inp].iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if let Some(dx) = dx {
            for o in 0..self.out {
                let d = dy[o];
                if d == 0.0 {
                    continue;
                }
                let row = &p[self.w + o * self.inp..self.w + (o + 1) * self.inp];
                for (g, w) in dx.iter_mut().zip(row) {
                    *g += w * d;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    pub mlp1: Linear,
    pub mlp2: Linear,
    pub ln_gain: usize,
    pub ln_bias: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    /// Document, topic and word input projections.
    pub proj: [Linear; 3],
    pub layers: Vec<LayerLayout>,
    pub head: Linear,
    pub len: usize,
}

impl Layout {
    pub fn new(d: &Dims) -> Self {
        let mut next = 0;
        let proj = [
            Linear::alloc(&mut next, d.hybrid, d.hidden),
            Linear::alloc(&mut next, d.hybrid, d.hidden),
            Linear::alloc(&mut next, d.word, d.hidden),
        ];
        let layers = (0..d.n_layers)
            .map(|_| {
                let mlp1 = Linear::alloc(&mut next, EDGE_FEATURE_DIM, d.edge_hidden);
                let mlp2 = Linear::alloc(&mut next, d.edge_hidden, d.hidden * d.hidden);
                let ln_gain = next;
                let ln_bias = next + d.hidden;
                next += 2 * d.hidden;
                LayerLayout {
                    mlp1,
                    mlp2,
                    ln_gain,
                    ln_bias,
                }
            })
            .collect();
        let head = Linear::alloc(&mut next, d.hidden, d.hybrid);
        Layout {
            proj,
            layers,
            head,
            len: next,
        }
    }
}

/// All trainable parameters as one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: Dims,
    pub data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: Dims) -> Self {
        ModelParams {
            dims,
            data: vec![0.0; Layout::new(&dims).len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.dims)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat index range of each named parameter block, in storage order.
    pub fn blocks(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let l = self.layout();
        let mut out = Vec::new();
        let lin = |name: &str, x: &Linear, out: &mut Vec<(String, std::ops::Range<usize>)>| {
            out.push((format!("{name}.weight"), x.w..x.b));
            out.push((format!("{name}.bias"), x.b..x.b + x.out));
        };
        for (name, p) in ["proj_doc", "proj_topic", "proj_word"].iter().zip(&l.proj) {
            lin(name, p, &mut out);
        }
        for (i, layer) in l.layers.iter().enumerate() {
            lin(&format!("layer{i}.edge_mlp1"), &layer.mlp1, &mut out);
            lin(&format!("layer{i}.edge_mlp2"), &layer.mlp2, &mut out);
            out.push((format!("layer{i}.ln_gain"), layer.ln_gain..layer.ln_gain + self.dims.hidden));
            out.push((format!("layer{i}.ln_bias"), layer.ln_bias..layer.ln_bias + self.dims.hidden));
        }
        lin("head", &l.head, &mut out);
        out
    }
}

/// Xavier-uniform weights, zero biases, unit LayerNorm gains.
pub fn init_params(dims: Dims, seed: u64) -> ModelParams {
    let mut p = ModelParams::zeros(dims);
    let l = p.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |lin: &Linear, data: &mut [f64]| {
        let m = xavier_uniform(lin.out, lin.inp, lin.inp, lin.out, &mut rng);
        data[lin.w..lin.b].copy_from_slice(m.as_slice());
    };
    for lin in &l.proj {
        fill(lin, &mut p.data);
    }
    for layer in &l.layers {
        fill(&layer.mlp1, &mut p.data);
        fill(&layer.mlp2, &mut p.data);
        p.data[layer.ln_gain..layer.ln_gain + dims.hidden].fill(1.0);
    }
    fill(&l.head, &mut p.data);
    p
}

const MAGIC: &[u8; 8] = b"TRCKPT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dims: Dims,
    pub config: GnnConfig,
    pub seed: u64,
    pub n_params: usize,
    /// Hash of the pipeline configuration that produced the checkpoint.
    pub config_hash: Option<String>,
}

/// Magic, u64 header length, JSON header, then little-endian f64 parameters.
pub fn encode_checkpoint(params: &ModelParams, cfg: &GnnConfig, config_hash: Option<&str>) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        dims: params.dims,
        config: cfg.clone(),
        seed: cfg.seed,
        n_params: params.len(),
        config_hash: config_hash.map(str::to_string),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, ModelParams)> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    let mut len = [0u8; 8];
    let bad = |m: &str| Error::Schema(format!("checkpoint: {m}"));
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let len = u64::from_le_bytes(len) as usize;
    if r.len() < len {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&r[..len])?;
    let blob = &r[len..];
    let expected = Layout::new(&header.dims).len;
    if header.n_params != expected || blob.len() != 8 * expected {
        return Err(bad("parameter blob does not match the declared shapes"));
    }
    let data = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ModelParams {
        dims: header.dims,
        data,
    };
    if !params.is_finite() {
        return Err(Error::Numeric("checkpoint holds non-finite parameters".into()));
    }
    Ok((header, params))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, cfg: &GnnConfig, config_hash: Option<&str>) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params, cfg, config_hash)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
