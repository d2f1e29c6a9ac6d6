use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::params::{LayerLayout, Layout, ModelParams};
use super::GnnConfig;
use crate::error::{Error, Result};
use crate::graph::{edge_feature, HeterogeneousGraph, NodeKind, EDGE_FEATURE_DIM};
use crate::linalg::Matrix;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: kept entries are scaled by 1/(1-p). Returns the mask
/// (0 or the scale factor per entry).
pub fn dropout(x: &mut [f64], p: f64, rng: &mut impl Rng) -> Vec<f64> {
    let scale = 1.0 / (1.0 - p);
    x.iter_mut()
        .map(|v| {
            let keep = rng.random::<f64>() >= p;
            let m = if keep { scale } else { 0.0 };
            *v *= m;
            m
        })
        .collect()
}

/// Output of the edge MLP for one distinct edge feature.
struct EdgeUnit {
    feature: [f64; EDGE_FEATURE_DIM],
    z1: Vec<f64>,
    /// Row-major h×h message matrix.
    w: Vec<f64>,
}

struct LayerCache {
    units: Vec<EdgeUnit>,
    xhat: Matrix,
    sigma: Vec<f64>,
    /// LayerNorm output before ReLU.
    y: Matrix,
    mask: Option<Vec<f64>>,
}

/// Activations recorded by a forward pass for the backward pass.
pub struct ForwardCache {
    /// Node activations h⁰..h^L, each n_nodes × hidden.
    h: Vec<Matrix>,
    layers: Vec<LayerCache>,
    /// Distinct edge-feature index of every edge.
    unit_of_edge: Vec<usize>,
    pub refined: Matrix,
}

fn node_input(g: &HeterogeneousGraph, global: usize) -> (usize, &[f64]) {
    let n = g.node_ref(global);
    match n.kind {
        NodeKind::Document => (0, g.doc_features.row(n.index)),
        NodeKind::Topic => (1, g.topic_features.row(n.index)),
        NodeKind::Word => (2, g.word_features.row(n.index)),
    }
}

fn check_shapes(g: &HeterogeneousGraph, p: &ModelParams) -> Result<()> {
    let d = &p.dims;
    let ok = (g.n_docs() == 0 || g.doc_features.cols() == d.hybrid)
        && g.topic_features.cols() == d.hybrid
        && (g.n_words() == 0 || g.word_features.cols() == d.word);
    if !ok {
        return Err(Error::domain("model parameters do not match the graph feature widths"));
    }
    if p.len() != Layout::new(d).len {
        return Err(Error::domain("parameter vector has the wrong length"));
    }
    Ok(())
}

/// Distinct edge features and the unit index of every edge.
fn edge_units_index(g: &HeterogeneousGraph) -> (Vec<[f64; EDGE_FEATURE_DIM]>, Vec<usize>) {
    let mut seen: HashMap<[u64; EDGE_FEATURE_DIM], usize> = HashMap::new();
    let mut features = Vec::new();
    let unit_of = g
        .edges
        .iter()
        .map(|e| {
            let f = edge_feature(e);
            let key = f.map(f64::to_bits);
            *seen.entry(key).or_insert_with(|| {
                features.push(f);
                features.len() - 1
            })
        })
        .collect();
    (features, unit_of)
}

fn layer_norm(pre: &[f64], gain: &[f64], bias: &[f64], xhat: &mut [f64], y: &mut [f64]) -> f64 {
    let n = pre.len() as f64;
    let mu = pre.iter().sum::<f64>() / n;
    let var = pre.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    let sigma = (var + LN_EPS).sqrt();
    for i in 0..pre.len() {
        xhat[i] = (pre[i] - mu) / sigma;
        y[i] = gain[i] * xhat[i] + bias[i];
    }
    sigma
}

fn check_finite(m: &Matrix, epoch: usize, stage: impl FnOnce() -> String) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { epoch, stage: stage() })
    }
}

/// Runs the network. Dropout masks are drawn from `rng` only in Train mode.
/// `epoch` is used for divergence error messages.
pub fn forward(
    g: &HeterogeneousGraph,
    params: &ModelParams,
    cfg: &GnnConfig,
    mode: Mode,
    rng: &mut impl Rng,
    epoch: usize,
) -> Result<ForwardCache> {
    check_shapes(g, params)?;
    let layout = params.layout();
    let p = params.data.as_slice();
    let hd = params.dims.hidden;
    let n = g.n_nodes();

    let mut h0 = Matrix::zeros(n, hd);
    for i in 0..n {
        let (kind, x) = node_input(g, i);
        layout.proj[kind].apply(p, x, h0.row_mut(i));
    }
    check_finite(&h0, epoch, || "input projection".into())?;

    let (features, unit_of_edge) = edge_units_index(g);
    let mut hs = vec![h0];
    let mut caches = Vec::with_capacity(layout.layers.len());
    for (l, lay) in layout.layers.iter().enumerate() {
        let units: Vec<EdgeUnit> = features
            .par_iter()
            .map(|f| {
                let mut z1 = vec![0.0; lay.mlp1.out];
                lay.mlp1.apply(p, f, &mut z1);
                let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
                let mut w = vec![0.0; lay.mlp2.out];
                lay.mlp2.apply(p, &a1, &mut w);
                EdgeUnit { feature: *f, z1, w }
            })
            .collect();
        let prev = &hs[l];
        let mut pre = Matrix::zeros(n, hd);
        for i in 0..n {
            let nb = g.neighbors(i);
            if !nb.is_empty() {
                let inv = 1.0 / nb.len() as f64;
                let row = pre.row_mut(i);
                for &(j, e) in nb {
                    let w = &units[unit_of_edge[e]].w;
                    let hj = prev.row(j);
                    for (r, out) in row.iter_mut().enumerate() {
                        *out += inv * crate::linalg::dot(&w[r * hd..(r + 1) * hd], hj);
                    }
                }
            }
            if l >= 1 {
                for (v, r) in pre.row_mut(i).iter_mut().zip(prev.row(i)) {
                    *v += r;
                }
            }
        }
        let gain = &p[lay.ln_gain..lay.ln_gain + hd];
        let bias = &p[lay.ln_bias..lay.ln_bias + hd];
        let mut xhat = Matrix::zeros(n, hd);
        let mut y = Matrix::zeros(n, hd);
        let mut sigma = vec![0.0; n];
        for i in 0..n {
            sigma[i] = layer_norm(pre.row(i), gain, bias, xhat.row_mut(i), y.row_mut(i));
        }
        let mut h = y.clone();
        for v in h.as_mut_slice() {
            *v = v.max(0.0);
        }
        let mask = match mode {
            Mode::Train if cfg.dropout > 0.0 => Some(dropout(h.as_mut_slice(), cfg.dropout, rng)),
            _ => None,
        };
        check_finite(&h, epoch, || format!("layer {}", l + 1))?;
        hs.push(h);
        caches.push(LayerCache {
            units,
            xhat,
            sigma,
            y,
            mask,
        });
    }

    let last = hs.last().unwrap();
    let mut refined = Matrix::zeros(g.n_topics(), params.dims.hybrid);
    for t in 0..g.n_topics() {
        let i = g.n_docs() + t;
        layout.head.apply(p, last.row(i), refined.row_mut(t));
    }
    check_finite(&refined, epoch, || "output head".into())?;
    Ok(ForwardCache {
        h: hs,
        layers: caches,
        unit_of_edge,
        refined,
    })
}

/// Eval-mode forward returning only the refined topic matrix.
pub fn forward_eval(g: &HeterogeneousGraph, params: &ModelParams, cfg: &GnnConfig) -> Result<Matrix> {
    // never drawn from in Eval mode
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    Ok(forward(g, params, cfg, Mode::Eval, &mut rng, 0)?.refined)
}

/// Mean over topics of the squared Euclidean reconstruction error.
pub fn mse_loss(refined: &Matrix, original: &Matrix) -> Result<f64> {
    if refined.rows() != original.rows() || refined.cols() != original.cols() {
        return Err(Error::domain("loss inputs have different shapes"));
    }
    if refined.rows() == 0 {
        return Err(Error::domain("loss over zero topics"));
    }
    let total: f64 = refined
        .as_slice()
        .iter()
        .zip(original.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / refined.rows() as f64)
}

fn layer_backward(
    g: &HeterogeneousGraph,
    p: &[f64],
    grad: &mut [f64],
    lay: &LayerLayout,
    l: usize,
    cache: &ForwardCache,
    mut dh: Matrix,
    hd: usize,
) -> Matrix {
    let lc = &cache.layers[l];
    let n = dh.rows();
    // dropout and ReLU
    if let Some(mask) = &lc.mask {
        for (d, m) in dh.as_mut_slice().iter_mut().zip(mask) {
            *d *= m;
        }
    }
    for (d, y) in dh.as_mut_slice().iter_mut().zip(lc.y.as_slice()) {
        if *y <= 0.0 {
            *d = 0.0;
        }
    }
    // LayerNorm
    let gain = &p[lay.ln_gain..lay.ln_gain + hd];
    let mut dpre = Matrix::zeros(n, hd);
    for i in 0..n {
        let dy = dh.row(i);
        let xhat = lc.xhat.row(i);
        let mut dxhat = vec![0.0; hd];
        for k in 0..hd {
            grad[lay.ln_gain + k] += dy[k] * xhat[k];
            grad[lay.ln_bias + k] += dy[k];
            dxhat[k] = dy[k] * gain[k];
        }
        let m1 = dxhat.iter().sum::<f64>() / hd as f64;
        let m2 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / hd as f64;
        let inv = 1.0 / lc.sigma[i];
        for (k, out) in dpre.row_mut(i).iter_mut().enumerate() {
            *out = inv * (dxhat[k] - m1 - xhat[k] * m2);
        }
    }
    // aggregation and residual
    let prev = &cache.h[l];
    let mut dprev = if l >= 1 { dpre.clone() } else { Matrix::zeros(n, hd) };
    let mut dw: Vec<Vec<f64>> = lc.units.iter().map(|_| vec![0.0; hd * hd]).collect();
    for i in 0..n {
        let nb = g.neighbors(i);
        if nb.is_empty() {
            continue;
        }
        let inv = 1.0 / nb.len() as f64;
        let da = dpre.row(i);
        for &(j, e) in nb {
            let u = cache.unit_of_edge[e];
            let w = &lc.units[u].w;
            let hj = prev.row(j);
            let dwu = &mut dw[u];
            for r in 0..hd {
                let d = inv * da[r];
                if d == 0.0 {
                    continue;
                }
                for c in 0..hd {
                    dwu[r * hd + c] += d * hj[c];
                }
                let drow = dprev.row_mut(j);
                for c in 0..hd {
                    drow[c] += d * w[r * hd + c];
                }
            }
        }
    }
    // edge MLP
    for (unit, dz2) in lc.units.iter().zip(&dw) {
        let a1: Vec<f64> = unit.z1.iter().map(|v| v.max(0.0)).collect();
        let mut da1 = vec![0.0; a1.len()];
        lay.mlp2.backward(p, grad, &a1, dz2, Some(&mut da1));
        for (d, z) in da1.iter_mut().zip(&unit.z1) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        lay.mlp1.backward(p, grad, &unit.feature, &da1, None);
    }
    dprev
}

/// Gradient of `mse_loss(cache.refined, g.topic_features)` with respect to
/// every parameter.
pub fn backward(g: &HeterogeneousGraph, params: &ModelParams, cache: &ForwardCache) -> Result<Vec<f64>> {
    let layout = params.layout();
    let p = params.data.as_slice();
    let hd = params.dims.hidden;
    let n = g.n_nodes();
    let nt = g.n_topics();
    let mut grad = vec![0.0; params.len()];

    let last = cache.h.last().unwrap();
    let mut dh = Matrix::zeros(n, hd);
    for t in 0..nt {
        let i = g.n_docs() + t;
        let dout: Vec<f64> = cache
            .refined
            .row(t)
            .iter()
            .zip(g.topic_features.row(t))
            .map(|(a, b)| 2.0 * (a - b) / nt as f64)
            .collect();
        layout.head.backward(p, &mut grad, last.row(i), &dout, Some(dh.row_mut(i)));
    }
    for (l, lay) in layout.layers.iter().enumerate().rev() {
        dh = layer_backward(g, p, &mut grad, lay, l, cache, dh, hd);
    }
    for i in 0..n {
        let (kind, x) = node_input(g, i);
        layout.proj[kind].backward(p, &mut grad, x, dh.row(i), None);
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(grad)
}

/// Forward plus backward: (loss, gradient, refined).
pub fn loss_and_grad(
    g: &HeterogeneousGraph,
    params: &ModelParams,
    cfg: &GnnConfig,
    mode: Mode,
    rng: &mut impl Rng,
    epoch: usize,
) -> Result<(f64, Vec<f64>, Matrix)> {
    let cache = forward(g, params, cfg, mode, rng, epoch)?;
    let loss = mse_loss(&cache.refined, &g.topic_features)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            epoch,
            stage: "loss".into(),
        });
    }
    let grad = backward(g, params, &cache)?;
    Ok((loss, grad, cache.refined))
}
