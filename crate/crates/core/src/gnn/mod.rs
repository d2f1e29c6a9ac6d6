//! Edge-conditioned graph network that refines topic embeddings.
//!
//! Each edge feature is mapped by a small MLP to an h×h matrix, messages
//! `W_ij h_j` are mean-aggregated, then LayerNorm, ReLU and dropout follow.
//! Gradients are computed by hand-written reverse-mode passes.

mod model;
mod params;

pub use model::{backward, dropout, forward, forward_eval, loss_and_grad, mse_loss, ForwardCache, Mode, LN_EPS};
pub use params::{
    decode_checkpoint, encode_checkpoint, init_params, load_checkpoint, save_checkpoint, CheckpointHeader, Dims,
    ModelParams,
};

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeterogeneousGraph;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub edge_mlp_hidden: usize,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            hidden_dim: 64,
            n_layers: 3,
            dropout: 0.2,
            lr: 0.001,
            epochs: 100,
            edge_mlp_hidden: 32,
            seed: 0,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.edge_mlp_hidden == 0 || self.n_layers == 0 {
            return Err(Error::Config("GNN dimensions and layer count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t as i32);
    let c2 = 1.0 - BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Train-mode loss of every epoch, before that epoch's update.
    pub loss_per_epoch: Vec<f64>,
    /// Eval-mode loss of the initial parameters.
    pub initial_loss: f64,
    /// Eval-mode loss of the final parameters.
    pub final_loss: f64,
    pub seed: u64,
}

impl TrainReport {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.loss_per_epoch.iter().enumerate() {
            let _ = writeln!(out, "{},{}", e + 1, l);
        }
        out
    }
}

/// Full-batch training. Divergence aborts with the report collected so far.
pub fn train(
    g: &HeterogeneousGraph,
    cfg: &GnnConfig,
) -> std::result::Result<(ModelParams, Matrix, TrainReport), (Error, Option<TrainReport>)> {
    cfg.validate().map_err(|e| (e, None))?;
    if g.n_topics() == 0 {
        return Err((Error::domain("cannot train on a graph without topics"), None));
    }
    let mut params = init_params(Dims::for_graph(g, cfg), cfg.seed);
    let initial = forward_eval(g, &params, cfg)
        .and_then(|r| mse_loss(&r, &g.topic_features))
        .map_err(|e| (e, None))?;
    let mut report = TrainReport {
        loss_per_epoch: Vec::with_capacity(cfg.epochs),
        initial_loss: initial,
        final_loss: initial,
        seed: cfg.seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(params.len());
    for epoch in 1..=cfg.epochs {
        let (loss, grad, _) = match loss_and_grad(g, &params, cfg, Mode::Train, &mut rng, epoch) {
            Ok(x) => x,
            Err(e) => return Err((e, Some(report))),
        };
        report.loss_per_epoch.push(loss);
        adam_step(&mut params.data, &grad, &mut adam, cfg.lr);
        if !params.is_finite() {
            return Err((
                Error::Divergence {
                    epoch,
                    stage: "optimizer step".into(),
                },
                Some(report),
            ));
        }
    }
    let refined = match forward_eval(g, &params, cfg) {
        Ok(r) => r,
        Err(e) => return Err((e, Some(report))),
    };
    report.final_loss = match mse_loss(&refined, &g.topic_features) {
        Ok(l) => l,
        Err(e) => return Err((e, Some(report))),
    };
    Ok((params, refined, report))
}
