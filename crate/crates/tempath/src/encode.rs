//! Recursive frontier encoding.
//!
//! Starting from h⁰(e_q) = 0, each step turns the trace's edge layer into
//! messages `m = h_src + h_rel + h_time`, weighs them with an edge-level
//! sigmoid attention `α = σ(vᵀ relu(W_a [h_src ‖ h_rel ‖ h_rq ‖ h_time]))`,
//! sums per destination and applies `h_dst = δ(W Σ α·m)`. All intermediate
//! values are cached so the analytic backward pass can replay the step.

use crate::data::EntityId;
use crate::error::{Error, Result};
use crate::frontier::FrontierTrace;
use crate::linalg::{add_assign, axpy, dot, matvec, sigmoid};
use crate::params::{Activation, ModelParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeOptions {
    pub mode: Mode,
    pub activation: Activation,
    /// Dropout probability on step outputs (inverted dropout, train mode only).
    pub dropout: f64,
    /// Seed for the dropout masks.
    pub seed: u64,
    /// Pin every attention weight to 1 (ablation / test hook).
    pub freeze_attention: bool,
}

impl EncodeOptions {
    pub fn eval(activation: Activation) -> Self {
        EncodeOptions {
            mode: Mode::Eval,
            activation,
            dropout: 0.0,
            seed: 0,
            freeze_attention: false,
        }
    }

    pub fn train(activation: Activation, dropout: f64, seed: u64) -> Self {
        EncodeOptions {
            mode: Mode::Train,
            activation,
            dropout,
            seed,
            freeze_attention: false,
        }
    }
}

/// Cached per-edge forward values.
#[derive(Debug, Clone)]
pub struct EdgeCache {
    pub h_time: Vec<f64>,
    pub msg: Vec<f64>,
    /// [h_src ‖ h_rel ‖ h_rq ‖ h_time], length 4d.
    pub concat: Vec<f64>,
    /// Attention pre-activation W_a·concat, length d_a.
    pub z_pre: Vec<f64>,
    /// relu(z_pre).
    pub z: Vec<f64>,
    pub logit: f64,
    pub alpha: f64,
}

/// Cached per-step forward values.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub edges: Vec<EdgeCache>,
    /// Destination of each edge, as an index into `dst_order`.
    pub edge_dst: Vec<usize>,
    /// Step destinations, ascending.
    pub dst_order: Vec<EntityId>,
    /// Per destination: Σ α·msg.
    pub pre_agg: Vec<Vec<f64>>,
    /// Per destination: W·pre_agg (pre-activation).
    pub pre: Vec<Vec<f64>>,
    /// Per destination: δ(pre), before dropout.
    pub act: Vec<Vec<f64>>,
    /// Per destination: inverted-dropout mask (all ones in eval mode).
    pub mask: Vec<Vec<f64>>,
    /// Per destination: final hidden state mask ⊙ act.
    pub out: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EncodingState {
    /// Hidden states per layer, `h_layers[0]` = {e_q ↦ 0}. Entities absent
    /// from a layer have an implicit all-zero state.
    pub h_layers: Vec<BTreeMap<EntityId, Vec<f64>>>,
    pub steps: Vec<StepCache>,
}

impl EncodingState {
    /// Final-layer hidden state, zeros if the entity was never reached.
    pub fn final_state<'a>(&'a self, entity: EntityId, zeros: &'a [f64]) -> &'a [f64] {
        self.h_layers
            .last()
            .and_then(|m| m.get(&entity))
            .map(|v| v.as_slice())
            .unwrap_or(zeros)
    }

    pub fn final_entities(&self) -> impl Iterator<Item = (&EntityId, &Vec<f64>)> {
        self.h_layers.last().into_iter().flat_map(|m| m.iter())
    }
}

/// m = h_src + h_rel + h_time.
pub fn message(h_src: &[f64], h_rel: &[f64], h_time: &[f64]) -> Result<Vec<f64>> {
    if h_src.len() != h_rel.len() || h_src.len() != h_time.len() {
        return Err(Error::Dimension(format!(
            "message parts disagree: {} / {} / {}",
            h_src.len(),
            h_rel.len(),
            h_time.len()
        )));
    }
    let mut m = h_src.to_vec();
    add_assign(&mut m, h_rel);
    add_assign(&mut m, h_time);
    Ok(m)
}

/// α = σ(vᵀ relu(W_a [h_src ‖ h_rel ‖ h_rq ‖ h_time])) ∈ (0, 1).
pub fn attention_weight(
    params: &ModelParams,
    h_src: &[f64],
    h_rel: &[f64],
    h_rq: &[f64],
    h_time: &[f64],
) -> Result<f64> {
    let d = params.dims.d;
    for (name, v) in [("h_src", h_src), ("h_rel", h_rel), ("h_rq", h_rq), ("h_time", h_time)] {
        if v.len() != d {
            return Err(Error::Dimension(format!(
                "{name} has length {}, model width is {d}",
                v.len()
            )));
        }
    }
    let mut concat = Vec::with_capacity(4 * d);
    concat.extend_from_slice(h_src);
    concat.extend_from_slice(h_rel);
    concat.extend_from_slice(h_rq);
    concat.extend_from_slice(h_time);
    let mut z = vec![0.0; params.dims.d_a];
    matvec(&params.attn_w, &concat, params.dims.d_a, 4 * d, &mut z);
    for x in &mut z {
        *x = x.max(0.0);
    }
    Ok(sigmoid(dot(&params.attn_v, &z)))
}

/// h = δ(W s) for an already-weighted message sum s.
pub fn aggregate(w_agg: &[f64], weighted_sum: &[f64], activation: Activation) -> Result<Vec<f64>> {
    let d = weighted_sum.len();
    if w_agg.len() != d * d {
        return Err(Error::Dimension(format!(
            "aggregation matrix has {} entries, expected {}",
            w_agg.len(),
            d * d
        )));
    }
    let mut out = vec![0.0; d];
    matvec(w_agg, weighted_sum, d, d, &mut out);
    for x in &mut out {
        *x = activation.apply(*x);
    }
    Ok(out)
}

fn dropout_mask(d: usize, p: f64, seed: u64, step: usize, dst: EntityId) -> Vec<f64> {
    let mix = seed
        ^ (step as u64).wrapping_mul(0xA076_1D64_78BD_642F)
        ^ (dst as u64).wrapping_mul(0xE703_7ED1_A0B4_28DB);
    let mut rng = ChaCha12Rng::seed_from_u64(mix);
    let keep = 1.0 - p;
    (0..d)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 / keep })
        .collect()
}

/// Run the recursive encoder over a collected trace.
pub fn encode_query(
    params: &ModelParams,
    trace: &FrontierTrace,
    opts: &EncodeOptions,
) -> Result<EncodingState> {
    let dims = params.dims;
    let d = dims.d;
    if trace.steps.len() != dims.num_steps {
        return Err(Error::Dimension(format!(
            "trace has {} steps, model encodes {}",
            trace.steps.len(),
            dims.num_steps
        )));
    }
    if trace.identity_rel + 1 != dims.rel_rows() {
        return Err(Error::Dimension(format!(
            "trace identity relation {} does not match model relation table ({} rows)",
            trace.identity_rel,
            dims.rel_rows()
        )));
    }
    if trace.query.relation >= dims.rel_rows() {
        return Err(Error::Dimension(format!(
            "query relation {} out of range",
            trace.query.relation
        )));
    }
    if !(0.0..1.0).contains(&opts.dropout) {
        return Err(Error::config("dropout", "must lie in [0, 1)"));
    }
    let dropout = if opts.mode == Mode::Train { opts.dropout } else { 0.0 };
    let zeros = vec![0.0; d];
    let mut h_layers: Vec<BTreeMap<EntityId, Vec<f64>>> = Vec::with_capacity(dims.num_steps + 1);
    h_layers.push(BTreeMap::from([(trace.query.entity, zeros.clone())]));
    let mut steps = Vec::with_capacity(dims.num_steps);
    for (si, step) in trace.steps.iter().enumerate() {
        let h_rq = params.rel_vec(si, trace.query.relation);
        let prev = &h_layers[si];
        let mut dst_order: Vec<EntityId> = Vec::new();
        for e in &step.edges {
            if e.rel >= dims.rel_rows() {
                return Err(Error::Dimension(format!(
                    "edge relation {} out of range at step {}",
                    e.rel,
                    si + 1
                )));
            }
            dst_order.push(e.dst);
        }
        dst_order.sort_unstable();
        dst_order.dedup();
        let dst_index: BTreeMap<EntityId, usize> =
            dst_order.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut edges = Vec::with_capacity(step.edges.len());
        let mut edge_dst = Vec::with_capacity(step.edges.len());
        let mut pre_agg = vec![vec![0.0; d]; dst_order.len()];
        for e in &step.edges {
            let h_src = prev.get(&e.src).map(|v| v.as_slice()).unwrap_or(&zeros);
            let h_rel = params.rel_vec(si, e.rel);
            let dt = (e.time - trace.query.time) as f64;
            let h_time = params.time.encode_vec(dt);
            let msg = message(h_src, h_rel, &h_time)?;
            let mut concat = Vec::with_capacity(4 * d);
            concat.extend_from_slice(h_src);
            concat.extend_from_slice(h_rel);
            concat.extend_from_slice(h_rq);
            concat.extend_from_slice(&h_time);
            let mut z_pre = vec![0.0; dims.d_a];
            matvec(&params.attn_w, &concat, dims.d_a, 4 * d, &mut z_pre);
            let z: Vec<f64> = z_pre.iter().map(|&x| x.max(0.0)).collect();
            let logit = dot(&params.attn_v, &z);
            let alpha = if opts.freeze_attention { 1.0 } else { sigmoid(logit) };
            let di = dst_index[&e.dst];
            axpy(&mut pre_agg[di], alpha, &msg);
            edge_dst.push(di);
            edges.push(EdgeCache {
                h_time,
                msg,
                concat,
                z_pre,
                z,
                logit,
                alpha,
            });
        }
        let mut pre = Vec::with_capacity(dst_order.len());
        let mut act = Vec::with_capacity(dst_order.len());
        let mut mask = Vec::with_capacity(dst_order.len());
        let mut out = Vec::with_capacity(dst_order.len());
        let mut layer: BTreeMap<EntityId, Vec<f64>> = BTreeMap::new();
        for (di, &dst) in dst_order.iter().enumerate() {
            let mut p = vec![0.0; d];
            matvec(&params.w_agg[si], &pre_agg[di], d, d, &mut p);
            let a: Vec<f64> = p.iter().map(|&x| opts.activation.apply(x)).collect();
            let m = if dropout > 0.0 {
                dropout_mask(d, dropout, opts.seed, si, dst)
            } else {
                vec![1.0; d]
            };
            let o: Vec<f64> = a.iter().zip(&m).map(|(x, k)| x * k).collect();
            layer.insert(dst, o.clone());
            pre.push(p);
            act.push(a);
            mask.push(m);
            out.push(o);
        }
        h_layers.push(layer);
        steps.push(StepCache {
            edges,
            edge_dst,
            dst_order,
            pre_agg,
            pre,
            act,
            mask,
            out,
        });
    }
    Ok(EncodingState { h_layers, steps })
}
