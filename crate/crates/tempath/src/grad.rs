//! Scoring, multi-class log-loss, and the analytic reverse pass.
//!
//! Gradients are accumulated into a `ModelParams`-shaped container by
//! replaying the cached forward values of each step in reverse. Entities the
//! frontier never reached have a structurally zero state, score exactly 0 and
//! contribute no parameter gradient beyond the softmax term.

use crate::data::EntityId;
use crate::encode::{EncodeOptions, EncodingState};
use crate::error::{Error, Result};
use crate::frontier::FrontierTrace;
use crate::linalg::{axpy, dot, log_sum_exp, matvec_t, outer_acc};
use crate::params::ModelParams;
use std::collections::BTreeMap;

/// f(q, e) = wᵀ h^L(e); exactly 0 for unreached entities.
pub fn score(params: &ModelParams, state: &EncodingState, entity: EntityId) -> f64 {
    match state.h_layers.last().and_then(|m| m.get(&entity)) {
        Some(h) => dot(&params.score_w, h),
        None => 0.0,
    }
}

/// Scores for every entity id in `0..num_entities`.
pub fn scores_all(params: &ModelParams, state: &EncodingState, num_entities: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_entities];
    for (&e, h) in state.final_entities() {
        if e < num_entities {
            out[e] = dot(&params.score_w, h);
        }
    }
    out
}

/// Multi-class log-loss: −f(gold) + log Σ_e exp f(e) over all entities.
pub fn loss(scores: &[f64], gold: EntityId) -> f64 {
    assert!(gold < scores.len(), "gold entity out of range");
    log_sum_exp(scores) - scores[gold]
}

/// Per-step, per-edge ∂objective/∂α values, aligned with the trace edge order.
#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub edge_alpha_grads: Vec<Vec<f64>>,
}

/// Reverse pass from arbitrary final-layer seeds `∂objective/∂h^L(e)`.
///
/// Accumulates parameter gradients into `grads` (same shape as `params`) and
/// returns the attention-weight gradients per edge for attribution.
pub fn backward_from(
    params: &ModelParams,
    trace: &FrontierTrace,
    state: &EncodingState,
    seed: &BTreeMap<EntityId, Vec<f64>>,
    opts: &EncodeOptions,
    grads: &mut ModelParams,
) -> Result<BackwardResult> {
    let dims = params.dims;
    let d = dims.d;
    if state.steps.len() != dims.num_steps || trace.steps.len() != dims.num_steps {
        return Err(Error::Dimension(
            "encoding state does not match model step count".into(),
        ));
    }
    let mut edge_alpha_grads: Vec<Vec<f64>> = state
        .steps
        .iter()
        .map(|s| vec![0.0; s.edges.len()])
        .collect();
    // ∂objective/∂h^{ℓ}(e) for the layer currently being consumed.
    let mut g_layer: BTreeMap<EntityId, Vec<f64>> = seed.clone();
    for si in (0..dims.num_steps).rev() {
        let step = &state.steps[si];
        let edges = &trace.steps[si].edges;
        let rel_slot = if params.shared_relations { 0 } else { si };
        let q_rel = trace.query.relation;
        // Per-destination upstream through dropout, activation and W.
        let mut g_preagg: Vec<Option<Vec<f64>>> = vec![None; step.dst_order.len()];
        for (di, &dst) in step.dst_order.iter().enumerate() {
            let Some(g_out) = g_layer.get(&dst) else { continue };
            let mut g_pre = vec![0.0; d];
            for i in 0..d {
                let g_act = g_out[i] * step.mask[di][i];
                g_pre[i] = g_act * opts.activation.derivative(step.pre[di][i], step.act[di][i]);
            }
            outer_acc(&mut grads.w_agg[si], &g_pre, &step.pre_agg[di]);
            let mut g = vec![0.0; d];
            matvec_t(&params.w_agg[si], &g_pre, d, d, &mut g);
            g_preagg[di] = Some(g);
        }
        let mut g_prev: BTreeMap<EntityId, Vec<f64>> = BTreeMap::new();
        for (j, (edge, ec)) in edges.iter().zip(&step.edges).enumerate() {
            let di = step.edge_dst[j];
            let Some(g_pa) = &g_preagg[di] else { continue };
            let g_alpha = dot(g_pa, &ec.msg);
            edge_alpha_grads[si][j] = g_alpha;
            // message branch
            let mut g_msg = vec![0.0; d];
            axpy(&mut g_msg, ec.alpha, g_pa);
            // attention branch
            let mut g_concat = vec![0.0; 4 * d];
            if !opts.freeze_attention {
                let g_logit = g_alpha * ec.alpha * (1.0 - ec.alpha);
                if g_logit != 0.0 {
                    axpy(&mut grads.attn_v, g_logit, &ec.z);
                    let mut g_zp = vec![0.0; dims.d_a];
                    for k in 0..dims.d_a {
                        if ec.z_pre[k] > 0.0 {
                            g_zp[k] = g_logit * params.attn_v[k];
                        }
                    }
                    outer_acc(&mut grads.attn_w, &g_zp, &ec.concat);
                    matvec_t(&params.attn_w, &g_zp, dims.d_a, 4 * d, &mut g_concat);
                }
            }
            // split the concat gradient: [src ‖ rel ‖ rq ‖ time]
            let (g_src_c, rest) = g_concat.split_at(d);
            let (g_rel_c, rest) = rest.split_at(d);
            let (g_rq_c, g_time_c) = rest.split_at(d);
            // relation embedding rows
            {
                let table = &mut grads.rel_emb[rel_slot];
                let row = &mut table[edge.rel * d..(edge.rel + 1) * d];
                add_two(row, &g_msg, g_rel_c);
                let rq_row = &mut table[q_rel * d..(q_rel + 1) * d];
                axpy(rq_row, 1.0, g_rq_c);
            }
            // time codec
            let dt = (edge.time - trace.query.time) as f64;
            let mut g_time = g_msg.clone();
            axpy(&mut g_time, 1.0, g_time_c);
            params.time.accumulate_grad(dt, &g_time, &mut grads.time);
            // source hidden state → previous layer
            if si > 0 && state.h_layers[si].contains_key(&edge.src) {
                let mut g_src = g_msg;
                axpy(&mut g_src, 1.0, g_src_c);
                match g_prev.get_mut(&edge.src) {
                    Some(acc) => axpy(acc, 1.0, &g_src),
                    None => {
                        g_prev.insert(edge.src, g_src);
                    }
                }
            }
        }
        g_layer = g_prev;
    }
    Ok(BackwardResult { edge_alpha_grads })
}

fn add_two(dst: &mut [f64], a: &[f64], b: &[f64]) {
    for i in 0..dst.len() {
        dst[i] += a[i] + b[i];
    }
}

/// Softmax cross-entropy backward for one query; returns (loss, attribution).
///
/// Seeds `∂L/∂h^L(e) = (p_e − 1[e = gold])·w` for every reached entity,
/// accumulates the scoring-vector gradient `Σ p_e h_e − h_gold`, then runs
/// the reverse pass.
pub fn loss_backward(
    params: &ModelParams,
    trace: &FrontierTrace,
    state: &EncodingState,
    gold: EntityId,
    num_entities: usize,
    opts: &EncodeOptions,
    grads: &mut ModelParams,
) -> Result<(f64, BackwardResult)> {
    if gold >= num_entities {
        return Err(Error::Invalid(format!(
            "gold entity {gold} out of range ({num_entities} entities)"
        )));
    }
    let scores = scores_all(params, state, num_entities);
    let l = loss(&scores, gold);
    let lse = log_sum_exp(&scores);
    let prob = |e: EntityId| (scores[e] - lse).exp();
    let mut seed: BTreeMap<EntityId, Vec<f64>> = BTreeMap::new();
    for (&e, h) in state.final_entities() {
        let g_score = prob(e) - if e == gold { 1.0 } else { 0.0 };
        axpy(&mut grads.score_w, g_score, h);
        let mut g_h = vec![0.0; params.dims.d];
        axpy(&mut g_h, g_score, &params.score_w);
        seed.insert(e, g_h);
    }
    let back = backward_from(params, trace, state, &seed, opts, grads)?;
    Ok((l, back))
}
