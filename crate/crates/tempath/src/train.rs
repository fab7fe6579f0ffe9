//! Mini-batch training with per-query traces, Adam, and early stopping.
//!
//! Interpolation splits the training set into path-extraction facts and query
//! quadruples (so a query never scores itself through a direct link);
//! extrapolation keeps the whole training graph as background because the
//! `t < t_q` bound already hides each query from its own frontier. Every
//! query quadruple is trained in both directions via the inverse relation.

use crate::adam::{AdamConfig, AdamState};
use crate::data::{split_train, Dataset, EntityId, Quadruple, TemporalGraph};
use crate::encode::{encode_query, EncodeOptions, Mode};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, FilterIndex, Metrics};
use crate::frontier::{collect, Chronology, CollectOptions, FrontierTrace, Query, Regime};
use crate::grad::loss_backward;
use crate::params::{Activation, ModelParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub regime: Regime,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub activation: Activation,
    /// Interpolation only: fraction of training quads used as background facts.
    pub fact_fraction: f64,
    pub self_loops: bool,
    pub degree_cap: Option<usize>,
    pub chronology: Chronology,
    pub freeze_attention: bool,
    pub seed: u64,
    /// Validate every this many epochs (0 disables validation).
    pub val_every: usize,
    /// Stop after this many consecutive validations without a new best MRR
    /// (0 disables early stopping).
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regime: Regime::Interpolation,
            epochs: 20,
            batch_size: 10,
            lr: 3e-4,
            dropout: 0.2,
            activation: Activation::Identity,
            fact_fraction: 0.75,
            self_loops: true,
            degree_cap: None,
            chronology: Chronology::Relaxed,
            freeze_attention: false,
            seed: 0,
            val_every: 1,
            patience: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_mrr: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub best_epoch: usize,
    pub best_val_mrr: Option<f64>,
    pub log: Vec<LogRecord>,
    pub final_val: Option<Metrics>,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x
}

/// Both prediction directions of each base quadruple.
pub fn directed_queries(
    quads: &[Quadruple],
    dataset: &Dataset,
    regime: Regime,
) -> Vec<(Query, EntityId)> {
    quads
        .iter()
        .flat_map(|q| {
            [
                (Query::new(q.subject, q.relation, q.time, regime), q.object),
                (
                    Query::new(
                        q.object,
                        dataset.vocab.inverse_of(q.relation),
                        q.time,
                        regime,
                    ),
                    q.subject,
                ),
            ]
        })
        .collect()
}

pub fn train(dataset: &Dataset, init: ModelParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size", "must be >= 1"));
    }
    if init.dims.num_base_relations != dataset.vocab.num_base_relations() {
        return Err(Error::Dimension(
            "model relation count does not match the dataset".into(),
        ));
    }
    let num_entities = dataset.vocab.num_entities();
    // Background facts and query quads, per regime.
    let (background_facts, query_quads): (Vec<Quadruple>, Vec<Quadruple>) = match cfg.regime {
        Regime::Interpolation => {
            let split = split_train(&dataset.train, cfg.fact_fraction, cfg.seed)?;
            (split.facts, split.queries)
        }
        Regime::Extrapolation => (dataset.train.clone(), dataset.train.clone()),
    };
    let background = TemporalGraph::build(&background_facts, &dataset.vocab);
    let queries = directed_queries(&query_quads, dataset, cfg.regime);
    if queries.is_empty() {
        return Err(Error::Training("no training queries after the split".into()));
    }
    let mut copts = CollectOptions::new(init.dims.num_steps, dataset.vocab.identity_relation());
    copts.self_loops = cfg.self_loops;
    copts.degree_cap = cfg.degree_cap;
    copts.chronology = cfg.chronology;
    copts.seed = cfg.seed;
    // Traces depend only on the background graph; compute once, reuse per epoch.
    let traces: Vec<FrontierTrace> = queries
        .par_iter()
        .map(|(q, _)| collect(&background, q, &copts))
        .collect();
    // Validation setup (regime-specific background, filter over every split).
    let all = dataset.all_facts();
    let filter = FilterIndex::build(&[&all], &dataset.vocab);
    let val_background = match cfg.regime {
        Regime::Interpolation => TemporalGraph::build(&dataset.train, &dataset.vocab),
        Regime::Extrapolation => {
            let mut facts = dataset.train.clone();
            facts.extend_from_slice(&dataset.valid);
            TemporalGraph::build(&facts, &dataset.vocab)
        }
    };
    let mut val_opts = EvalOptions::new(cfg.regime, EncodeOptions::eval(cfg.activation));
    val_opts.self_loops = cfg.self_loops;
    val_opts.degree_cap = cfg.degree_cap;
    val_opts.chronology = cfg.chronology;
    val_opts.frontier_seed = cfg.seed;
    val_opts.encode.freeze_attention = cfg.freeze_attention;

    let mut model = init;
    let mut adam = AdamState::new(&model, AdamConfig { lr: cfg.lr, ..Default::default() });
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..queries.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha12Rng::seed_from_u64(mix(cfg.seed, epoch as u64, 1));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // Per-query gradients in parallel, reduced in batch order so the
            // accumulated sums are bitwise reproducible.
            let parts: Vec<Result<(f64, ModelParams)>> = batch
                .par_iter()
                .map(|&qi| {
                    let (_, gold) = queries[qi];
                    let opts = EncodeOptions {
                        mode: Mode::Train,
                        activation: cfg.activation,
                        dropout: cfg.dropout,
                        seed: mix(cfg.seed, epoch as u64, qi as u64),
                        freeze_attention: cfg.freeze_attention,
                    };
                    let state = encode_query(&model, &traces[qi], &opts)?;
                    let mut grads = model.zeros_like();
                    let (l, _) = loss_backward(
                        &model,
                        &traces[qi],
                        &state,
                        gold,
                        num_entities,
                        &opts,
                        &mut grads,
                    )?;
                    Ok((l, grads))
                })
                .collect();
            let mut grads = model.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for part in parts {
                let (l, g) = part?;
                epoch_loss += l;
                grads.add_scaled(&g, scale);
            }
            adam.step(&mut model, &grads)?;
        }
        let train_loss = epoch_loss / queries.len() as f64;
        let mut val_mrr = None;
        if cfg.val_every > 0 && epoch % cfg.val_every == 0 && !dataset.valid.is_empty() {
            let m = evaluate(
                &model,
                &val_background,
                &dataset.valid,
                &dataset.vocab,
                &filter,
                &val_opts,
            )?;
            val_mrr = Some(m.mrr);
            let improved = best.as_ref().map_or(true, |(b, _, _)| m.mrr > *b);
            if improved {
                best = Some((m.mrr, epoch, model.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log.push(LogRecord {
            epoch,
            train_loss,
            val_mrr,
        });
        if cfg.patience > 0 && stale >= cfg.patience {
            break;
        }
    }
    let (model, best_epoch, best_val_mrr) = match best {
        Some((mrr, epoch, m)) => (m, epoch, Some(mrr)),
        None => (model, cfg.epochs, None),
    };
    let final_val = if dataset.valid.is_empty() {
        None
    } else {
        Some(evaluate(
            &model,
            &val_background,
            &dataset.valid,
            &dataset.vocab,
            &filter,
            &val_opts,
        )?)
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val_mrr,
        log,
        final_val,
    })
}
