//! Two-stage completion pipeline.
//!
//! Step 1 samples a ratio of the training facts, trains an interpolation
//! model on the sample, and fills each held-back fact's masked side with the
//! top-1 prediction. Step 2 merges sample and completions chronologically,
//! trains extrapolation on the merged set and evaluates on the untouched
//! test split — alongside a control that trains on the sample alone.

use crate::data::{Dataset, Quadruple, TemporalGraph};
use crate::encode::{encode_query, EncodeOptions};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, FilterIndex, Metrics};
use crate::frontier::{collect, CollectOptions, Query, Regime};
use crate::grad::scores_all;
use crate::params::{ModelParams, Dims};
use crate::timeenc::TimeCodecMode;
use crate::train::{train, TrainConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSide {
    Subject,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskedQuery {
    pub original: Quadruple,
    pub side: MaskSide,
}

/// Partition `train` into ⌊n·ratio⌋ sampled facts and incomplete queries,
/// each with a uniformly chosen masked side. Deterministic under `seed`.
pub fn mask_split(
    train: &[Quadruple],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<Quadruple>, Vec<MaskedQuery>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(
            "ratio",
            format!("must lie strictly between 0 and 1, got {ratio}"),
        ));
    }
    if train.is_empty() {
        return Err(Error::Invalid("cannot mask an empty training set".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut order: Vec<Quadruple> = train.to_vec();
    order.sort();
    order.shuffle(&mut rng);
    let cut = (order.len() as f64 * ratio) as usize;
    let mut sampled = order[..cut].to_vec();
    sampled.sort();
    let mut incomplete: Vec<MaskedQuery> = order[cut..]
        .iter()
        .map(|&original| MaskedQuery {
            original,
            side: if rng.gen_bool(0.5) {
                MaskSide::Subject
            } else {
                MaskSide::Object
            },
        })
        .collect();
    incomplete.sort_by_key(|m| m.original);
    Ok((sampled, incomplete))
}

/// A fact entering extrapolation training, with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompletedFact {
    pub quad: Quadruple,
    /// True for model-predicted completions, false for sampled originals.
    pub predicted: bool,
}

#[derive(Debug, Clone)]
pub struct CompleteOptions {
    pub encode: EncodeOptions,
    pub self_loops: bool,
    pub degree_cap: Option<usize>,
    pub chronology: crate::frontier::Chronology,
    pub frontier_seed: u64,
    /// Drop completions whose top score falls below this (default: keep all).
    pub score_threshold: Option<f64>,
}

/// Fill each masked side with the model's top-1 entity (ties → lowest id).
pub fn complete(
    model: &ModelParams,
    background: &TemporalGraph,
    queries: &[MaskedQuery],
    dataset: &Dataset,
    opts: &CompleteOptions,
) -> Vec<CompletedFact> {
    let vocab = &dataset.vocab;
    let mut copts = CollectOptions::new(model.dims.num_steps, vocab.identity_relation());
    copts.self_loops = opts.self_loops;
    copts.degree_cap = opts.degree_cap;
    copts.chronology = opts.chronology;
    copts.seed = opts.frontier_seed;
    let mut out = Vec::with_capacity(queries.len());
    for m in queries {
        let q = m.original;
        // Masked subject is recovered through the inverse relation.
        let query = match m.side {
            MaskSide::Object => {
                Query::new(q.subject, q.relation, q.time, Regime::Interpolation)
            }
            MaskSide::Subject => Query::new(
                q.object,
                vocab.inverse_of(q.relation),
                q.time,
                Regime::Interpolation,
            ),
        };
        let trace = collect(background, &query, &copts);
        let state = encode_query(model, &trace, &opts.encode).expect("trace/model mismatch");
        let scores = scores_all(model, &state, vocab.num_entities());
        let (top, top_score) = scores
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bs), (i, &s)| {
                if s > bs {
                    (i, s)
                } else {
                    (bi, bs)
                }
            });
        if opts.score_threshold.is_some_and(|t| top_score < t) {
            continue;
        }
        let quad = match m.side {
            MaskSide::Object => Quadruple::new(q.subject, q.relation, top, q.time),
            MaskSide::Subject => Quadruple::new(top, q.relation, q.object, q.time),
        };
        out.push(CompletedFact {
            quad,
            predicted: true,
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub ratio: f64,
    pub mask_seed: u64,
    /// Hidden width / attention width / steps of both stage models.
    pub d: usize,
    pub d_a: usize,
    pub num_steps: usize,
    pub time_mode: TimeCodecMode,
    pub init_seed: u64,
    pub interp: TrainConfig,
    pub extrap: TrainConfig,
    pub score_threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineRow {
    pub label: String,
    pub interpolation: bool,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub ratio: f64,
    pub sampled: usize,
    pub masked: usize,
    pub completions: usize,
    /// Completions identical to the held-back original fact.
    pub completions_correct: usize,
    pub rows: Vec<PipelineRow>,
}

impl PipelineReport {
    pub fn pipeline_row(&self) -> &PipelineRow {
        self.rows.iter().find(|r| r.interpolation).expect("pipeline row")
    }

    pub fn control_row(&self) -> &PipelineRow {
        self.rows.iter().find(|r| !r.interpolation).expect("control row")
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("setting\tinterpolation\tMRR\tH@1\tH@3\tH@10\n");
        for r in &self.rows {
            text.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                r.label,
                if r.interpolation { "yes" } else { "no" },
                r.metrics.mrr,
                r.metrics.hits.get(&1).copied().unwrap_or(0.0),
                r.metrics.hits.get(&3).copied().unwrap_or(0.0),
                r.metrics.hits.get(&10).copied().unwrap_or(0.0),
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        f.write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

impl std::fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "ratio {:.2}: {} sampled, {} masked, {} completed ({} exact)",
            self.ratio, self.sampled, self.masked, self.completions, self.completions_correct
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "  {:24} interpolation={} {}",
                r.label,
                if r.interpolation { "yes" } else { "no " },
                r.metrics
            )?;
        }
        Ok(())
    }
}

fn stage_model(dataset: &Dataset, cfg: &PipelineConfig) -> Result<ModelParams> {
    let dims = Dims {
        d: cfg.d,
        d_a: cfg.d_a,
        num_steps: cfg.num_steps,
        num_base_relations: dataset.vocab.num_base_relations(),
    };
    let span = dataset
        .all_facts()
        .iter()
        .map(|q| q.time)
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    ModelParams::init(dims, false, cfg.time_mode, span, cfg.init_seed)
}

pub fn run_pipeline(dataset: &Dataset, cfg: &PipelineConfig) -> Result<PipelineReport> {
    if cfg.interp.regime != Regime::Interpolation {
        return Err(Error::config("interp.regime", "stage 1 must be interpolation"));
    }
    if cfg.extrap.regime != Regime::Extrapolation {
        return Err(Error::config("extrap.regime", "stage 2 must be extrapolation"));
    }
    let (sampled, masked) = mask_split(&dataset.train, cfg.ratio, cfg.mask_seed)?;
    // Step 1: interpolation on the sample, then complete the held-back facts.
    let stage1 = Dataset {
        vocab: dataset.vocab.clone(),
        train: sampled.clone(),
        valid: dataset.valid.clone(),
        test: Vec::new(),
    };
    let interp = train(&stage1, stage_model(dataset, cfg)?, &cfg.interp)?;
    let background = TemporalGraph::build(&sampled, &dataset.vocab);
    let copts = CompleteOptions {
        encode: EncodeOptions::eval(cfg.interp.activation),
        self_loops: cfg.interp.self_loops,
        degree_cap: cfg.interp.degree_cap,
        chronology: cfg.interp.chronology,
        frontier_seed: cfg.interp.seed,
        score_threshold: cfg.score_threshold,
    };
    let completed = complete(&interp.model, &background, &masked, dataset, &copts);
    let completions_correct = completed
        .iter()
        .zip(&masked)
        .filter(|(c, m)| c.quad == m.original)
        .count();
    // Merge chronologically; drop completions that duplicate sampled facts.
    let mut merged: Vec<Quadruple> = sampled.clone();
    for c in &completed {
        if !merged.contains(&c.quad) {
            merged.push(c.quad);
        }
    }
    merged.sort_by_key(|q| (q.time, q.subject, q.relation, q.object));
    // Leakage guard: nothing merged may reach the held-out windows.
    let max_train = dataset.train.iter().map(|q| q.time).max().unwrap_or(0);
    if merged.iter().any(|q| q.time > max_train) {
        return Err(Error::Invalid(
            "pipeline merge produced facts beyond the training window".into(),
        ));
    }
    // Step 2: extrapolation on merged vs the no-interpolation control.
    let mut rows = Vec::new();
    for (label, facts, interpolation) in [
        ("pipeline (merged)", &merged, true),
        ("control (sample only)", &sampled, false),
    ] {
        let stage2 = Dataset {
            vocab: dataset.vocab.clone(),
            train: facts.clone(),
            valid: dataset.valid.clone(),
            test: dataset.test.clone(),
        };
        let outcome = train(&stage2, stage_model(dataset, cfg)?, &cfg.extrap)?;
        let mut bg_facts = facts.clone();
        bg_facts.extend_from_slice(&dataset.valid);
        bg_facts.extend_from_slice(&dataset.test);
        let bg = TemporalGraph::build(&bg_facts, &dataset.vocab);
        let all = dataset.all_facts();
        let filter = FilterIndex::build(&[&all], &dataset.vocab);
        let mut eopts = EvalOptions::new(
            Regime::Extrapolation,
            EncodeOptions::eval(cfg.extrap.activation),
        );
        eopts.self_loops = cfg.extrap.self_loops;
        eopts.degree_cap = cfg.extrap.degree_cap;
        eopts.chronology = cfg.extrap.chronology;
        eopts.frontier_seed = cfg.extrap.seed;
        let metrics = evaluate(
            &outcome.model,
            &bg,
            &dataset.test,
            &dataset.vocab,
            &filter,
            &eopts,
        )?;
        rows.push(PipelineRow {
            label: label.to_string(),
            interpolation,
            metrics,
        });
    }
    Ok(PipelineReport {
        ratio: cfg.ratio,
        sampled: sampled.len(),
        masked: masked.len(),
        completions: completed.len(),
        completions_correct,
        rows,
    })
}
