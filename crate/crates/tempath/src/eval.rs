//! Link-prediction evaluation with time-wise filtered ranking.
//!
//! Every test quadruple is scored in both directions (object via the base
//! relation, subject via its inverse). The filter removes candidates that
//! form a known fact at the *same* timestamp; ties share their mean rank
//! (rounded half up).

use crate::data::{EntityId, Quadruple, RelId, TemporalGraph, TimeIndex, Vocab};
use crate::encode::{encode_query, EncodeOptions};
use crate::error::{Error, Result};
use crate::frontier::{collect, CollectOptions, Query, Regime};
use crate::grad::scores_all;
use crate::params::ModelParams;
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mrr: f64,
    /// Hits@k keyed by k.
    pub hits: BTreeMap<usize, f64>,
    pub count: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize], hits_at: &[usize]) -> Metrics {
        let n = ranks.len().max(1) as f64;
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        let hits = hits_at
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
            .collect();
        Metrics {
            mrr,
            hits,
            count: ranks.len(),
        }
    }
}

impl std::fmt::Display for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "queries {}  MRR {:.4}", self.count, self.mrr)?;
        for (k, v) in &self.hits {
            write!(f, "  H@{k} {v:.4}")?;
        }
        Ok(())
    }
}

/// Known answers per (entity, directed relation, time) over a fact closure.
#[derive(Debug, Default)]
pub struct FilterIndex {
    map: HashMap<(EntityId, RelId, TimeIndex), HashSet<EntityId>>,
}

impl FilterIndex {
    /// Index base facts from every provided split, in both directions.
    pub fn build(splits: &[&[Quadruple]], vocab: &Vocab) -> FilterIndex {
        let mut map: HashMap<(EntityId, RelId, TimeIndex), HashSet<EntityId>> = HashMap::new();
        for split in splits {
            for q in *split {
                map.entry((q.subject, q.relation, q.time))
                    .or_default()
                    .insert(q.object);
                map.entry((q.object, vocab.inverse_of(q.relation), q.time))
                    .or_default()
                    .insert(q.subject);
            }
        }
        FilterIndex { map }
    }

    pub fn known(&self, entity: EntityId, rel: RelId, time: TimeIndex) -> Option<&HashSet<EntityId>> {
        self.map.get(&(entity, rel, time))
    }
}

/// Rank of `gold` after dropping other known answers; ties take their mean
/// position rounded half up.
pub fn filtered_rank(
    scores: &[f64],
    gold: EntityId,
    known: Option<&HashSet<EntityId>>,
) -> usize {
    let gs = scores[gold];
    let mut greater = 0usize;
    let mut equal_others = 0usize;
    for (e, &s) in scores.iter().enumerate() {
        if e == gold || known.is_some_and(|k| k.contains(&e)) {
            continue;
        }
        if s > gs {
            greater += 1;
        } else if s == gs {
            equal_others += 1;
        }
    }
    greater + 1 + (equal_others + 1) / 2
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub regime: Regime,
    pub encode: EncodeOptions,
    pub self_loops: bool,
    pub degree_cap: Option<usize>,
    pub chronology: crate::frontier::Chronology,
    pub frontier_seed: u64,
    pub hits_at: Vec<usize>,
    /// Write one `entity\trel\ttime\tgold\trank` line per scored direction.
    pub dump_ranks: Option<PathBuf>,
    /// Debug-only: skip filtering entirely (raw ranks).
    pub raw_filter: bool,
}

impl EvalOptions {
    pub fn new(regime: Regime, encode: EncodeOptions) -> Self {
        EvalOptions {
            regime,
            encode,
            self_loops: true,
            degree_cap: None,
            chronology: crate::frontier::Chronology::Relaxed,
            frontier_seed: 0,
            hits_at: vec![1, 3, 10],
            dump_ranks: None,
            raw_filter: false,
        }
    }
}

/// Score one direction of one quadruple and return its filtered rank.
fn rank_one(
    model: &ModelParams,
    background: &TemporalGraph,
    vocab: &Vocab,
    filter: &FilterIndex,
    query: Query,
    gold: EntityId,
    opts: &EvalOptions,
) -> usize {
    let mut copts = CollectOptions::new(model.dims.num_steps, vocab.identity_relation());
    copts.self_loops = opts.self_loops;
    copts.degree_cap = opts.degree_cap;
    copts.chronology = opts.chronology;
    copts.seed = opts.frontier_seed;
    let trace = collect(background, &query, &copts);
    // dims are validated against the trace inside encode_query; eval traces
    // always match because copts.max_len comes from the model
    let state = encode_query(model, &trace, &opts.encode).expect("trace/model mismatch");
    let scores = scores_all(model, &state, vocab.num_entities());
    let known = if opts.raw_filter {
        None
    } else {
        filter.known(query.entity, query.relation, query.time)
    };
    filtered_rank(&scores, gold, known)
}

/// Evaluate base quadruples in both directions against `background`.
pub fn evaluate(
    model: &ModelParams,
    background: &TemporalGraph,
    queries: &[Quadruple],
    vocab: &Vocab,
    filter: &FilterIndex,
    opts: &EvalOptions,
) -> Result<Metrics> {
    if model.dims.num_base_relations != vocab.num_base_relations() {
        return Err(Error::Dimension(format!(
            "model was trained with {} base relations, dataset has {}",
            model.dims.num_base_relations,
            vocab.num_base_relations()
        )));
    }
    // (query, gold) per direction, order fixed: object task then subject task.
    let directed: Vec<(Query, EntityId)> = queries
        .iter()
        .flat_map(|q| {
            [
                (
                    Query::new(q.subject, q.relation, q.time, opts.regime),
                    q.object,
                ),
                (
                    Query::new(q.object, vocab.inverse_of(q.relation), q.time, opts.regime),
                    q.subject,
                ),
            ]
        })
        .collect();
    let ranks: Vec<usize> = directed
        .par_iter()
        .map(|&(query, gold)| rank_one(model, background, vocab, filter, query, gold, opts))
        .collect();
    if let Some(path) = &opts.dump_ranks {
        let mut out = String::from("entity\trelation\ttime\tgold\trank\n");
        for ((q, gold), r) in directed.iter().zip(&ranks) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                q.entity, q.relation, q.time, gold, r
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        f.write_all(out.as_bytes()).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    Ok(Metrics::from_ranks(&ranks, &opts.hits_at))
}
