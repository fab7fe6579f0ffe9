//! Per-query temporal path collection.
//!
//! Starting from the query entity, each step expands every active entity's
//! outgoing temporal links, producing a layered trace of edge sets and the
//! cumulative visited sets the encoder iterates over.
//!
//! Time rules: extrapolation only uses links with `time < t_q`; interpolation
//! ignores time constraints entirely. The strict-chronology toggle additionally
//! requires non-increasing link times along each path.

use crate::data::{EntityId, RelId, TemporalGraph, TimeIndex};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Interpolation,
    Extrapolation,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Interpolation => write!(f, "interpolation"),
            Regime::Extrapolation => write!(f, "extrapolation"),
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interpolation" => Ok(Regime::Interpolation),
            "extrapolation" => Ok(Regime::Extrapolation),
            other => Err(Error::config(
                "regime",
                format!("expected `interpolation` or `extrapolation`, got `{other}`"),
            )),
        }
    }
}

/// Internal path-order rule (the relaxed default only bounds times by the
/// query; strict additionally demands t1 >= t2 >= ... along a path).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chronology {
    Relaxed,
    Strict,
}

impl std::str::FromStr for Chronology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relaxed" => Ok(Chronology::Relaxed),
            "strict" => Ok(Chronology::Strict),
            other => Err(Error::config(
                "chronology",
                format!("expected `relaxed` or `strict`, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for Chronology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Chronology::Relaxed => write!(f, "relaxed"),
            Chronology::Strict => write!(f, "strict"),
        }
    }
}

/// An incomplete fact (e_q, r_q, ?, t_q) under a reasoning regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub entity: EntityId,
    pub relation: RelId,
    pub time: TimeIndex,
    pub regime: Regime,
    pub gold: Option<EntityId>,
}

impl Query {
    pub fn new(entity: EntityId, relation: RelId, time: TimeIndex, regime: Regime) -> Self {
        Query {
            entity,
            relation,
            time,
            regime,
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: EntityId) -> Self {
        self.gold = Some(gold);
        self
    }

    /// Strict upper time bound applied while expanding, if any.
    pub fn time_bound(&self) -> Option<TimeIndex> {
        match self.regime {
            Regime::Interpolation => None,
            Regime::Extrapolation => Some(self.time),
        }
    }
}

/// One temporal link inside a trace step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceEdge {
    pub src: EntityId,
    pub rel: RelId,
    pub dst: EntityId,
    pub time: TimeIndex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub edges: Vec<TraceEdge>,
    /// Cumulative visited set E^ℓ, ascending.
    pub visited: Vec<EntityId>,
}

impl TraceStep {
    /// Destination entities of this step, ascending and deduplicated.
    pub fn destinations(&self) -> Vec<EntityId> {
        let set: BTreeSet<EntityId> = self.edges.iter().map(|e| e.dst).collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrontierTrace {
    pub query: Query,
    /// The reserved IDENTITY relation id used for self-loop links.
    pub identity_rel: RelId,
    pub steps: Vec<TraceStep>,
}

impl FrontierTrace {
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// One edge per line: `step<TAB>src<TAB>rel<TAB>dst<TAB>time`.
    pub fn dump_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            for e in &step.edges {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    i + 1,
                    e.src,
                    e.rel,
                    e.dst,
                    e.time
                ));
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        file.write_all(out.as_bytes()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CollectOptions {
    pub max_len: usize,
    pub self_loops: bool,
    pub degree_cap: Option<usize>,
    pub chronology: Chronology,
    pub identity_rel: RelId,
    pub seed: u64,
}

impl CollectOptions {
    pub fn new(max_len: usize, identity_rel: RelId) -> Self {
        CollectOptions {
            max_len,
            self_loops: false,
            degree_cap: None,
            chronology: Chronology::Relaxed,
            identity_rel,
            seed: 0,
        }
    }
}

fn source_rng(seed: u64, src: EntityId) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed ^ (src as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Expand one step from `active` (ascending entity ids paired with the maximum
/// admissible link time under strict chronology; `i64::MAX` means no limit).
fn expand_limited(
    graph: &TemporalGraph,
    active: &[(EntityId, TimeIndex)],
    query: &Query,
    degree_cap: Option<usize>,
    seed: u64,
) -> Vec<TraceEdge> {
    let bound = query.time_bound();
    let mut seen: HashSet<TraceEdge> = HashSet::new();
    let mut edges = Vec::new();
    for &(src, last_max) in active {
        let links = graph.neighbors(src, bound);
        let take = |edges: &mut Vec<TraceEdge>, seen: &mut HashSet<TraceEdge>, idx: usize| {
            let l = links[idx];
            if l.time > last_max {
                return;
            }
            debug_assert!(bound.map_or(true, |b| l.time < b));
            let edge = TraceEdge {
                src,
                rel: l.rel,
                dst: l.object,
                time: l.time,
            };
            if seen.insert(edge) {
                edges.push(edge);
            }
        };
        match degree_cap {
            Some(cap) if links.len() > cap => {
                let mut rng = source_rng(seed, src);
                let mut picked = rand::seq::index::sample(&mut rng, links.len(), cap).into_vec();
                picked.sort_unstable();
                for idx in picked {
                    take(&mut edges, &mut seen, idx);
                }
            }
            _ => {
                for idx in 0..links.len() {
                    take(&mut edges, &mut seen, idx);
                }
            }
        }
    }
    edges
}

/// Collect all temporal links whose source is in `active`, filtered by the
/// regime time bound; with a degree cap, a seeded per-source uniform sample.
pub fn expand_step(
    graph: &TemporalGraph,
    active: &BTreeSet<EntityId>,
    query: &Query,
    degree_cap: Option<usize>,
    seed: u64,
) -> Vec<TraceEdge> {
    let active: Vec<(EntityId, TimeIndex)> =
        active.iter().map(|&e| (e, TimeIndex::MAX)).collect();
    expand_limited(graph, &active, query, degree_cap, seed)
}

/// Build the full layered trace for one query.
///
/// With `self_loops`, each step also carries an IDENTITY link (v → v, Δt = 0)
/// for every entity already visited before the step, so shorter paths survive
/// to the final step.
pub fn collect(graph: &TemporalGraph, query: &Query, opts: &CollectOptions) -> FrontierTrace {
    assert!(opts.max_len >= 1, "max_len must be >= 1");
    let mut steps = Vec::with_capacity(opts.max_len);
    let mut visited: BTreeSet<EntityId> = BTreeSet::new();
    visited.insert(query.entity);
    // entity -> max admissible next link time (strict chronology state).
    let mut active: BTreeMap<EntityId, TimeIndex> = BTreeMap::new();
    active.insert(query.entity, TimeIndex::MAX);
    for _ in 0..opts.max_len {
        let active_list: Vec<(EntityId, TimeIndex)> =
            active.iter().map(|(&e, &t)| (e, t)).collect();
        let mut edges = expand_limited(graph, &active_list, query, opts.degree_cap, opts.seed);
        let mut next: BTreeMap<EntityId, TimeIndex> = BTreeMap::new();
        for e in &edges {
            let entry = next.entry(e.dst).or_insert(TimeIndex::MIN);
            match opts.chronology {
                Chronology::Strict => {
                    if e.time > *entry {
                        *entry = e.time;
                    }
                }
                Chronology::Relaxed => *entry = TimeIndex::MAX,
            }
        }
        if opts.self_loops {
            // Identity links preserve the strict-chronology state of their entity.
            for &(v, last) in &active_list {
                edges.push(TraceEdge {
                    src: v,
                    rel: opts.identity_rel,
                    dst: v,
                    time: query.time,
                });
                let entry = next.entry(v).or_insert(TimeIndex::MIN);
                if last > *entry {
                    *entry = last;
                }
            }
        }
        visited.extend(next.keys().copied());
        steps.push(TraceStep {
            edges,
            visited: visited.iter().copied().collect(),
        });
        active = next;
    }
    FrontierTrace {
        query: *query,
        identity_rel: opts.identity_rel,
        steps,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerateOptions {
    pub include_identity: bool,
    pub chronology: Chronology,
    pub identity_rel: RelId,
    /// Refuse graphs with more entities than this (exponential oracle guard).
    pub entity_limit: usize,
}

pub const DEFAULT_ORACLE_ENTITY_LIMIT: usize = 12;

impl EnumerateOptions {
    pub fn new(identity_rel: RelId) -> Self {
        EnumerateOptions {
            include_identity: false,
            chronology: Chronology::Relaxed,
            identity_rel,
            entity_limit: DEFAULT_ORACLE_ENTITY_LIMIT,
        }
    }
}

/// Exhaustively enumerate every temporal path of length exactly `len` from the
/// query entity, honoring the regime time rule (and strict chronology if set).
/// Test oracle; exponential, guarded by `entity_limit`.
pub fn enumerate_paths(
    graph: &TemporalGraph,
    query: &Query,
    len: usize,
    opts: &EnumerateOptions,
) -> Result<Vec<Vec<TraceEdge>>> {
    if graph.num_entities() > opts.entity_limit {
        return Err(Error::Invalid(format!(
            "path enumeration oracle refuses graphs with {} entities (limit {})",
            graph.num_entities(),
            opts.entity_limit
        )));
    }
    let bound = query.time_bound();
    let mut out = Vec::new();
    let mut path: Vec<TraceEdge> = Vec::with_capacity(len);
    fn dfs(
        graph: &TemporalGraph,
        query: &Query,
        bound: Option<TimeIndex>,
        opts: &EnumerateOptions,
        at: EntityId,
        last_max: TimeIndex,
        remaining: usize,
        path: &mut Vec<TraceEdge>,
        out: &mut Vec<Vec<TraceEdge>>,
    ) {
        if remaining == 0 {
            out.push(path.clone());
            return;
        }
        for l in graph.neighbors(at, bound) {
            if opts.chronology == Chronology::Strict && l.time > last_max {
                continue;
            }
            path.push(TraceEdge {
                src: at,
                rel: l.rel,
                dst: l.object,
                time: l.time,
            });
            let next_max = match opts.chronology {
                Chronology::Strict => l.time,
                Chronology::Relaxed => TimeIndex::MAX,
            };
            dfs(
                graph,
                query,
                bound,
                opts,
                l.object,
                next_max,
                remaining - 1,
                path,
                out,
            );
            path.pop();
        }
        if opts.include_identity {
            path.push(TraceEdge {
                src: at,
                rel: opts.identity_rel,
                dst: at,
                time: query.time,
            });
            dfs(
                graph,
                query,
                bound,
                opts,
                at,
                last_max,
                remaining - 1,
                path,
                out,
            );
            path.pop();
        }
    }
    dfs(
        graph,
        query,
        bound,
        opts,
        query.entity,
        TimeIndex::MAX,
        len,
        &mut path,
        &mut out,
    );
    Ok(out)
}

/// Endpoint set of a path list (ascending, deduplicated).
pub fn path_endpoints(paths: &[Vec<TraceEdge>], origin: EntityId) -> Vec<EntityId> {
    let set: BTreeSet<EntityId> = paths
        .iter()
        .map(|p| p.last().map(|e| e.dst).unwrap_or(origin))
        .collect();
    set.into_iter().collect()
}
