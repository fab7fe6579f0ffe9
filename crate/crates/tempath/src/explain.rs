//! Path-level explanations.
//!
//! The contribution of each trace edge to a prediction f(q, target) is the
//! gradient of the score with respect to that edge's attention weight, scaled
//! by the weight itself. Path importance is additive over its edges; the
//! top-k paths are found with a per-node beam over the step-layered trace.

use crate::data::{EntityId, Vocab};
use crate::encode::{EncodeOptions, EncodingState};
use crate::error::{Error, Result};
use crate::frontier::{FrontierTrace, TraceEdge};
use crate::grad::backward_from;
use crate::params::ModelParams;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Attribution {
    /// Per step, per trace edge: (∂f/∂α)·α.
    pub edge_importance: Vec<Vec<f64>>,
    /// False when the target never entered the frontier (score is exactly 0).
    pub reached: bool,
}

/// Attribute f(q, target) = wᵀh^L(target) onto the trace edges.
pub fn edge_importance(
    model: &ModelParams,
    trace: &FrontierTrace,
    state: &EncodingState,
    target: EntityId,
    opts: &EncodeOptions,
) -> Result<Attribution> {
    let reached = state
        .h_layers
        .last()
        .is_some_and(|m| m.contains_key(&target));
    if !reached {
        return Ok(Attribution {
            edge_importance: state
                .steps
                .iter()
                .map(|s| vec![0.0; s.edges.len()])
                .collect(),
            reached: false,
        });
    }
    let seed = BTreeMap::from([(target, model.score_w.clone())]);
    let mut scratch = model.zeros_like();
    let back = backward_from(model, trace, state, &seed, opts, &mut scratch)?;
    let edge_importance = back
        .edge_alpha_grads
        .iter()
        .enumerate()
        .map(|(si, grads)| {
            grads
                .iter()
                .zip(&state.steps[si].edges)
                .map(|(g, e)| g * e.alpha)
                .collect()
        })
        .collect();
    Ok(Attribution {
        edge_importance,
        reached: true,
    })
}

/// A full-length trace path with its additive importance. `edges` keeps the
/// raw trace edges (IDENTITY hops included); `display_edges()` strips them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub edges: Vec<TraceEdge>,
    pub importance: f64,
}

impl ScoredPath {
    pub fn display_edges(&self, identity_rel: usize) -> Vec<TraceEdge> {
        self.edges
            .iter()
            .copied()
            .filter(|e| e.rel != identity_rel)
            .collect()
    }
}

fn materialize(trace: &FrontierTrace, path: &[(usize, usize)]) -> Vec<TraceEdge> {
    path.iter()
        .map(|&(si, j)| trace.steps[si].edges[j])
        .collect()
}

fn better(a: &(f64, Vec<TraceEdge>), b: &(f64, Vec<TraceEdge>)) -> std::cmp::Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.1.cmp(&b.1))
}

/// Beam search for the k most important full-length paths from the query
/// entity to `target`. `beam_width` 0 picks `max(4k, 16)`. After selection,
/// paths that collapse to the same IDENTITY-free edge list are deduplicated.
pub fn top_k_paths(
    trace: &FrontierTrace,
    imp: &Attribution,
    target: EntityId,
    k: usize,
    beam_width: usize,
) -> Vec<ScoredPath> {
    if k == 0 || !imp.reached {
        return Vec::new();
    }
    let width = if beam_width == 0 { (4 * k).max(16) } else { beam_width };
    // Per entity: best partial paths as (score, edge index path).
    let mut partial: BTreeMap<EntityId, Vec<(f64, Vec<(usize, usize)>)>> =
        BTreeMap::from([(trace.query.entity, vec![(0.0, Vec::new())])]);
    for (si, step) in trace.steps.iter().enumerate() {
        let mut next: BTreeMap<EntityId, Vec<(f64, Vec<(usize, usize)>)>> = BTreeMap::new();
        for (j, edge) in step.edges.iter().enumerate() {
            let Some(list) = partial.get(&edge.src) else { continue };
            let w = imp.edge_importance[si][j];
            let bucket = next.entry(edge.dst).or_default();
            for (s, p) in list {
                let mut p2 = p.clone();
                p2.push((si, j));
                bucket.push((s + w, p2));
            }
        }
        for bucket in next.values_mut() {
            bucket.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| materialize(trace, &a.1).cmp(&materialize(trace, &b.1)))
            });
            bucket.truncate(width);
        }
        partial = next;
    }
    let Some(full) = partial.get(&target) else {
        return Vec::new();
    };
    let mut scored: Vec<(f64, Vec<TraceEdge>)> = full
        .iter()
        .map(|(s, p)| (*s, materialize(trace, p)))
        .collect();
    scored.sort_by(better);
    let mut out: Vec<ScoredPath> = Vec::new();
    let mut seen: Vec<Vec<TraceEdge>> = Vec::new();
    for (s, edges) in scored {
        let stripped: Vec<TraceEdge> = edges
            .iter()
            .copied()
            .filter(|e| e.rel != trace.identity_rel)
            .collect();
        if seen.contains(&stripped) {
            continue;
        }
        seen.push(stripped);
        out.push(ScoredPath {
            edges,
            importance: s,
        });
        if out.len() == k {
            break;
        }
    }
    out
}

/// Exhaustive reference: every full-length path to `target`, exactly ranked.
/// Refuses when the path count explodes.
pub fn all_paths_exact(
    trace: &FrontierTrace,
    imp: &Attribution,
    target: EntityId,
    limit: usize,
) -> Result<Vec<ScoredPath>> {
    if !imp.reached {
        return Ok(Vec::new());
    }
    let mut partial: BTreeMap<EntityId, Vec<(f64, Vec<(usize, usize)>)>> =
        BTreeMap::from([(trace.query.entity, vec![(0.0, Vec::new())])]);
    for (si, step) in trace.steps.iter().enumerate() {
        let mut next: BTreeMap<EntityId, Vec<(f64, Vec<(usize, usize)>)>> = BTreeMap::new();
        for (j, edge) in step.edges.iter().enumerate() {
            let Some(list) = partial.get(&edge.src) else { continue };
            let w = imp.edge_importance[si][j];
            let bucket = next.entry(edge.dst).or_default();
            for (s, p) in list {
                let mut p2 = p.clone();
                p2.push((si, j));
                bucket.push((s + w, p2));
            }
        }
        let total: usize = next.values().map(|v| v.len()).sum();
        if total > limit {
            return Err(Error::Invalid(format!(
                "exact path ranking exceeds {limit} paths"
            )));
        }
        partial = next;
    }
    let mut scored: Vec<(f64, Vec<TraceEdge>)> = partial
        .get(&target)
        .map(|v| {
            v.iter()
                .map(|(s, p)| (*s, materialize(trace, p)))
                .collect()
        })
        .unwrap_or_default();
    scored.sort_by(better);
    Ok(scored
        .into_iter()
        .map(|(s, edges)| ScoredPath {
            edges,
            importance: s,
        })
        .collect())
}

/// Human-readable rendering with entity/relation names and displayed times.
pub fn render_path(path: &ScoredPath, trace: &FrontierTrace, vocab: &Vocab) -> String {
    let edges = path.display_edges(trace.identity_rel);
    if edges.is_empty() {
        return format!(
            "{} (stays; importance {:+.4})",
            vocab.entity_name(trace.query.entity),
            path.importance
        );
    }
    let mut s = vocab.entity_name(edges[0].src).to_string();
    for e in &edges {
        s.push_str(&format!(
            " —[{} @ {}]→ {}",
            vocab.relation_display(e.rel),
            vocab.time_display(e.time),
            vocab.entity_name(e.dst)
        ));
    }
    s.push_str(&format!("  (importance {:+.4})", path.importance));
    s
}

/// Machine-readable dump: `rank<TAB>importance<TAB>src,rel,dst,time;…`.
pub fn dump_paths_tsv(paths: &[ScoredPath], trace: &FrontierTrace, path: &Path) -> Result<()> {
    let mut out = String::from("rank\timportance\tedges\n");
    for (i, p) in paths.iter().enumerate() {
        let edges: Vec<String> = p
            .display_edges(trace.identity_rel)
            .iter()
            .map(|e| format!("{},{},{},{}", e.src, e.rel, e.dst, e.time))
            .collect();
        out.push_str(&format!("{}\t{}\t{}\n", i + 1, p.importance, edges.join(";")));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    f.write_all(out.as_bytes()).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Granularity, Quadruple, TemporalGraph};
    use crate::encode::encode_query;
    use crate::frontier::{collect, CollectOptions, Query, Regime};
    use crate::grad::score;
    use crate::params::{Activation, Dims};
    use crate::timeenc::TimeCodecMode;

    fn vocab(n_rel: usize, n_ent: usize) -> Vocab {
        let mut v = Vocab::new(Granularity::Year);
        for i in 0..n_rel {
            v.intern_relation(&format!("r{i}")).unwrap();
        }
        for i in 0..n_ent {
            v.intern_entity(&format!("e{i}"));
        }
        v.finalize_relations().unwrap();
        v
    }

    fn setup() -> (Vocab, FrontierTrace, ModelParams, EncodingState, EncodeOptions) {
        let v = vocab(2, 6);
        let g = TemporalGraph::build(
            &[
                Quadruple::new(0, 0, 1, 1),
                Quadruple::new(0, 1, 2, 2),
                Quadruple::new(1, 0, 3, 3),
                Quadruple::new(2, 1, 3, 4),
                Quadruple::new(1, 1, 4, 2),
            ],
            &v,
        );
        let q = Query::new(0, 0, 9, Regime::Extrapolation);
        let mut copts = CollectOptions::new(2, v.identity_relation());
        copts.self_loops = true;
        let trace = collect(&g, &q, &copts);
        let model = ModelParams::init(
            Dims {
                d: 5,
                d_a: 3,
                num_steps: 2,
                num_base_relations: 2,
            },
            false,
            TimeCodecMode::PerDimension,
            10.0,
            21,
        )
        .unwrap();
        let opts = EncodeOptions::eval(Activation::Identity);
        let state = encode_query(&model, &trace, &opts).unwrap();
        (v, trace, model, state, opts)
    }

    #[test]
    fn importance_shapes_match_trace() {
        let (_, trace, model, state, opts) = setup();
        let imp = edge_importance(&model, &trace, &state, 3, &opts).unwrap();
        assert!(imp.reached);
        assert_eq!(imp.edge_importance.len(), trace.steps.len());
        for (si, step) in trace.steps.iter().enumerate() {
            assert_eq!(imp.edge_importance[si].len(), step.edges.len());
        }
        assert!(imp.edge_importance.iter().flatten().any(|&x| x != 0.0));
        // edges that cannot lead to the target in the remaining steps get 0
        let final_step = trace.steps.len() - 1;
        for (j, e) in trace.steps[final_step].edges.iter().enumerate() {
            if e.dst != 3 {
                assert_eq!(imp.edge_importance[final_step][j], 0.0);
            }
        }
    }

    #[test]
    fn unreached_target_has_zero_importance_and_no_paths() {
        let (v, trace, model, state, opts) = setup();
        // entity 5 has no links at all
        let imp = edge_importance(&model, &trace, &state, 5, &opts).unwrap();
        assert!(!imp.reached);
        assert!(imp.edge_importance.iter().flatten().all(|&x| x == 0.0));
        assert!(top_k_paths(&trace, &imp, 5, 3, 0).is_empty());
        assert_eq!(score(&model, &state, 5), 0.0);
        let _ = v;
    }

    #[test]
    fn path_importance_is_additive_over_edges() {
        let (_, trace, model, state, opts) = setup();
        let imp = edge_importance(&model, &trace, &state, 3, &opts).unwrap();
        for p in top_k_paths(&trace, &imp, 3, 5, 0) {
            let mut total = 0.0;
            let mut cursor = 0;
            for (si, step) in trace.steps.iter().enumerate() {
                let e = p.edges[cursor];
                let j = step
                    .edges
                    .iter()
                    .position(|&x| x == e)
                    .expect("path edge not in its step");
                total += imp.edge_importance[si][j];
                cursor += 1;
            }
            assert!((total - p.importance).abs() < 1e-12);
        }
    }

    #[test]
    fn beam_matches_exact_ranking_on_small_trace() {
        let (_, trace, model, state, opts) = setup();
        for target in [3usize, 1, 2] {
            let imp = edge_importance(&model, &trace, &state, target, &opts).unwrap();
            let beam = top_k_paths(&trace, &imp, target, 4, 64);
            let exact = all_paths_exact(&trace, &imp, target, 100_000).unwrap();
            // apply the same post-selection dedup to the exact list
            let mut seen: Vec<Vec<TraceEdge>> = Vec::new();
            let mut expect = Vec::new();
            for p in exact {
                let s = p.display_edges(trace.identity_rel);
                if !seen.contains(&s) {
                    seen.push(s);
                    expect.push(p);
                }
                if expect.len() == 4 {
                    break;
                }
            }
            assert_eq!(beam.len(), expect.len());
            for (a, b) in beam.iter().zip(&expect) {
                assert!((a.importance - b.importance).abs() < 1e-12);
                assert_eq!(
                    a.display_edges(trace.identity_rel),
                    b.display_edges(trace.identity_rel)
                );
            }
        }
    }

    #[test]
    fn identity_hops_are_stripped_from_display() {
        let (v, trace, model, state, opts) = setup();
        // entity 1 is one hop away; its 2-step paths include an identity hop
        let imp = edge_importance(&model, &trace, &state, 1, &opts).unwrap();
        let paths = top_k_paths(&trace, &imp, 1, 4, 0);
        assert!(!paths.is_empty());
        let padded = paths
            .iter()
            .find(|p| p.edges.iter().any(|e| e.rel == v.identity_relation()))
            .expect("expected a path using an identity hop");
        let display = padded.display_edges(v.identity_relation());
        assert!(display.len() < padded.edges.len());
        assert!(display.iter().all(|e| e.rel != v.identity_relation()));
        let text = render_path(padded, &trace, &v);
        assert!(text.contains("e0") && text.contains("importance"));
        assert!(!text.contains("IDENTITY"));
    }

    #[test]
    fn rendering_marks_inverse_relations() {
        let v = vocab(1, 3);
        let trace = FrontierTrace {
            query: Query::new(0, 0, 5, Regime::Interpolation),
            identity_rel: v.identity_relation(),
            steps: vec![],
        };
        let p = ScoredPath {
            edges: vec![TraceEdge { src: 2, rel: 1, dst: 0, time: 3 }],
            importance: 0.5,
        };
        let text = render_path(&p, &trace, &v);
        assert!(text.contains("r0⁻¹"), "{text}");
    }

    #[test]
    fn dump_is_tab_separated_with_header() {
        let (_, trace, model, state, opts) = setup();
        let imp = edge_importance(&model, &trace, &state, 3, &opts).unwrap();
        let paths = top_k_paths(&trace, &imp, 3, 2, 0);
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("paths.tsv");
        dump_paths_tsv(&paths, &trace, &file).unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "rank\timportance\tedges");
        assert_eq!(lines.len(), paths.len() + 1);
        assert!(lines[1].starts_with("1\t"));
    }
}
