//! Temporal KG storage: parsing, vocabularies, inverse materialization,
//! time-indexed adjacency, and train splits.
//!
//! Datasets are TSV files with columns `subject<TAB>relation<TAB>object<TAB>timestamp`.
//! Timestamps are ISO dates (day granularity) or integer years (year granularity;
//! full dates are truncated to the year). All times are normalized to integer
//! indices from the dataset epoch, so every stored time is >= 0.

use crate::error::{Error, Result};
use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub type EntityId = usize;
pub type RelId = usize;
pub type TimeIndex = i64;

/// One temporal fact (subject, relation, object, time index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelId,
    pub object: EntityId,
    pub time: TimeIndex,
}

impl Quadruple {
    pub fn new(subject: EntityId, relation: RelId, object: EntityId, time: TimeIndex) -> Self {
        Quadruple {
            subject,
            relation,
            object,
            time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Day,
    Year,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::Day => write!(f, "day"),
            Granularity::Year => write!(f, "year"),
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "day" => Ok(Granularity::Day),
            "year" => Ok(Granularity::Year),
            other => Err(Error::config(
                "granularity",
                format!("expected `day` or `year`, got `{other}`"),
            )),
        }
    }
}

/// Raw (un-normalized) time value: days from CE for day granularity, the year
/// itself for year granularity.
fn parse_raw_time(s: &str, granularity: Granularity) -> std::result::Result<i64, String> {
    match granularity {
        Granularity::Day => {
            let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| format!("bad date `{s}`: {e}"))?;
            Ok(i64::from(date.num_days_from_ce()))
        }
        Granularity::Year => {
            // Year-granularity datasets may carry full dates; month/day are
            // dropped by truncation.
            let year_part = s.split('-').find(|p| !p.is_empty()).unwrap_or(s);
            year_part
                .trim()
                .parse::<i64>()
                .map_err(|_| format!("bad year `{s}`"))
        }
    }
}

fn raw_time_to_string(raw: i64, granularity: Granularity) -> String {
    match granularity {
        Granularity::Day => NaiveDate::from_num_days_from_ce_opt(raw as i32)
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_else(|| raw.to_string()),
        Granularity::Year => raw.to_string(),
    }
}

/// Name/id maps for entities and relations, the inverse-relation map, and the
/// time epoch.
///
/// Relation ids are dense in file order. After [`Vocab::finalize_relations`],
/// the directed id space is doubled: the inverse of base relation `r` is
/// `r + |R|`, and the IDENTITY self-loop relation takes id `2|R|`.
#[derive(Debug, Clone)]
pub struct Vocab {
    entity_names: Vec<String>,
    entity_ids: HashMap<String, usize>,
    relation_names: Vec<String>,
    relation_ids: HashMap<String, usize>,
    base_relations: Option<usize>,
    pub granularity: Granularity,
    /// Raw time value mapped to index 0.
    pub epoch: Option<i64>,
}

pub const IDENTITY_RELATION_NAME: &str = "IDENTITY";
pub const INVERSE_MARK: &str = "⁻¹";

impl Vocab {
    pub fn new(granularity: Granularity) -> Self {
        Vocab {
            entity_names: Vec::new(),
            entity_ids: HashMap::new(),
            relation_names: Vec::new(),
            relation_ids: HashMap::new(),
            base_relations: None,
            granularity,
            epoch: None,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    /// Number of base (file) relations.
    pub fn num_base_relations(&self) -> usize {
        self.base_relations.unwrap_or(self.relation_names.len())
    }

    /// Directed relation count after inverse materialization (2|R|).
    pub fn num_directed_relations(&self) -> usize {
        2 * self.num_base_relations()
    }

    /// The reserved IDENTITY self-loop relation id (2|R|).
    pub fn identity_relation(&self) -> RelId {
        self.num_directed_relations()
    }

    /// Directed relation count including IDENTITY (2|R| + 1).
    pub fn num_relations_with_identity(&self) -> usize {
        self.num_directed_relations() + 1
    }

    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entity_names.len();
        self.entity_names.push(name.to_string());
        self.entity_ids.insert(name.to_string(), id);
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> Result<RelId> {
        if let Some(&id) = self.relation_ids.get(name) {
            return Ok(id);
        }
        if self.base_relations.is_some() {
            return Err(Error::Vocab(format!(
                "relation `{name}` appeared after the vocabulary was finalized"
            )));
        }
        let id = self.relation_names.len();
        self.relation_names.push(name.to_string());
        self.relation_ids.insert(name.to_string(), id);
        Ok(id)
    }

    /// Freeze the base relation set and check that no base relation name
    /// collides with a generated inverse name.
    pub fn finalize_relations(&mut self) -> Result<()> {
        for name in &self.relation_names {
            let inv = format!("{name}{INVERSE_MARK}");
            if self.relation_ids.contains_key(&inv) {
                return Err(Error::Vocab(format!(
                    "base relation `{inv}` collides with the inverse of `{name}`"
                )));
            }
        }
        self.base_relations = Some(self.relation_names.len());
        Ok(())
    }

    /// Inverse-relation map over directed ids; an involution.
    pub fn inverse_of(&self, rel: RelId) -> RelId {
        let base = self.num_base_relations();
        debug_assert!(rel < 2 * base);
        if rel < base {
            rel + base
        } else {
            rel - base
        }
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_ids.get(name).copied()
    }

    /// Resolve a directed relation by name; `name⁻¹` resolves to the inverse id.
    pub fn relation_id(&self, name: &str) -> Option<RelId> {
        if name == IDENTITY_RELATION_NAME {
            return Some(self.identity_relation());
        }
        if let Some(&id) = self.relation_ids.get(name) {
            return Some(id);
        }
        let stripped = name.strip_suffix(INVERSE_MARK)?;
        self.relation_ids
            .get(stripped)
            .map(|&id| id + self.num_base_relations())
    }

    pub fn relation_display(&self, rel: RelId) -> String {
        let base = self.num_base_relations();
        if rel < base {
            self.relation_names[rel].clone()
        } else if rel < 2 * base {
            format!("{}{INVERSE_MARK}", self.relation_names[rel - base])
        } else {
            IDENTITY_RELATION_NAME.to_string()
        }
    }

    /// Parse a timestamp string (same syntax as dataset files) into the
    /// epoch-relative index used everywhere internally.
    pub fn time_index(&self, s: &str) -> Result<TimeIndex> {
        let raw = parse_raw_time(s.trim(), self.granularity)
            .map_err(|msg| Error::config("time", format!("bad timestamp `{s}`: {msg}")))?;
        Ok(raw - self.epoch.unwrap_or(0))
    }

    pub fn time_display(&self, time: TimeIndex) -> String {
        match self.epoch {
            Some(epoch) => raw_time_to_string(epoch + time, self.granularity),
            None => time.to_string(),
        }
    }

    /// Write a versioned textual vocab dump.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("# tkg-vocab v1\n");
        out.push_str(&format!("# granularity {}\n", self.granularity));
        if let Some(epoch) = self.epoch {
            out.push_str(&format!(
                "# epoch {}\n",
                raw_time_to_string(epoch, self.granularity)
            ));
        }
        out.push_str(&format!("# entities {}\n", self.num_entities()));
        out.push_str(&format!("# relations {}\n", self.num_base_relations()));
        for (id, name) in self.entity_names.iter().enumerate() {
            out.push_str(&format!("E\t{id}\t{name}\n"));
        }
        for (id, name) in self.relation_names.iter().enumerate() {
            out.push_str(&format!("R\t{id}\t{name}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?
            .unwrap_or_default();
        if header.trim() != "# tkg-vocab v1" {
            return Err(Error::Vocab(format!(
                "unsupported vocab header `{header}` in {}",
                path.display()
            )));
        }
        let mut vocab = Vocab::new(Granularity::Day);
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# granularity ") {
                vocab.granularity = rest.trim().parse()?;
                continue;
            }
            if let Some(rest) = line.strip_prefix("# epoch ") {
                vocab.epoch =
                    Some(parse_raw_time(rest.trim(), vocab.granularity).map_err(|msg| {
                        Error::Parse {
                            line: lineno + 2,
                            msg,
                        }
                    })?);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let kind = parts.next().unwrap_or_default();
            let _id = parts.next();
            let name = parts.next().ok_or_else(|| Error::Parse {
                line: lineno + 2,
                msg: "expected `KIND<TAB>ID<TAB>NAME`".to_string(),
            })?;
            match kind {
                "E" => {
                    vocab.intern_entity(name);
                }
                "R" => {
                    vocab.intern_relation(name)?;
                }
                other => {
                    return Err(Error::Parse {
                        line: lineno + 2,
                        msg: format!("unknown record kind `{other}`"),
                    })
                }
            }
        }
        vocab.finalize_relations()?;
        Ok(vocab)
    }
}

/// Parse one TSV line into a [`Quadruple`], interning names into the vocab.
///
/// The vocab's epoch must already be set (the loader scans for the minimum
/// timestamp first); a timestamp before the epoch is a range error.
pub fn parse_quadruple(line: &str, lineno: usize, vocab: &mut Vocab) -> Result<Quadruple> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 4 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected 4 tab-separated columns, got {}", fields.len()),
        });
    }
    let raw = parse_raw_time(fields[3].trim(), vocab.granularity)
        .map_err(|msg| Error::Parse { line: lineno, msg })?;
    let epoch = match vocab.epoch {
        Some(e) => e,
        None => {
            vocab.epoch = Some(raw);
            raw
        }
    };
    let time = raw - epoch;
    if time < 0 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!(
                "timestamp `{}` precedes the dataset epoch",
                fields[3].trim()
            ),
        });
    }
    let subject = vocab.intern_entity(fields[0].trim());
    let relation = vocab.intern_relation(fields[1].trim())?;
    let object = vocab.intern_entity(fields[2].trim());
    Ok(Quadruple::new(subject, relation, object, time))
}

/// Materialize inverse facts: for each (s, r, o, t) also emit (o, r⁻¹, s, t).
/// Input facts must carry base relation ids only.
pub fn add_inverses(facts: &[Quadruple], vocab: &Vocab) -> Vec<Quadruple> {
    let base = vocab.num_base_relations();
    let mut out = Vec::with_capacity(facts.len() * 2);
    for q in facts {
        debug_assert!(q.relation < base);
        out.push(*q);
        out.push(Quadruple::new(
            q.object,
            q.relation + base,
            q.subject,
            q.time,
        ));
    }
    out
}

/// One outgoing temporal link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub rel: RelId,
    pub object: EntityId,
    pub time: TimeIndex,
}

/// Immutable time-indexed adjacency over directed facts (inverses included).
///
/// Adjacency lists are sorted by (time, rel, object) so time cuts are binary
/// searches and iteration order is deterministic.
#[derive(Debug, Clone)]
pub struct TemporalGraph {
    adj: Vec<Vec<Link>>,
    facts: HashSet<Quadruple>,
    num_entities: usize,
}

impl TemporalGraph {
    /// Build from base facts; inverses are materialized internally.
    pub fn build(base_facts: &[Quadruple], vocab: &Vocab) -> Self {
        Self::from_directed(add_inverses(base_facts, vocab), vocab.num_entities())
    }

    pub fn from_directed(directed: Vec<Quadruple>, num_entities: usize) -> Self {
        let mut adj: Vec<Vec<Link>> = vec![Vec::new(); num_entities];
        let mut facts = HashSet::with_capacity(directed.len());
        for q in directed {
            if facts.insert(q) {
                adj[q.subject].push(Link {
                    rel: q.relation,
                    object: q.object,
                    time: q.time,
                });
            }
        }
        for list in &mut adj {
            list.sort_by_key(|l| (l.time, l.rel, l.object));
        }
        TemporalGraph {
            adj,
            facts,
            num_entities,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_directed_facts(&self) -> usize {
        self.facts.len()
    }

    pub fn contains(&self, q: &Quadruple) -> bool {
        self.facts.contains(q)
    }

    /// Outgoing links of `entity`; with a bound, only links with time strictly
    /// below it. Unknown entities yield an empty slice.
    pub fn neighbors(&self, entity: EntityId, time_bound: Option<TimeIndex>) -> &[Link] {
        let Some(list) = self.adj.get(entity) else {
            return &[];
        };
        match time_bound {
            None => list,
            Some(bound) => {
                let cut = list.partition_point(|l| l.time < bound);
                &list[..cut]
            }
        }
    }

    /// Maximum time over all stored facts (None when empty).
    pub fn max_time(&self) -> Option<TimeIndex> {
        self.facts.iter().map(|q| q.time).max()
    }
}

/// Fact-set / query-set partition of the training quadruples.
#[derive(Debug, Clone)]
pub struct TrainSplit {
    pub facts: Vec<Quadruple>,
    pub queries: Vec<Quadruple>,
}

/// Seeded random partition of `train` into ⌊n·fact_fraction⌋ path-extraction
/// facts and the remaining query quadruples.
pub fn split_train(train: &[Quadruple], fact_fraction: f64, seed: u64) -> Result<TrainSplit> {
    if train.is_empty() {
        return Err(Error::Invalid("cannot split an empty training set".into()));
    }
    if !(fact_fraction > 0.0 && fact_fraction < 1.0) {
        return Err(Error::config(
            "fact_fraction",
            format!("must lie in (0, 1), got {fact_fraction}"),
        ));
    }
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_facts = ((train.len() as f64) * fact_fraction).floor() as usize;
    let mut facts: Vec<Quadruple> = idx[..n_facts].iter().map(|&i| train[i]).collect();
    let mut queries: Vec<Quadruple> = idx[n_facts..].iter().map(|&i| train[i]).collect();
    facts.sort();
    queries.sort();
    Ok(TrainSplit { facts, queries })
}

/// A parsed dataset: base (non-inverse) facts per split plus the vocab.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocab,
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadStats {
    pub duplicates_dropped: usize,
}

impl Dataset {
    pub fn all_facts(&self) -> Vec<Quadruple> {
        let mut all = self.train.clone();
        all.extend_from_slice(&self.valid);
        all.extend_from_slice(&self.test);
        all
    }

    /// Extrapolation regime requires strictly chronological splits:
    /// max(train) < min(valid) <= max(valid) < min(test).
    pub fn validate_chronological(&self) -> Result<()> {
        let max_train = self.train.iter().map(|q| q.time).max();
        let min_valid = self.valid.iter().map(|q| q.time).min();
        let max_valid = self.valid.iter().map(|q| q.time).max();
        let min_test = self.test.iter().map(|q| q.time).min();
        match (max_train, min_valid, max_valid, min_test) {
            (Some(a), Some(b), Some(c), Some(d)) if a < b && c < d => Ok(()),
            (None, _, _, _) => Err(Error::Invalid("empty train split".into())),
            _ => Err(Error::Invalid(
                "extrapolation requires max(train times) < min(valid times) \
                 <= max(valid times) < min(test times)"
                    .into(),
            )),
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Err(Error::DatasetNotFound(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

/// Load train/valid/test TSV files. The epoch is the minimum timestamp across
/// all three splits. Exact duplicate quadruples are dropped (counted in stats).
pub fn load_dataset(
    train: &Path,
    valid: &Path,
    test: &Path,
    granularity: Granularity,
) -> Result<(Dataset, LoadStats)> {
    let files = [train, valid, test];
    let mut raw_lines: Vec<Vec<String>> = Vec::with_capacity(3);
    for path in files {
        raw_lines.push(read_lines(path)?);
    }
    // Pass 1: epoch over all splits.
    let mut epoch: Option<i64> = None;
    for lines in &raw_lines {
        for (lineno, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ts = line.split('\t').nth(3).ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "expected 4 tab-separated columns".to_string(),
            })?;
            let raw = parse_raw_time(ts.trim(), granularity).map_err(|msg| Error::Parse {
                line: lineno + 1,
                msg,
            })?;
            epoch = Some(epoch.map_or(raw, |e: i64| e.min(raw)));
        }
    }
    let mut vocab = Vocab::new(granularity);
    vocab.epoch = epoch;
    // Pass 2: intern.
    let mut stats = LoadStats::default();
    let mut splits: Vec<Vec<Quadruple>> = Vec::with_capacity(3);
    for lines in &raw_lines {
        let mut quads = Vec::with_capacity(lines.len());
        let mut seen = HashSet::with_capacity(lines.len());
        for (lineno, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let q = parse_quadruple(line, lineno + 1, &mut vocab)?;
            if seen.insert(q) {
                quads.push(q);
            } else {
                stats.duplicates_dropped += 1;
            }
        }
        splits.push(quads);
    }
    vocab.finalize_relations()?;
    let test_q = splits.pop().unwrap();
    let valid_q = splits.pop().unwrap();
    let train_q = splits.pop().unwrap();
    Ok((
        Dataset {
            vocab,
            train: train_q,
            valid: valid_q,
            test: test_q,
        },
        stats,
    ))
}

/// Serialize a split back to the TSV format (inverse of parsing).
pub fn write_split(path: &Path, quads: &[Quadruple], vocab: &Vocab) -> Result<()> {
    let epoch = vocab.epoch.unwrap_or(0);
    let mut out = String::new();
    for q in quads {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            vocab.entity_name(q.subject),
            vocab.relation_display(q.relation),
            vocab.entity_name(q.object),
            raw_time_to_string(epoch + q.time, vocab.granularity)
        ));
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
