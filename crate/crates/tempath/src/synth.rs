//! Deterministic synthetic TKG with a planted multi-hop rule.
//!
//! Fixed permutations π₁…π_n over the entities define body relations
//! `step_i(z, π_i(z))`, repeated across the training window every `period`
//! time steps. The planted rule is
//!
//!   step_1(x, z₁, t) ∧ … ∧ step_n(z_{n−1}, y, t)  ⇒  implies(x, y, t+δ)
//!
//! Each entity carries exactly one `implies` head fact; head timestamps are
//! spread over the train / valid / test windows, so held-out heads can only
//! be predicted through the body chain (no copy-at-another-time shortcut)
//! and test-window entities are never seen as heads during training.

use crate::data::{Dataset, EntityId, Granularity, Quadruple, TimeIndex, Vocab};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_entities: usize,
    /// Body-chain length of the planted rule.
    pub rule_len: usize,
    /// Head offset: bodies at t support the head at t+δ.
    pub delta: i64,
    /// Body facts repeat every `period` steps across the training window.
    pub period: i64,
    pub train_span: i64,
    pub valid_span: i64,
    pub test_span: i64,
    /// Fraction of entities whose head fact lands in the training window;
    /// the rest split evenly between valid and test windows.
    pub train_head_fraction: f64,
    /// Random extra facts under a separate `noise` relation (train window).
    pub noise_facts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_entities: 30,
            rule_len: 2,
            delta: 1,
            period: 1,
            train_span: 16,
            valid_span: 2,
            test_span: 2,
            train_head_fraction: 0.6,
            noise_facts: 10,
            seed: 7,
        }
    }
}

/// One planted-rule instantiation: the body chain x → … → y and the time of
/// the head fact it licenses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleInstance {
    /// Entity chain of length `rule_len + 1`, from head subject to object.
    pub chain: Vec<EntityId>,
    pub head_time: TimeIndex,
    /// Which split the head fact landed in: "train", "valid" or "test".
    pub split: &'static str,
}

#[derive(Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub rules: Vec<RuleInstance>,
    /// Directed relation id of the head relation `implies`.
    pub head_relation: usize,
    /// Directed relation ids of the body relations, in chain order.
    pub body_relations: Vec<usize>,
}

fn validate(cfg: &SynthConfig) -> Result<()> {
    if cfg.num_entities < 3 {
        return Err(Error::config("num_entities", "need at least 3 entities"));
    }
    if cfg.rule_len == 0 {
        return Err(Error::config("rule_len", "must be >= 1"));
    }
    if cfg.period < 1 {
        return Err(Error::config("period", "must be >= 1"));
    }
    if cfg.period > cfg.train_span {
        return Err(Error::config(
            "period",
            format!(
                "body period {} exceeds the training span {}",
                cfg.period, cfg.train_span
            ),
        ));
    }
    if cfg.train_span < 1 || cfg.valid_span < 1 || cfg.test_span < 1 {
        return Err(Error::config("spans", "every window needs at least 1 step"));
    }
    if cfg.delta < 0 {
        return Err(Error::config("delta", "must be >= 0"));
    }
    if !(cfg.train_head_fraction > 0.0 && cfg.train_head_fraction < 1.0) {
        return Err(Error::config(
            "train_head_fraction",
            "must lie strictly between 0 and 1",
        ));
    }
    let rest = cfg.num_entities - (cfg.train_head_fraction * cfg.num_entities as f64) as usize;
    if rest < 2 {
        return Err(Error::config(
            "train_head_fraction",
            "leaves no entities for the valid/test windows",
        ));
    }
    Ok(())
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    validate(cfg)?;
    let n = cfg.num_entities;
    let mut vocab = Vocab::new(Granularity::Year);
    let mut body_relations = Vec::with_capacity(cfg.rule_len);
    for i in 1..=cfg.rule_len {
        body_relations.push(vocab.intern_relation(&format!("step_{i}"))?);
    }
    let head_relation = vocab.intern_relation("implies")?;
    let noise_relation = vocab.intern_relation("noise")?;
    for i in 0..n {
        vocab.intern_entity(&format!("n{i:02}"));
    }
    vocab.finalize_relations()?;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    // One permutation per body relation.
    let perms: Vec<Vec<EntityId>> = (0..cfg.rule_len)
        .map(|_| {
            let mut p: Vec<EntityId> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();

    let mut train: Vec<Quadruple> = Vec::new();
    // Body facts across the training window.
    let mut t = 0;
    while t < cfg.train_span {
        for (i, perm) in perms.iter().enumerate() {
            for z in 0..n {
                train.push(Quadruple::new(z, body_relations[i], perm[z], t));
            }
        }
        t += cfg.period;
    }

    // Head assignment: shuffle entities, then fill train/valid/test windows.
    let mut order: Vec<EntityId> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (cfg.train_head_fraction * n as f64) as usize;
    let rest = n - n_train;
    let n_valid = rest / 2;
    let mut valid: Vec<Quadruple> = Vec::new();
    let mut test: Vec<Quadruple> = Vec::new();
    let mut rules = Vec::with_capacity(n);
    // Heads in the train window need bodies strictly before them, so start
    // at max(δ, 1).
    let train_head_lo = cfg.delta.max(1).min(cfg.train_span - 1);
    for (i, &x) in order.iter().enumerate() {
        let mut chain = vec![x];
        for perm in &perms {
            chain.push(perm[*chain.last().unwrap()]);
        }
        let y = *chain.last().unwrap();
        let (time, split) = if i < n_train {
            let lo = train_head_lo;
            let span = cfg.train_span - lo;
            (lo + (i as i64) % span, "train")
        } else if i < n_train + n_valid {
            let j = (i - n_train) as i64;
            (cfg.train_span + j % cfg.valid_span, "valid")
        } else {
            let j = (i - n_train - n_valid) as i64;
            (cfg.train_span + cfg.valid_span + j % cfg.test_span, "test")
        };
        let quad = Quadruple::new(x, head_relation, y, time);
        match split {
            "train" => train.push(quad),
            "valid" => valid.push(quad),
            _ => test.push(quad),
        }
        rules.push(RuleInstance {
            chain,
            head_time: time,
            split,
        });
    }

    // Noise facts in the training window, deduplicated.
    let mut added = 0;
    while added < cfg.noise_facts {
        let q = Quadruple::new(
            rng.gen_range(0..n),
            noise_relation,
            rng.gen_range(0..n),
            rng.gen_range(0..cfg.train_span),
        );
        if !train.contains(&q) {
            train.push(q);
            added += 1;
        }
    }

    train.sort();
    valid.sort();
    test.sort();
    let dataset = Dataset {
        vocab,
        train,
        valid,
        test,
    };
    dataset.validate_chronological()?;
    Ok(SynthOutput {
        dataset,
        rules,
        head_relation,
        body_relations,
    })
}

/// Ground-truth rule instantiations as TSV:
/// `split<TAB>head_time<TAB>name0,name1,…` (chain in body order).
pub fn write_rules_file(out: &SynthOutput, path: &Path) -> Result<()> {
    let mut text = String::from("split\thead_time\tchain\n");
    for r in &out.rules {
        let names: Vec<&str> = r
            .chain
            .iter()
            .map(|&e| out.dataset.vocab.entity_name(e))
            .collect();
        text.push_str(&format!("{}\t{}\t{}\n", r.split, r.head_time, names.join(",")));
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
