//! Command-line driver: dataset prep, synthetic generation, training,
//! evaluation, path interpretation, and the two-stage completion pipeline.
//!
//! Exit codes: 0 success, 1 internal failure, 2 bad input (files, config,
//! flags), 3 checkpoint/dimension mismatch, 4 unresolved entity or relation
//! name.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tempath::config::RunConfig;
use tempath::data::{load_dataset, write_split, Dataset, Granularity, LoadStats, TemporalGraph};
use tempath::encode::{encode_query, EncodeOptions};
use tempath::eval::{evaluate, EvalOptions, FilterIndex};
use tempath::explain::{dump_paths_tsv, edge_importance, render_path, top_k_paths};
use tempath::frontier::{collect, CollectOptions, Query, Regime};
use tempath::grad::scores_all;
use tempath::params::{CheckpointMeta, ModelParams};
use tempath::pipeline::{run_pipeline, PipelineConfig};
use tempath::synth::{generate, write_rules_file, SynthConfig};
use tempath::train::{train, TrainConfig};
use tempath::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tempath",
    version,
    about = "Temporal knowledge-graph reasoning over query-specific path frontiers"
)]
struct Cli {
    /// Worker-pool size (0 = available hardware parallelism).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Directory containing train.txt, valid.txt and test.txt.
    #[arg(long)]
    data: PathBuf,
    /// Timestamp granularity of the dataset files.
    #[arg(long, default_value = "day", value_parser = ["day", "year"])]
    granularity: String,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file (flat `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline override applied after the config file, e.g. `--set lr=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset and print its summary; optionally write normalized copies.
    Prep {
        #[command(flatten)]
        data: DataArgs,
        /// Write normalized splits and the vocabulary here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a deterministic planted-rule dataset.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 30)]
        entities: usize,
        /// Body-chain length of the planted rule.
        #[arg(long, default_value_t = 2)]
        rule_len: usize,
        /// Head offset: bodies at t support the head at t+delta.
        #[arg(long, default_value_t = 1)]
        delta: i64,
        /// Body facts repeat every this many steps.
        #[arg(long, default_value_t = 1)]
        period: i64,
        #[arg(long, default_value_t = 16)]
        train_span: i64,
        #[arg(long, default_value_t = 2)]
        valid_span: i64,
        #[arg(long, default_value_t = 2)]
        test_span: i64,
        #[arg(long, default_value_t = 0.6)]
        train_head_fraction: f64,
        #[arg(long, default_value_t = 10)]
        noise_facts: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train a model and write checkpoint, log and config snapshot to a run directory.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on one split with time-wise filtered ranking.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "test", value_parser = ["train", "valid", "test"])]
        split: String,
        /// Write one rank record per scored direction to this TSV file.
        #[arg(long)]
        dump_ranks: Option<PathBuf>,
        /// Rank against all entities without filtering known answers.
        #[arg(long)]
        raw_filter: bool,
        /// Required confirmation for --raw-filter (results are not comparable).
        #[arg(long)]
        unsafe_raw_filter: bool,
    },
    /// Explain a single query with its top-k evidence paths.
    Interpret {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Query subject entity name.
        #[arg(long)]
        entity: String,
        /// Query relation name (append ⁻¹ for the inverse direction).
        #[arg(long)]
        relation: String,
        /// Query timestamp, dataset syntax.
        #[arg(long)]
        time: String,
        /// Explain this entity instead of the top-1 prediction.
        #[arg(long)]
        target: Option<String>,
        #[arg(short, default_value_t = 3)]
        k: usize,
        /// Also write the paths to this TSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-stage run: interpolate masked facts, merge, then extrapolate.
    Pipeline {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Fraction of training facts kept as known (the rest are completed).
        #[arg(long, default_value_t = 0.6)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        mask_seed: u64,
        /// Write the report table to this TSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Ignore the error: the global pool can only be sized once, which
        // matters only under in-process test harnesses.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Prep { data, out_dir } => cmd_prep(&data, out_dir.as_deref()),
        Command::Synth {
            out_dir,
            entities,
            rule_len,
            delta,
            period,
            train_span,
            valid_span,
            test_span,
            train_head_fraction,
            noise_facts,
            seed,
        } => cmd_synth(
            &out_dir,
            SynthConfig {
                num_entities: entities,
                rule_len,
                delta,
                period,
                train_span,
                valid_span,
                test_span,
                train_head_fraction,
                noise_facts,
                seed,
            },
        ),
        Command::Train {
            data,
            config,
            out_dir,
        } => cmd_train(&data, &config, &out_dir),
        Command::Eval {
            checkpoint,
            data,
            config,
            split,
            dump_ranks,
            raw_filter,
            unsafe_raw_filter,
        } => cmd_eval(
            &checkpoint,
            &data,
            &config,
            &split,
            dump_ranks,
            raw_filter,
            unsafe_raw_filter,
        ),
        Command::Interpret {
            checkpoint,
            data,
            config,
            entity,
            relation,
            time,
            target,
            k,
            out,
        } => cmd_interpret(
            &checkpoint,
            &data,
            &config,
            &entity,
            &relation,
            &time,
            target.as_deref(),
            k,
            out.as_deref(),
        ),
        Command::Pipeline {
            data,
            config,
            ratio,
            mask_seed,
            out,
        } => cmd_pipeline(&data, &config, ratio, mask_seed, out.as_deref()),
    }
}

fn load_data(data: &DataArgs) -> Result<(Dataset, LoadStats)> {
    let granularity: Granularity = data.granularity.parse()?;
    load_dataset(
        &data.data.join("train.txt"),
        &data.data.join("valid.txt"),
        &data.data.join("test.txt"),
        granularity,
    )
}

fn resolve_config(config: &ConfigArgs) -> Result<RunConfig> {
    let mut rc = match &config.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    rc.apply_overrides(&config.set)?;
    Ok(rc)
}

fn max_time(ds: &Dataset) -> i64 {
    ds.all_facts().iter().map(|q| q.time).max().unwrap_or(1)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn make_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_prep(data: &DataArgs, out_dir: Option<&Path>) -> Result<()> {
    let (ds, stats) = load_data(data)?;
    println!(
        "entities {}  relations {} (+{} inverse, 1 identity)",
        ds.vocab.num_entities(),
        ds.vocab.num_base_relations(),
        ds.vocab.num_base_relations()
    );
    println!(
        "train {}  valid {}  test {}  duplicates dropped {}",
        ds.train.len(),
        ds.valid.len(),
        ds.test.len(),
        stats.duplicates_dropped
    );
    println!(
        "chronological splits: {}",
        if ds.validate_chronological().is_ok() {
            "yes (extrapolation ready)"
        } else {
            "no (interpolation only)"
        }
    );
    if let Some(dir) = out_dir {
        make_dir(dir)?;
        ds.vocab.save(&dir.join("vocab.txt"))?;
        write_split(&dir.join("train.txt"), &ds.train, &ds.vocab)?;
        write_split(&dir.join("valid.txt"), &ds.valid, &ds.vocab)?;
        write_split(&dir.join("test.txt"), &ds.test, &ds.vocab)?;
        println!("normalized dataset written to {}", dir.display());
    }
    Ok(())
}

fn cmd_synth(out_dir: &Path, cfg: SynthConfig) -> Result<()> {
    let out = generate(&cfg)?;
    let ds = &out.dataset;
    make_dir(out_dir)?;
    write_split(&out_dir.join("train.txt"), &ds.train, &ds.vocab)?;
    write_split(&out_dir.join("valid.txt"), &ds.valid, &ds.vocab)?;
    write_split(&out_dir.join("test.txt"), &ds.test, &ds.vocab)?;
    write_rules_file(&out, &out_dir.join("rules.tsv"))?;
    ds.vocab.save(&out_dir.join("vocab.txt"))?;
    println!(
        "generated {} train / {} valid / {} test facts over {} entities ({} planted rules) in {}",
        ds.train.len(),
        ds.valid.len(),
        ds.test.len(),
        ds.vocab.num_entities(),
        out.rules.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_train(data: &DataArgs, config: &ConfigArgs, out_dir: &Path) -> Result<()> {
    let rc = resolve_config(config)?;
    let (ds, _) = load_data(data)?;
    if rc.regime == Regime::Extrapolation {
        ds.validate_chronological()?;
    }
    let span = rc.resolved_span(max_time(&ds));
    let init = ModelParams::init(
        rc.dims(ds.vocab.num_base_relations()),
        rc.shared_relations,
        rc.time_mode,
        span,
        rc.init_seed,
    )?;
    let outcome = train(&ds, init, &rc.train_config())?;
    make_dir(out_dir)?;
    rc.write_snapshot(&out_dir.join("run.cfg"))?;
    ds.vocab.save(&out_dir.join("vocab.txt"))?;
    let meta = CheckpointMeta {
        epoch: outcome.best_epoch,
        val_mrr: outcome.best_val_mrr.unwrap_or(0.0),
        regime: Some(rc.regime.to_string()),
        granularity: Some(ds.vocab.granularity.to_string()),
        activation: Some(rc.activation.to_string()),
        time_span: Some(span),
        note: None,
    };
    outcome.model.save(&out_dir.join("model.ckpt"), &meta)?;
    let mut log = String::new();
    for record in &outcome.log {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Invalid(format!("log serialization failed: {e}")))?;
        log.push_str(&line);
        log.push('\n');
    }
    write_text(&out_dir.join("train.log.jsonl"), &log)?;
    match &outcome.final_val {
        Some(metrics) => println!(
            "best epoch {}  validation {}",
            outcome.best_epoch, metrics
        ),
        None => println!("trained {} epochs (validation disabled)", outcome.log.len()),
    }
    println!("run directory: {}", out_dir.display());
    Ok(())
}

/// Apply checkpoint metadata as config defaults, keeping explicit overrides on top.
fn config_from_meta(meta: &CheckpointMeta, config: &ConfigArgs) -> Result<RunConfig> {
    let mut rc = match &config.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(regime) = &meta.regime {
        rc.apply("regime", regime)?;
    }
    if let Some(activation) = &meta.activation {
        rc.apply("activation", activation)?;
    }
    rc.apply_overrides(&config.set)?;
    Ok(rc)
}

fn check_granularity(meta: &CheckpointMeta, ds: &Dataset) -> Result<()> {
    if let Some(g) = &meta.granularity {
        let have = ds.vocab.granularity.to_string();
        if *g != have {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on {g}-granularity data, dataset uses {have}"
            )));
        }
    }
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    data: &DataArgs,
    config: &ConfigArgs,
    split: &str,
    dump_ranks: Option<PathBuf>,
    raw_filter: bool,
    unsafe_raw_filter: bool,
) -> Result<()> {
    if raw_filter && !unsafe_raw_filter {
        return Err(Error::config(
            "raw_filter",
            "unfiltered ranking is not comparable to reported numbers; \
             pass --unsafe-raw-filter to confirm",
        ));
    }
    let (model, meta) = ModelParams::load(checkpoint)?;
    let rc = config_from_meta(&meta, config)?;
    let (ds, _) = load_data(data)?;
    check_granularity(&meta, &ds)?;
    let queries = match split {
        "train" => &ds.train,
        "valid" => &ds.valid,
        _ => &ds.test,
    };
    // Interpolation ranks against the training graph; extrapolation may see
    // everything up to each query's own time, so all splits are admissible.
    let mut bg_facts = ds.train.clone();
    if rc.regime == Regime::Extrapolation {
        if split != "train" {
            bg_facts.extend_from_slice(&ds.valid);
        }
        if split == "test" {
            bg_facts.extend_from_slice(&ds.test);
        }
    }
    let background = TemporalGraph::build(&bg_facts, &ds.vocab);
    let all = ds.all_facts();
    let filter = FilterIndex::build(&[&all], &ds.vocab);
    let mut opts = EvalOptions::new(rc.regime, EncodeOptions::eval(rc.activation));
    opts.self_loops = rc.self_loops;
    opts.degree_cap = rc.degree_cap_option();
    opts.chronology = rc.chronology;
    opts.frontier_seed = rc.seed;
    opts.dump_ranks = dump_ranks;
    opts.raw_filter = raw_filter;
    let metrics = evaluate(&model, &background, queries, &ds.vocab, &filter, &opts)?;
    println!("{split} ({}): {metrics}", rc.regime);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_interpret(
    checkpoint: &Path,
    data: &DataArgs,
    config: &ConfigArgs,
    entity: &str,
    relation: &str,
    time: &str,
    target: Option<&str>,
    k: usize,
    out: Option<&Path>,
) -> Result<()> {
    let (model, meta) = ModelParams::load(checkpoint)?;
    let rc = config_from_meta(&meta, config)?;
    let (ds, _) = load_data(data)?;
    check_granularity(&meta, &ds)?;
    let resolve_entity = |name: &str| {
        ds.vocab.entity_id(name).ok_or_else(|| Error::UnknownName {
            kind: "entity",
            name: name.to_string(),
        })
    };
    let subject = resolve_entity(entity)?;
    let rel = ds
        .vocab
        .relation_id(relation)
        .ok_or_else(|| Error::UnknownName {
            kind: "relation",
            name: relation.to_string(),
        })?;
    let t = ds.vocab.time_index(time)?;
    let query = Query::new(subject, rel, t, rc.regime);
    let background = TemporalGraph::build(&ds.all_facts(), &ds.vocab);
    let mut copts = CollectOptions::new(model.dims.num_steps, ds.vocab.identity_relation());
    copts.self_loops = rc.self_loops;
    copts.degree_cap = rc.degree_cap_option();
    copts.chronology = rc.chronology;
    copts.seed = rc.seed;
    let trace = collect(&background, &query, &copts);
    let encode = EncodeOptions::eval(rc.activation);
    let state = encode_query(&model, &trace, &encode)?;
    let scores = scores_all(&model, &state, ds.vocab.num_entities());
    let target_id = match target {
        Some(name) => resolve_entity(name)?,
        None => scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bs), (i, &s)| {
                if s > bs {
                    (i, s)
                } else {
                    (bi, bs)
                }
            })
            .0,
    };
    println!(
        "query: ({}, {}, ?, {})  [{}]",
        ds.vocab.entity_name(subject),
        ds.vocab.relation_display(rel),
        ds.vocab.time_display(t),
        rc.regime
    );
    println!(
        "target: {} (score {:+.4})",
        ds.vocab.entity_name(target_id),
        scores[target_id]
    );
    let imp = edge_importance(&model, &trace, &state, target_id, &encode)?;
    let paths = top_k_paths(&trace, &imp, target_id, k, 0);
    if paths.is_empty() {
        println!(
            "no paths: target is unreachable within {} steps",
            model.dims.num_steps
        );
    }
    for (i, p) in paths.iter().enumerate() {
        println!("{:>3}. {}", i + 1, render_path(p, &trace, &ds.vocab));
    }
    if let Some(path) = out {
        dump_paths_tsv(&paths, &trace, path)?;
        println!("paths written to {}", path.display());
    }
    Ok(())
}

fn cmd_pipeline(
    data: &DataArgs,
    config: &ConfigArgs,
    ratio: f64,
    mask_seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let rc = resolve_config(config)?;
    let (ds, _) = load_data(data)?;
    ds.validate_chronological()?;
    let base = rc.train_config();
    let cfg = PipelineConfig {
        ratio,
        mask_seed,
        d: rc.d,
        d_a: rc.d_a,
        num_steps: rc.num_steps,
        time_mode: rc.time_mode,
        init_seed: rc.init_seed,
        interp: TrainConfig {
            regime: Regime::Interpolation,
            ..base.clone()
        },
        extrap: TrainConfig {
            regime: Regime::Extrapolation,
            ..base
        },
        score_threshold: None,
    };
    let report = run_pipeline(&ds, &cfg)?;
    print!("{report}");
    if let Some(path) = out {
        report.write_tsv(path)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}
