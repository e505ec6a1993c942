//! Command-line entry point.
//!
//! Each subcommand takes its settings from flags, optionally layered over a
//! flat `key = value` file given with `--config` (flags win). Keys are the
//! long flag names with `-` written as `_`. Paths and `threads` are not
//! content-affecting and stay out of artifact headers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, Header};
use crate::error::{Error, Result};
use crate::example_gen::{self, GenConfig, PretrainExample, ReasoningCategory, SlotTarget, Vocab};
use crate::ingest::{self, CorpusStore};
use crate::neural::{self, TrainConfig};
use crate::pair_index::{self, EvidenceLoc, Profile, QueryGroup};
use crate::qa::{self, EvalConfig, EvalMode, LexicalOverlap, RefModel};

#[derive(Debug, Parser)]
#[command(name = "spanreason", version, about = "Span-reasoning pre-training data pipeline and QA harness")]
struct Cli {
    /// Worker thread cap (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a JSONL corpus into a corpus store.
    Ingest(IngestArgs),
    /// Build query groups from a corpus store.
    Pair(PairArgs),
    /// Generate pre-training examples.
    Gen(GenArgs),
    /// Train the reference encoder on generated examples.
    TrainToy(TrainArgs),
    /// Evaluate a parameter file on a QA dataset.
    Eval(EvalArgs),
    /// Count queries, evidence, pairs and categories in a groups or examples file.
    Stats(StatsArgs),
    /// Render a seeded sample of groups as a markdown audit sheet.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    store: Option<String>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    store: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epoch: Option<String>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    no_mlm: bool,
    #[arg(long)]
    no_unanswerable: bool,
    #[arg(long)]
    single_evidence: bool,
    #[arg(long)]
    mlm_rate: Option<String>,
    #[arg(long)]
    intersection_prob: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    examples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    limit: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Metrics trace (default: `<out>.trace.jsonl`).
    #[arg(long)]
    trace: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// A groups or examples file.
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    store: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

const PATH_KEYS: &[&str] = &["corpus", "store", "groups", "examples", "params", "dataset", "input", "out", "trace"];

const INGEST_KEYS: &[&str] = &["corpus", "out"];
const PAIR_KEYS: &[&str] = &["store", "profile", "out"];
const GEN_KEYS: &[&str] = &[
    "groups",
    "store",
    "seed",
    "epoch",
    "profile",
    "no_mlm",
    "no_unanswerable",
    "single_evidence",
    "mlm_rate",
    "intersection_prob",
    "query_max",
    "evidence_max_two",
    "evidence_max_one",
    "cell_max",
    "snippet_columns_max",
    "total_max",
    "out",
];
const TRAIN_KEYS: &[&str] = &[
    "examples",
    "seed",
    "limit",
    "d",
    "layers",
    "heads",
    "init_std",
    "lr",
    "weight_decay",
    "steps",
    "batch_size",
    "eval_every",
    "stop_at_em",
    "max_span_len",
    "out",
    "trace",
];
const EVAL_KEYS: &[&str] = &[
    "params",
    "dataset",
    "mode",
    "total_max",
    "query_max",
    "stride",
    "hotpot_window",
    "top_k",
    "max_span_len",
    "cell_max",
    "out",
];
const STATS_KEYS: &[&str] = &["input", "out"];
const AUDIT_KEYS: &[&str] = &["groups", "store", "n", "seed", "out"];

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, allowed: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key {k:?}", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Effective settings of one stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    fn layered(file: Option<&Path>, allowed: &[&str], flags: Vec<(&str, Option<String>)>) -> Result<Self> {
        let mut values = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_config(&text, allowed)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        Ok(RunConfig { values })
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.values
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config(format!("missing required setting {key:?}")))
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key:?}"))),
        }
    }

    fn flag(&self, key: &str) -> Result<bool> {
        self.get(key, false)
    }

    /// Content-affecting settings, as recorded in artifact headers.
    pub fn header_config(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter(|(k, _)| !PATH_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

fn bool_flag(set: bool) -> Option<String> {
    set.then(|| "true".to_string())
}

fn inputs(named: &[(&str, &Path)]) -> Result<BTreeMap<String, String>> {
    named.iter().map(|(k, p)| Ok((k.to_string(), artifact::file_sha256(p)?))).collect()
}

/// Runs the command line and returns the process exit code: 0 success,
/// 1 validation or runtime error, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => {
            let cfg = RunConfig::layered(a.config.as_deref(), INGEST_KEYS, vec![("corpus", a.corpus), ("out", a.out)])?;
            cmd_ingest(&cfg)
        }
        Command::Pair(a) => {
            let cfg = RunConfig::layered(
                a.config.as_deref(),
                PAIR_KEYS,
                vec![("store", a.store), ("profile", a.profile), ("out", a.out)],
            )?;
            cmd_pair(&cfg)
        }
        Command::Gen(a) => {
            let cfg = RunConfig::layered(
                a.config.as_deref(),
                GEN_KEYS,
                vec![
                    ("groups", a.groups),
                    ("store", a.store),
                    ("seed", a.seed),
                    ("epoch", a.epoch),
                    ("profile", a.profile),
                    ("no_mlm", bool_flag(a.no_mlm)),
                    ("no_unanswerable", bool_flag(a.no_unanswerable)),
                    ("single_evidence", bool_flag(a.single_evidence)),
                    ("mlm_rate", a.mlm_rate),
                    ("intersection_prob", a.intersection_prob),
                    ("out", a.out),
                ],
            )?;
            cmd_gen(&cfg)
        }
        Command::TrainToy(a) => {
            let cfg = RunConfig::layered(
                a.config.as_deref(),
                TRAIN_KEYS,
                vec![
                    ("examples", a.examples),
                    ("seed", a.seed),
                    ("limit", a.limit),
                    ("steps", a.steps),
                    ("lr", a.lr),
                    ("out", a.out),
                    ("trace", a.trace),
                ],
            )?;
            cmd_train(&cfg)
        }
        Command::Eval(a) => {
            let cfg = RunConfig::layered(
                a.config.as_deref(),
                EVAL_KEYS,
                vec![("params", a.params), ("dataset", a.dataset), ("mode", a.mode), ("out", a.out)],
            )?;
            cmd_eval(&cfg)
        }
        Command::Stats(a) => {
            let cfg = RunConfig::layered(a.config.as_deref(), STATS_KEYS, vec![("input", a.input), ("out", a.out)])?;
            cmd_stats(&cfg)
        }
        Command::Audit(a) => {
            let cfg = RunConfig::layered(
                a.config.as_deref(),
                AUDIT_KEYS,
                vec![("groups", a.groups), ("store", a.store), ("n", a.n), ("seed", a.seed), ("out", a.out)],
            )?;
            cmd_audit(&cfg)
        }
    }
}

fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let corpus = cfg.path("corpus")?;
    let out = cfg.path("out")?;
    let store = ingest::ingest(artifact::open(&corpus)?)?;
    let header = Header::new("store", cfg.header_config(), inputs(&[("corpus", &corpus)])?);
    artifact::write_document(&out, &header, &store)?;
    let s = &store.stats;
    eprintln!("ingested {} pages, {} sentences, {} tables", s.n_pages, s.n_sentences, s.n_tables);
    Ok(())
}

fn read_store(path: &Path) -> Result<CorpusStore> {
    let (header, store) = artifact::read_document::<CorpusStore>(path)?;
    if header.kind != "store" {
        return Err(Error::SchemaViolation(format!("{} is a {:?} artifact, not a store", path.display(), header.kind)));
    }
    Ok(store)
}

fn read_groups(path: &Path) -> Result<Vec<QueryGroup>> {
    let (header, groups) = artifact::read_jsonl::<QueryGroup>(path)?;
    if let Some(h) = header.filter(|h| h.kind != "groups") {
        return Err(Error::SchemaViolation(format!("{} is a {:?} artifact, not groups", path.display(), h.kind)));
    }
    Ok(groups)
}

fn cmd_pair(cfg: &RunConfig) -> Result<()> {
    let store_path = cfg.path("store")?;
    let out = cfg.path("out")?;
    let profile: Profile = cfg.get("profile", Profile::Text)?;
    let store = read_store(&store_path)?;
    let index = pair_index::build_index(&store);
    let groups = pair_index::build_query_groups(&store, &index, profile);
    let header = Header::new("groups", cfg.header_config(), inputs(&[("store", &store_path)])?);
    artifact::write_jsonl(&out, &header, &groups)?;
    eprintln!("{} pair keys, {} query groups", index.len(), groups.len());
    Ok(())
}

fn gen_config(cfg: &RunConfig) -> Result<GenConfig> {
    let d = GenConfig::default();
    let b = d.budget;
    let gen = GenConfig {
        budget: example_gen::BudgetConfig {
            query_max: cfg.get("query_max", b.query_max)?,
            evidence_max_two: cfg.get("evidence_max_two", b.evidence_max_two)?,
            evidence_max_one: cfg.get("evidence_max_one", b.evidence_max_one)?,
            cell_max: cfg.get("cell_max", b.cell_max)?,
            snippet_columns_max: cfg.get("snippet_columns_max", b.snippet_columns_max)?,
            total_max: cfg.get("total_max", b.total_max)?,
        },
        profile: cfg.get("profile", d.profile)?,
        mlm: !cfg.flag("no_mlm")?,
        mlm_rate: cfg.get("mlm_rate", d.mlm_rate)?,
        unanswerable: !cfg.flag("no_unanswerable")?,
        single_evidence: cfg.flag("single_evidence")?,
        intersection_prob: cfg.get("intersection_prob", d.intersection_prob)?,
    };
    gen.budget.validate()?;
    if !(0.0..=1.0).contains(&gen.mlm_rate) || !(0.0..=1.0).contains(&gen.intersection_prob) {
        return Err(Error::Config("mlm_rate and intersection_prob must lie in [0, 1]".into()));
    }
    Ok(gen)
}

fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let groups_path = cfg.path("groups")?;
    let store_path = cfg.path("store")?;
    let out = cfg.path("out")?;
    let seed: u64 = cfg.get("seed", 0)?;
    let epoch: u64 = cfg.get("epoch", 0)?;
    let gen = gen_config(cfg)?;
    let store = read_store(&store_path)?;
    let groups = read_groups(&groups_path)?;
    let vocab = Vocab::build(&store);
    let (examples, report) = example_gen::generate(&store, &vocab, &groups, &gen, seed, epoch)?;
    let mut header = Header::new("examples", cfg.header_config(), inputs(&[("groups", &groups_path), ("store", &store_path)])?);
    header.extra.insert("vocab".into(), serde_json::to_value(&vocab)?);
    header.extra.insert("report".into(), serde_json::to_value(&report)?);
    artifact::write_jsonl(&out, &header, &examples)?;
    eprintln!("generated {} examples, skipped {} groups", report.generated, report.skipped);
    Ok(())
}

/// Examples and the vocabulary recorded in their header.
pub fn read_examples(path: &Path) -> Result<(Vec<PretrainExample>, Option<Vocab>)> {
    let (header, examples) = artifact::read_jsonl::<PretrainExample>(path)?;
    let vocab = match header.as_ref().and_then(|h| h.extra.get("vocab")) {
        Some(v) => Some(serde_json::from_value(v.clone())?),
        None => None,
    };
    if let Some(h) = header.filter(|h| h.kind != "examples") {
        return Err(Error::SchemaViolation(format!("{} is a {:?} artifact, not examples", path.display(), h.kind)));
    }
    Ok((examples, vocab))
}

fn train_config(cfg: &RunConfig, vocab_size: usize) -> Result<TrainConfig> {
    let mut t = TrainConfig::toy(vocab_size);
    t.model = neural::ModelConfig {
        init_std: cfg.get("init_std", t.model.init_std)?,
        ..neural::ModelConfig::new(
            vocab_size,
            cfg.get("d", t.model.d)?,
            cfg.get("layers", t.model.layers)?,
            cfg.get("heads", t.model.heads)?,
        )
    };
    t.lr = cfg.get("lr", t.lr)?;
    t.weight_decay = cfg.get("weight_decay", t.weight_decay)?;
    t.steps = cfg.get("steps", t.steps)?;
    t.batch_size = cfg.get("batch_size", t.batch_size)?;
    t.seed = cfg.get("seed", t.seed)?;
    t.eval_every = cfg.get("eval_every", t.eval_every)?;
    t.max_span_len = cfg.get("max_span_len", t.max_span_len)?;
    t.stop_at_em = match cfg.values.get("stop_at_em").map(String::as_str) {
        None => t.stop_at_em,
        Some("none") => None,
        Some(_) => Some(cfg.get("stop_at_em", 0.0)?),
    };
    Ok(t)
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let ex_path = cfg.path("examples")?;
    let out = cfg.path("out")?;
    let trace_path = match cfg.values.get("trace") {
        Some(t) => PathBuf::from(t),
        None => PathBuf::from(format!("{}.trace.jsonl", out.display())),
    };
    let (mut examples, vocab) = read_examples(&ex_path)?;
    let vocab = vocab.ok_or_else(|| Error::SchemaViolation(format!("{} records no vocabulary", ex_path.display())))?;
    if let Some(limit) = cfg.values.get("limit") {
        let limit: usize = limit.parse().map_err(|_| Error::Config(format!("invalid value {limit:?} for \"limit\"")))?;
        examples.truncate(limit);
    }
    let tc = train_config(cfg, vocab.len())?;
    let result = neural::train_toy(&examples, &tc)?;
    let mut header = Header::new("params", cfg.header_config(), inputs(&[("examples", &ex_path)])?);
    header.extra.insert("final_slot_em".into(), serde_json::to_value(result.final_slot_em)?);
    header.extra.insert("steps_run".into(), serde_json::to_value(result.steps_run)?);
    neural::save_params(&out, &result.params, Some(&vocab), Some(&header))?;
    let mut trace_header = Header::new("trace", cfg.header_config(), inputs(&[("examples", &ex_path)])?);
    trace_header.extra = header.extra.clone();
    artifact::write_jsonl(&trace_path, &trace_header, &result.trace)?;
    eprintln!("trained {} steps, slot-EM {:.4}", result.steps_run, result.final_slot_em);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub metrics: qa::MetricReport,
    pub predictions: Vec<qa::Prediction>,
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let params_path = cfg.path("params")?;
    let data_path = cfg.path("dataset")?;
    let out = cfg.path("out")?;
    let mode: EvalMode = cfg.get("mode", EvalMode::Single)?;
    let d = EvalConfig::default();
    let ec = EvalConfig {
        total_max: cfg.get("total_max", d.total_max)?,
        query_max: cfg.get("query_max", d.query_max)?,
        stride: cfg.get("stride", d.stride)?,
        hotpot_window: cfg.get("hotpot_window", d.hotpot_window)?,
        top_k: cfg.get("top_k", d.top_k)?,
        max_span_len: cfg.get("max_span_len", d.max_span_len)?,
        cell_max: cfg.get("cell_max", d.cell_max)?,
    };
    let loaded = neural::load_params(&params_path)?;
    let vocab = loaded
        .vocab
        .ok_or_else(|| Error::SchemaViolation(format!("{} records no vocabulary", params_path.display())))?;
    let dataset = qa::read_dataset(&data_path)?;
    let model = RefModel {
        params: &loaded.params,
        vocab: &vocab,
        cell_max: ec.cell_max,
    };
    let (metrics, predictions) = qa::evaluate(&model, &dataset, mode, &vocab, &ec, &LexicalOverlap)?;
    let header = Header::new("eval-report", cfg.header_config(), inputs(&[("params", &params_path), ("dataset", &data_path)])?);
    artifact::write_document(&out, &header, &EvalReport { mode, metrics, predictions })?;
    eprintln!("EM {:.4}  F1 {:.4}  n {}", metrics.em, metrics.f1, metrics.n);
    Ok(())
}

/// Counts mirroring the pre-training data statistics table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub kind: String,
    pub n_queries: usize,
    pub n_sentences: usize,
    pub n_tables: usize,
    pub n_entity_pairs: usize,
    pub n_examples: usize,
    pub n_slots: usize,
    pub n_unanswerable_slots: usize,
    pub categories: BTreeMap<String, usize>,
}

fn count_evidence<'a>(report: &mut StatsReport, locs: impl Iterator<Item = &'a EvidenceLoc>) {
    let mut text = BTreeSet::new();
    let mut tables = BTreeSet::new();
    for loc in locs {
        match loc {
            EvidenceLoc::Text { sentence } => {
                text.insert(sentence.clone());
            }
            EvidenceLoc::Table { table, .. } => {
                tables.insert(table.clone());
            }
        }
    }
    report.n_sentences = text.len();
    report.n_tables = tables.len();
}

/// Distinct queries, evidence sentences, evidence tables and entity pairs
/// over query groups.
pub fn group_stats(groups: &[QueryGroup]) -> StatsReport {
    let mut r = StatsReport {
        kind: "groups".into(),
        n_queries: groups.len(),
        ..Default::default()
    };
    count_evidence(&mut r, groups.iter().flat_map(|g| g.pairs.iter().flat_map(|p| p.candidates.iter().map(|c| &c.loc))));
    r.n_entity_pairs = groups.iter().flat_map(|g| g.pairs.iter().map(|p| &p.pair)).collect::<BTreeSet<_>>().len();
    r
}

/// The same counts over the evidence actually used by examples, plus the
/// category and unanswerable-slot distribution.
pub fn example_stats(examples: &[PretrainExample]) -> StatsReport {
    let mut r = StatsReport {
        kind: "examples".into(),
        n_queries: examples.iter().map(|e| &e.provenance.query).collect::<BTreeSet<_>>().len(),
        n_examples: examples.len(),
        ..Default::default()
    };
    count_evidence(&mut r, examples.iter().flat_map(|e| e.provenance.evidence.iter().map(|c| &c.loc)));
    r.n_entity_pairs = examples.iter().flat_map(|e| e.provenance.evidence.iter().map(|c| &c.pair)).collect::<BTreeSet<_>>().len();
    for c in ReasoningCategory::ALL {
        r.categories.insert(c.to_string(), 0);
    }
    for e in examples {
        *r.categories.entry(e.category.to_string()).or_default() += 1;
        r.n_slots += e.slots.len();
        r.n_unanswerable_slots += e.slots.iter().filter(|s| s.target == SlotTarget::Cls).count();
    }
    r
}

pub fn render_stats(r: &StatsReport) -> String {
    let mut rows: Vec<(String, usize)> = vec![
        ("# queries".into(), r.n_queries),
        ("# sentences".into(), r.n_sentences),
        ("# tables".into(), r.n_tables),
        ("# entity pairs".into(), r.n_entity_pairs),
    ];
    if r.kind == "examples" {
        rows.push(("# examples".into(), r.n_examples));
        rows.push(("# slots".into(), r.n_slots));
        rows.push(("# unanswerable slots".into(), r.n_unanswerable_slots));
        rows.extend(r.categories.iter().map(|(k, v)| (format!("category {k}"), *v)));
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v:>8}");
    }
    out
}

/// Stats over a groups or examples file, chosen by its header kind.
pub fn stats_file(path: &Path) -> Result<StatsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(StatsReport {
            kind: "empty".into(),
            ..Default::default()
        });
    }
    let (header, _) = artifact::parse_jsonl::<serde_json::Value, _>(text.as_bytes(), path)?;
    match header.as_ref().map(|h| h.kind.as_str()) {
        Some("groups") => Ok(group_stats(&read_groups(path)?)),
        Some("examples") => Ok(example_stats(&read_examples(path)?.0)),
        other => Err(Error::SchemaViolation(format!(
            "{}: expected a groups or examples artifact, found {other:?}",
            path.display()
        ))),
    }
}

fn cmd_stats(cfg: &RunConfig) -> Result<()> {
    let input = cfg.path("input")?;
    let out = cfg.path("out")?;
    let report = stats_file(&input)?;
    let header = Header::new("stats", cfg.header_config(), inputs(&[("input", &input)])?);
    artifact::write_document(&out, &header, &report)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(render_stats(&report).as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

pub const AUDIT_VERDICTS: [&str; 3] = ["All the same", "One different", "All different"];

/// Seeded choice of `n` group indices, in file order.
pub fn audit_sample(n_groups: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > n_groups {
        return Err(Error::TooFewGroups { n, available: n_groups });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n_groups, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

fn cell_md(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn highlight(text: &str, spans: &[(usize, usize)]) -> String {
    let mut spans = spans.to_vec();
    spans.sort_unstable();
    let mut out = String::new();
    let mut at = 0;
    for (s, e) in spans {
        if s < at || e > text.len() || !text.is_char_boundary(s) || !text.is_char_boundary(e) {
            continue;
        }
        out.push_str(&text[at..s]);
        let _ = write!(out, "**{}**", &text[s..e]);
        at = e;
    }
    out.push_str(&text[at..]);
    out
}

fn render_evidence(store: &CorpusStore, c: &pair_index::EvidenceRef) -> String {
    let ents = [&c.pair.lo, &c.pair.hi];
    match &c.loc {
        EvidenceLoc::Text { sentence } => match store.sentence(sentence) {
            Some(s) => {
                let spans: Vec<(usize, usize)> = s.mentions.iter().filter(|m| ents.contains(&&m.entity)).map(|m| (m.start, m.end)).collect();
                highlight(&s.text, &spans)
            }
            None => format!("<missing {sentence}>"),
        },
        EvidenceLoc::Table { table, row } => match store.table(table) {
            Some(t) => {
                let mut parts = Vec::new();
                for (ci, cell) in t.rows.get(*row).map(Vec::as_slice).unwrap_or_default().iter().enumerate() {
                    let header = t.rows.first().and_then(|h| h.get(ci)).map_or("", |h| h.text.as_str());
                    let spans: Vec<(usize, usize)> = cell.mentions.iter().filter(|m| ents.contains(&&m.entity)).map(|m| (m.start, m.end)).collect();
                    parts.push(format!("{header}: {}", highlight(&cell.text, &spans)));
                }
                format!("[{} table {} row {}] {}", table.page, table.table, row, parts.join("; "))
            }
            None => format!("<missing table {} of {}>", table.table, table.page),
        },
    }
}

/// Markdown sheet of `n` seeded groups: query and evidence side by side with
/// the paired entities in bold, and empty verdict columns.
pub fn audit_sheet(store: &CorpusStore, groups: &[QueryGroup], n: usize, seed: u64) -> Result<String> {
    let picked = audit_sample(groups.len(), n, seed)?;
    let mut out = String::new();
    let _ = writeln!(out, "| # | Query | Evidence | Entity pair | {} |", AUDIT_VERDICTS.join(" | "));
    let _ = writeln!(out, "|---|---|---|---|{}", "---|".repeat(AUDIT_VERDICTS.len()));
    for (row, &gi) in picked.iter().enumerate() {
        let g = &groups[gi];
        let Some(p) = g.pairs.iter().find(|p| !p.candidates.is_empty()) else {
            continue;
        };
        let c = &p.candidates[0];
        let query = match store.sentence(&g.query) {
            Some(s) => {
                let spans: Vec<(usize, usize)> = p.lo_spans.iter().chain(&p.hi_spans).copied().collect();
                highlight(&s.text, &spans)
            }
            None => format!("<missing {}>", g.query),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |{}",
            row + 1,
            cell_md(&query),
            cell_md(&render_evidence(store, c)),
            cell_md(&p.pair.to_string()),
            "  |".repeat(AUDIT_VERDICTS.len())
        );
    }
    Ok(out)
}

fn cmd_audit(cfg: &RunConfig) -> Result<()> {
    let groups_path = cfg.path("groups")?;
    let store_path = cfg.path("store")?;
    let out = cfg.path("out")?;
    let n: usize = cfg.get("n", 50)?;
    let seed: u64 = cfg.get("seed", 0)?;
    let store = read_store(&store_path)?;
    let groups = read_groups(&groups_path)?;
    let sheet = audit_sheet(&store, &groups, n, seed)?;
    let header = Header::new("audit", cfg.header_config(), inputs(&[("groups", &groups_path), ("store", &store_path)])?);
    let mut w = artifact::create(&out)?;
    let provenance = serde_json::to_string(&header)?;
    write!(w, "<!-- {provenance} -->\n\n{sheet}").map_err(|e| Error::io(&out, e))?;
    w.flush().map_err(|e| Error::io(&out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let m = parse_config("# c\nseed = 3\n\nprofile=hybrid\n", GEN_KEYS).unwrap();
        assert_eq!(m["seed"], "3");
        assert_eq!(m["profile"], "hybrid");
        assert!(matches!(parse_config("bogus = 1", GEN_KEYS), Err(Error::Config(_))));
        assert!(matches!(parse_config("seed 3", GEN_KEYS), Err(Error::Config(_))));
    }

    #[test]
    fn header_config_drops_paths() {
        let cfg = RunConfig::layered(None, GEN_KEYS, vec![("out", Some("x".into())), ("seed", Some("1".into()))]).unwrap();
        assert_eq!(cfg.header_config().into_iter().collect::<Vec<_>>(), vec![("seed".to_string(), "1".to_string())]);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["spanreason", "frobnicate"]), 2);
        assert_eq!(run(["spanreason", "gen", "--bogus"]), 2);
        assert_eq!(run(["spanreason", "--help"]), 0);
    }

    #[test]
    fn highlight_marks_spans() {
        assert_eq!(highlight("a bc d", &[(2, 4)]), "a **bc** d");
        assert_eq!(highlight("abc", &[]), "abc");
    }

    #[test]
    fn audit_sample_bounds() {
        assert!(audit_sample(3, 0, 1).unwrap().is_empty());
        assert!(matches!(audit_sample(3, 4, 1), Err(Error::TooFewGroups { n: 4, available: 3 })));
        assert_eq!(audit_sample(10, 10, 5).unwrap(), (0..10).collect::<Vec<_>>());
    }
}
