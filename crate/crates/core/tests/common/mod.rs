//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use spanreason::corpus::{EntityId, EntityClass, MentionSource, PairKey, SentenceLoc};
use spanreason::example_gen::{self, GenConfig, PretrainExample, Vocab};
use spanreason::ingest::{self, CorpusStore, PageRecord};
use spanreason::neural::objective::{backward, loss, TrainTarget};
use spanreason::neural::{EncoderInput, ModelParams};
use spanreason::pair_index::{self, EvidenceLoc, Profile, QueryGroup};
use spanreason::qa::{self, QaExample, QaInput, SpanModel, WindowScorer};
use spanreason::synth;

pub fn mini_corpus_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini_corpus.jsonl")
}

pub fn mini_store() -> CorpusStore {
    ingest::ingest(synth::mini_corpus_jsonl().as_bytes()).expect("mini corpus ingests")
}

pub fn store_of(pages: &[PageRecord]) -> CorpusStore {
    ingest::ingest(synth::to_jsonl(pages).as_bytes()).expect("corpus ingests")
}

pub fn groups_of(store: &CorpusStore, profile: Profile) -> Vec<QueryGroup> {
    let index = pair_index::build_index(store);
    pair_index::build_query_groups(store, &index, profile)
}

pub fn examples_of(store: &CorpusStore, cfg: &GenConfig, seed: u64) -> (Vocab, Vec<PretrainExample>) {
    let vocab = Vocab::build(store);
    let groups = groups_of(store, cfg.profile);
    let (ex, _) = example_gen::generate(store, &vocab, &groups, cfg, seed, 0).expect("generation runs");
    (vocab, ex)
}

/// One pair of a brute-force group: the pair, whether the query page's
/// topic is a member, and the admissible evidence locators.
pub type OraclePair = (PairKey, bool, BTreeSet<EvidenceLoc>);

/// Quadratic scan over every (query sentence, unit) combination applying the
/// pairing predicates directly.
pub fn brute_force_groups(store: &CorpusStore, profile: Profile) -> Vec<(SentenceLoc, Vec<OraclePair>)> {
    let mut out = Vec::new();
    for page in store.pages.values() {
        for q in page.paragraphs.iter().flatten() {
            let ents: BTreeSet<&EntityId> = q.mentions.iter().map(|m| &m.entity).collect();
            let links: BTreeSet<&str> = q
                .mentions
                .iter()
                .filter(|m| m.source == MentionSource::Hyperlink)
                .filter_map(|m| m.entity.page_id())
                .collect();
            let related = |p: &str| p == page.id || links.contains(p);
            let mut pairs = Vec::new();
            let ents: Vec<&EntityId> = ents.into_iter().collect();
            for i in 0..ents.len() {
                for j in i + 1..ents.len() {
                    let (a, b) = (ents[i], ents[j]);
                    if a.class() != EntityClass::RealWorld && b.class() != EntityClass::RealWorld {
                        continue;
                    }
                    let topic = *a == page.topic_entity || *b == page.topic_entity;
                    let mut locs = BTreeSet::new();
                    for other in store.pages.values() {
                        if topic {
                            for s in other.paragraphs.iter().flatten() {
                                let has = |e: &EntityId| s.mentions.iter().any(|m| &m.entity == e);
                                if s.locator != q.locator && s.text != q.text && related(&other.id) && has(a) && has(b) {
                                    locs.insert(EvidenceLoc::Text { sentence: s.locator.clone() });
                                }
                            }
                        }
                        if profile == Profile::Hybrid {
                            for t in &other.tables {
                                let back = t
                                    .rows
                                    .iter()
                                    .flatten()
                                    .flat_map(|c| &c.mentions)
                                    .any(|m| m.source == MentionSource::Hyperlink && m.entity.page_id() == Some(page.id.as_str()));
                                if !(related(&other.id) || back) {
                                    continue;
                                }
                                for (r, row) in t.rows.iter().enumerate().skip(1) {
                                    let has = |e: &EntityId| row.iter().flat_map(|c| &c.mentions).any(|m| &m.entity == e);
                                    if has(a) && has(b) {
                                        locs.insert(EvidenceLoc::Table { table: t.locator.clone(), row: r });
                                    }
                                }
                            }
                        }
                    }
                    if !locs.is_empty() {
                        let key = spanreason::corpus::make_pair_key(a.clone(), b.clone()).unwrap();
                        pairs.push((key, topic, locs));
                    }
                }
            }
            let has_table = pairs.iter().any(|p| p.2.iter().any(|l| l.is_table()));
            if !pairs.is_empty() && (profile == Profile::Text || has_table) {
                out.push((q.locator.clone(), pairs));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// The index-built groups in the oracle's shape.
pub fn groups_as_oracle(groups: &[QueryGroup]) -> Vec<(SentenceLoc, Vec<OraclePair>)> {
    groups
        .iter()
        .map(|g| {
            let pairs = g
                .pairs
                .iter()
                .map(|p| (p.pair.clone(), p.text_eligible, p.candidates.iter().map(|c| c.loc.clone()).collect()))
                .collect();
            (g.query.clone(), pairs)
        })
        .collect()
}

/// Per-group gradient error `|a - n| / (|a| + |n|)` over the flattened
/// group, with `n` from central differences. Groups whose analytic and
/// numeric gradients both have norm below `zero_tol` count as agreeing.
pub fn grad_check(p: &ModelParams, input: &EncoderInput, target: &TrainTarget, h: f64, zero_tol: f64) -> Vec<(String, f64)> {
    let (_, analytic) = backward(p, input, target).expect("backward runs");
    let names: Vec<String> = p.groups().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::new();
    for (gi, name) in names.iter().enumerate() {
        let a = analytic.groups()[gi].1.data.clone();
        let mut num = vec![0.0; a.len()];
        let mut q = p.clone();
        for (i, slot) in num.iter_mut().enumerate() {
            let orig = q.groups()[gi].1.data[i];
            q.groups_mut()[gi].1.data[i] = orig + h;
            let up = loss(&q, input, target).unwrap().total;
            q.groups_mut()[gi].1.data[i] = orig - h;
            let down = loss(&q, input, target).unwrap().total;
            q.groups_mut()[gi].1.data[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&num).map(|(x, y)| x - y).collect();
        let (na, nn) = (norm(&a), norm(&num));
        let err = if na < zero_tol && nn < zero_tol { 0.0 } else { norm(&diff) / (na + nn) };
        out.push((name.clone(), err));
    }
    out
}

/// Every span over contiguous domain positions, scored and sorted.
pub fn brute_force_spans(fs: &[f64], fe: &[f64], positions: &[usize], max_len: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for s in 1..positions.len() {
        for e in s..positions.len() {
            let contiguous = (s..e).all(|k| positions[k + 1] == positions[k] + 1);
            if contiguous && e - s < max_len {
                out.push((positions[s], positions[e], fs[s] + fe[e] - fs[0] - fe[0]));
            }
        }
    }
    out.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    out
}

/// Cell-head pooling recomputed from per-cell component scores.
pub struct CellOracle {
    pub p_token: Vec<f64>,
    pub p_row: BTreeMap<usize, f64>,
    pub p_col: BTreeMap<usize, f64>,
    pub combined: Vec<f64>,
}

fn softmax_map(m: &BTreeMap<usize, f64>) -> BTreeMap<usize, f64> {
    let z: f64 = m.values().map(|v| v.exp()).sum();
    m.iter().map(|(k, v)| (*k, v.exp() / z)).collect()
}

pub fn cell_oracle(cells: &[(usize, usize)], token: &[f64], row_mean: &[f64], col_mean: &[f64]) -> CellOracle {
    let mut rmax: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cmax: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, &(r, c)) in cells.iter().enumerate() {
        let e = rmax.entry(r).or_insert(f64::NEG_INFINITY);
        *e = e.max(row_mean[i]);
        let e = cmax.entry(c).or_insert(f64::NEG_INFINITY);
        *e = e.max(col_mean[i]);
    }
    let z: f64 = token.iter().map(|v| v.exp()).sum();
    CellOracle {
        p_token: token.iter().map(|v| v.exp() / z).collect(),
        p_row: softmax_map(&rmax),
        p_col: softmax_map(&cmax),
        combined: cells.iter().enumerate().map(|(i, (r, c))| token[i] + rmax[r] + cmax[c]).collect(),
    }
}

/// Puts a very large start and end logit on the first gold-matching span of
/// every input and zero elsewhere.
pub struct OracleModel {
    pub max_span_len: usize,
}

impl SpanModel for OracleModel {
    fn logits(&self, ex: &QaExample, input: &QaInput) -> spanreason::Result<(Vec<f64>, Vec<f64>)> {
        let n = input.domain.len();
        let mut fs = vec![0.0; n];
        let mut fe = vec![0.0; n];
        let golds: Vec<String> = ex.answers.iter().map(|a| qa::normalize_answer(a)).collect();
        'outer: for s in 1..n {
            for e in s..n.min(s + self.max_span_len) {
                let toks: Vec<&qa::EvToken> = input.domain[s..=e].iter().filter_map(|&i| input.evidence[i].as_ref()).collect();
                if toks.len() != e - s + 1 {
                    break;
                }
                if golds.contains(&qa::normalize_answer(&qa::answer_text(ex, &toks))) {
                    fs[s] = 1e9;
                    fe[e] = 1e9;
                    break 'outer;
                }
            }
        }
        Ok((fs, fe))
    }
}

/// Scores a window by how many of the question's gold answers it contains.
pub struct GoldOverlap {
    pub answers: BTreeMap<String, Vec<String>>,
}

impl GoldOverlap {
    pub fn new(dataset: &[QaExample]) -> Self {
        GoldOverlap {
            answers: dataset.iter().map(|e| (e.question.clone(), e.answers.clone())).collect(),
        }
    }
}

impl WindowScorer for GoldOverlap {
    fn score(&self, question: &str, window_text: &str) -> f64 {
        let w = format!(" {} ", qa::normalize_answer(window_text));
        self.answers
            .get(question)
            .map_or(0, |golds| golds.iter().filter(|g| w.contains(&format!(" {} ", qa::normalize_answer(g)))).count()) as f64
    }
}

fn filler(seed: usize, words: usize) -> String {
    const POOL: [&str; 12] = [
        "river", "stone", "market", "winter", "harbor", "signal", "garden", "copper", "lantern", "meadow", "archive", "orbit",
    ];
    (0..words).map(|i| POOL[(seed * 7 + i * 5) % POOL.len()]).collect::<Vec<_>>().join(" ")
}

/// Ten bridge questions whose answer sits in a second article reached
/// through an entity named in the first; each article is long enough to
/// need several windows.
pub fn hotpot_fixture() -> Vec<QaExample> {
    let rows = [
        ("Glass Orchard", "Lisbon", "Tagus Hall"),
        ("Ashen Tide", "Hartford", "Elm Arena"),
        ("Paper Satellites", "Osaka", "Kansai Dome"),
        ("Iron Meridian", "Leeds", "Aire Pavilion"),
        ("Velvet Static", "Porto", "Douro Stage"),
        ("North Lantern", "Oslo", "Fjord House"),
        ("Copper Veil", "Lyon", "Rhone Theatre"),
        ("Silent Harbor", "Cork", "Lee Ballroom"),
        ("Amber Circuit", "Graz", "Mur Forum"),
        ("Hollow Crown", "Quebec", "Laurentian Club"),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, (band, city, venue))| {
            let a = format!("{} {band} is a rock band formed in {city} in the early nineties. {}", filler(i, 180), filler(i + 3, 150));
            let b = format!("{} The largest concert venue in {city} is {venue}, opened decades ago. {}", filler(i + 1, 230), filler(i + 5, 90));
            let c = format!("{} Unrelated notes about gardens and copper. {}", filler(i + 2, 120), filler(i + 4, 60));
            QaExample {
                id: format!("hp{i}"),
                question: format!("What is the largest concert venue in the city where {band} formed?"),
                documents: vec![
                    qa::Document { article_id: format!("band{i}"), text: a },
                    qa::Document { article_id: format!("city{i}"), text: b },
                    qa::Document { article_id: format!("misc{i}"), text: c },
                ],
                tables: vec![],
                answers: vec![venue.to_string()],
            }
        })
        .collect()
}

/// Runs the CLI and panics with the arguments on a nonzero exit.
pub fn cli(args: &[&str]) {
    let mut argv = vec!["spanreason"];
    argv.extend_from_slice(args);
    let code = spanreason::cli::run(argv.clone());
    assert_eq!(code, 0, "command failed: {argv:?}");
}

/// ingest, pair and gen on the bundled corpus into `dir`; returns the
/// examples path.
pub fn run_pipeline(dir: &Path, threads: usize, profile: &str, gen_flags: &[&str]) -> PathBuf {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let t = threads.to_string();
    let corpus = mini_corpus_path().to_string_lossy().into_owned();
    cli(&["--threads", &t, "ingest", "--corpus", &corpus, "--out", &p("store.json")]);
    cli(&["--threads", &t, "pair", "--store", &p("store.json"), "--profile", profile, "--out", &p("groups.jsonl")]);
    let mut gen = vec![
        "--threads",
        &t,
        "gen",
        "--groups",
        &p("groups.jsonl"),
        "--store",
        &p("store.json"),
        "--seed",
        "0",
        "--profile",
        profile,
        "--out",
        &p("examples.jsonl"),
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    gen.extend(gen_flags.iter().map(|s| s.to_string()));
    let gen_refs: Vec<&str> = gen.iter().map(String::as_str).collect();
    cli(&gen_refs);
    dir.join("examples.jsonl")
}
