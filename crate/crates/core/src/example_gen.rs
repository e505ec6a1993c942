//! Pre-training example generation.
//!
//! A query group becomes one example: up to two entity pairs are sampled
//! with one piece of evidence each, masked entities are chosen according to
//! the reasoning category, their query mentions are replaced by
//! `[QUESTION]`, and the sequence `[CLS] query [SEP] evidence ([SEP] evidence)`
//! is assembled within the token budgets. An entity of the query that does
//! not occur in the evidence may be masked as an unanswerable slot whose
//! gold target is the `[CLS]` position.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{EntityId, PairKey, SentenceLoc};
use crate::error::{Error, Result};
use crate::ingest::CorpusStore;
use crate::pair_index::{EvidenceLoc, EvidenceRef, Profile, QueryGroup};

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
pub const QUESTION: u32 = 3;
pub const MASK: u32 = 4;
pub const UNK: u32 = 5;
pub const RESERVED: [&str; 6] = ["[PAD]", "[CLS]", "[SEP]", "[QUESTION]", "[MASK]", "[UNK]"];

pub fn is_special(id: u32) -> bool {
    (id as usize) < RESERVED.len()
}

/// Token string to id bijection. Ids 0-5 are the reserved tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from the non-reserved tokens, in the given order.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = all.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        for t in tokens {
            if !index.contains_key(&t) {
                index.insert(t.clone(), all.len() as u32);
                all.push(t);
            }
        }
        Vocab { tokens: all, index }
    }

    /// Every token of every sentence and cell, sorted.
    pub fn build(store: &CorpusStore) -> Self {
        let mut set = BTreeSet::new();
        for page in store.pages.values() {
            for s in page.sentences() {
                set.extend(tokenize(&s.text).into_iter().map(|t| t.text));
            }
            for cell in page.tables.iter().flat_map(|t| t.rows.iter().flatten()) {
                set.extend(tokenize(&cell.text).into_iter().map(|t| t.text));
            }
        }
        Self::from_tokens(set)
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or("[UNK]", String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(&t.text)).collect()
    }
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(serde::de::Error::custom("vocabulary must start with the reserved tokens"));
        }
        let vocab = Vocab::from_tokens(tokens[RESERVED.len()..].iter().cloned());
        if vocab.len() != tokens.len() {
            return Err(serde::de::Error::custom("vocabulary has duplicate tokens"));
        }
        Ok(vocab)
    }
}

/// A lowercased token with its byte range in the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Lowercases, splits on whitespace, and emits each punctuation mark as its
/// own token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    let flush = |out: &mut Vec<Token>, start: Option<usize>, end: usize| {
        if let Some(s) = start {
            out.push(Token {
                text: text[s..end].to_lowercase(),
                start: s,
                end,
            });
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            flush(&mut out, word_start.take(), i);
        } else if !c.is_alphanumeric() && c != '_' {
            flush(&mut out, word_start.take(), i);
            out.push(Token {
                text: c.to_lowercase().collect(),
                start: i,
                end: i + c.len_utf8(),
            });
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    flush(&mut out, word_start, text.len());
    out
}

/// Token index range `[first, last)` covering bytes `[start, end)`.
pub fn token_span(tokens: &[Token], start: usize, end: usize) -> Option<(usize, usize)> {
    let first = tokens.iter().position(|t| t.end > start && t.start < end)?;
    let last = tokens.iter().rposition(|t| t.end > start && t.start < end)?;
    Some((first, last + 1))
}

pub fn detokenize(ids: &[u32], vocab: &Vocab) -> String {
    ids.iter().map(|&i| vocab.token(i)).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub query_max: usize,
    pub evidence_max_two: usize,
    pub evidence_max_one: usize,
    pub cell_max: usize,
    pub snippet_columns_max: usize,
    pub total_max: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            query_max: 100,
            evidence_max_two: 200,
            evidence_max_one: 400,
            cell_max: 20,
            snippet_columns_max: 5,
            total_max: 512,
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.query_max,
            self.evidence_max_two,
            self.evidence_max_one,
            self.cell_max,
            self.snippet_columns_max,
            self.total_max,
        ];
        if all.contains(&0) {
            return Err(Error::Config("all budgets must be positive".into()));
        }
        // [CLS] q [SEP] e1 [SEP] e2, or [CLS] q [SEP] e
        let two = self.query_max + 2 * self.evidence_max_two + 3;
        let one = self.query_max + self.evidence_max_one + 2;
        if two.max(one) > self.total_max {
            return Err(Error::Config(format!(
                "total_max {} cannot hold query and evidence budgets ({})",
                self.total_max,
                two.max(one)
            )));
        }
        Ok(())
    }
}

/// An entity occurrence inside an evidence piece, in piece-local token indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpan {
    pub entity: EntityId,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

/// One tokenized piece of evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceSeq {
    pub source: EvidenceRef,
    pub tokens: Vec<String>,
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub header: Vec<bool>,
    pub entities: Vec<EntitySpan>,
}

impl EvidenceSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains_entity(&self, e: &EntityId) -> bool {
        self.entities.iter().any(|s| &s.entity == e)
    }
}

/// The matched sentence plus neighbours from its paragraph (next, previous,
/// next+1, previous-1, ...) until the next one would exceed `budget`. A
/// matched sentence longer than the budget is clipped. Expansion never
/// reaches past `query` when it sits in the same paragraph.
pub fn build_text_evidence(
    store: &CorpusStore,
    r: &EvidenceRef,
    budget: usize,
    query: Option<&SentenceLoc>,
) -> Result<EvidenceSeq> {
    let EvidenceLoc::Text { sentence } = &r.loc else {
        return Err(Error::UnknownEvidence(format!("{} is not text evidence", r.loc)));
    };
    let page = store.page(&sentence.page).ok_or_else(|| Error::UnknownEvidence(r.loc.to_string()))?;
    let para = page
        .paragraphs
        .get(sentence.paragraph)
        .filter(|p| sentence.sentence < p.len())
        .ok_or_else(|| Error::UnknownEvidence(r.loc.to_string()))?;
    let toks: Vec<Vec<Token>> = para.iter().map(|s| tokenize(&s.text)).collect();

    let centre = sentence.sentence;
    let (mut lo, mut hi) = (0, para.len());
    if let Some(q) = query.filter(|q| q.page == sentence.page && q.paragraph == sentence.paragraph) {
        if q.sentence > centre {
            hi = q.sentence;
        } else if q.sentence < centre {
            lo = q.sentence + 1;
        }
    }
    let mut chosen = vec![centre];
    let mut used = toks[centre].len();
    let mut order = Vec::new();
    for k in 1..para.len() {
        if centre + k < hi {
            order.push(centre + k);
        }
        if k <= centre && centre - k >= lo {
            order.push(centre - k);
        }
    }
    for idx in order {
        if used + toks[idx].len() > budget {
            break;
        }
        used += toks[idx].len();
        chosen.push(idx);
    }
    chosen.sort_unstable();

    let mut seq = EvidenceSeq {
        source: r.clone(),
        tokens: Vec::new(),
        rows: Vec::new(),
        cols: Vec::new(),
        header: Vec::new(),
        entities: Vec::new(),
    };
    for idx in chosen {
        let offset = seq.tokens.len();
        let s = &para[idx];
        for m in &s.mentions {
            if let Some((a, b)) = token_span(&toks[idx], m.start, m.end) {
                if offset + b <= budget {
                    seq.entities.push(EntitySpan {
                        entity: m.entity.clone(),
                        start: offset + a,
                        end: offset + b,
                        surface: m.surface(&s.text).to_string(),
                    });
                }
            }
        }
        seq.tokens.extend(toks[idx].iter().map(|t| t.text.clone()));
    }
    seq.tokens.truncate(budget);
    let n = seq.tokens.len();
    seq.rows = vec![0; n];
    seq.cols = vec![0; n];
    seq.header = vec![false; n];
    Ok(seq)
}

/// A table snippet around the evidence row. Column 0 and the pair's columns
/// are always kept, plus random extra columns up to `snippet_columns_max`
/// non-first columns. Rows: the header, the evidence row, then other rows in
/// table order while the budget allows. Row/col types are snippet-local and
/// start at 1.
pub fn build_table_snippet<R: Rng>(
    store: &CorpusStore,
    r: &EvidenceRef,
    budget: usize,
    cfg: &BudgetConfig,
    rng: &mut R,
) -> Result<EvidenceSeq> {
    let EvidenceLoc::Table { table, row } = &r.loc else {
        return Err(Error::UnknownEvidence(format!("{} is not table evidence", r.loc)));
    };
    let t = store.table(table).ok_or_else(|| Error::UnknownEvidence(r.loc.to_string()))?;
    let ev_row = *row;
    if ev_row >= t.n_rows || t.n_cols == 0 {
        return Err(Error::UnknownEvidence(r.loc.to_string()));
    }
    let cell_toks: Vec<Vec<Vec<Token>>> = t
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| {
                    let mut v = tokenize(&c.text);
                    v.truncate(cfg.cell_max);
                    v
                })
                .collect()
        })
        .collect();
    let row_cost = |ri: usize, cols: &[usize]| cols.iter().map(|&c| cell_toks[ri][c].len()).sum::<usize>();

    let mut required: BTreeSet<usize> = BTreeSet::new();
    required.insert(0);
    for at in [&r.lo_at, &r.hi_at] {
        if let Some(c) = at.cell {
            required.insert(c);
        }
    }
    let mut extras: Vec<usize> = (1..t.n_cols).filter(|c| !required.contains(c)).collect();
    extras.shuffle(rng);
    let room = cfg.snippet_columns_max.saturating_sub(required.len() - 1);
    extras.truncate(room);

    let base_rows = if ev_row == 0 { vec![0] } else { vec![0, ev_row] };
    let cols = loop {
        let mut cols: Vec<usize> = required.iter().copied().chain(extras.iter().copied()).collect();
        cols.sort_unstable();
        let needed: usize = base_rows.iter().map(|&ri| row_cost(ri, &cols)).sum();
        if needed <= budget {
            break cols;
        }
        if extras.pop().is_none() {
            return Err(Error::SnippetInfeasible { needed, budget });
        }
    };

    let mut used: usize = base_rows.iter().map(|&ri| row_cost(ri, &cols)).sum();
    let mut rows = base_rows.clone();
    for ri in 1..t.n_rows {
        if ri == ev_row {
            continue;
        }
        let c = row_cost(ri, &cols);
        if used + c > budget {
            break;
        }
        used += c;
        rows.push(ri);
    }
    rows.sort_unstable();

    let mut seq = EvidenceSeq {
        source: r.clone(),
        tokens: Vec::new(),
        rows: Vec::new(),
        cols: Vec::new(),
        header: Vec::new(),
        entities: Vec::new(),
    };
    for (lr, &ri) in rows.iter().enumerate() {
        for (lc, &ci) in cols.iter().enumerate() {
            let toks = &cell_toks[ri][ci];
            let offset = seq.tokens.len();
            let cell = &t.rows[ri][ci];
            for m in &cell.mentions {
                let full = tokenize(&cell.text);
                if let Some((a, b)) = token_span(&full, m.start, m.end) {
                    if b <= toks.len() {
                        seq.entities.push(EntitySpan {
                            entity: m.entity.clone(),
                            start: offset + a,
                            end: offset + b,
                            surface: m.surface(&cell.text).to_string(),
                        });
                    }
                }
            }
            for tok in toks {
                seq.tokens.push(tok.text.clone());
                seq.rows.push(lr as u32 + 1);
                seq.cols.push(lc as u32 + 1);
                seq.header.push(ri == 0);
            }
        }
    }
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReasoningCategory {
    SinglePair,
    DisjointPairs,
    Intersection,
    Bridging,
}

impl ReasoningCategory {
    pub const ALL: [ReasoningCategory; 4] = [
        ReasoningCategory::SinglePair,
        ReasoningCategory::DisjointPairs,
        ReasoningCategory::Intersection,
        ReasoningCategory::Bridging,
    ];
}

impl fmt::Display for ReasoningCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Names the reasoning category realised by masking `masked` over `pairs`.
pub fn classify_category(pairs: &[PairKey], masked: &[EntityId]) -> Result<ReasoningCategory> {
    let masked_set: BTreeSet<&EntityId> = masked.iter().collect();
    if masked_set.len() != masked.len() {
        return Err(Error::InvalidMaskSet);
    }
    match (pairs, masked) {
        ([p], [e]) if p.contains(e) => Ok(ReasoningCategory::SinglePair),
        ([p, q], _) => match p.shared_with(q) {
            None if p != q => match masked {
                [x, y] if (p.contains(x) && q.contains(y)) || (p.contains(y) && q.contains(x)) => {
                    Ok(ReasoningCategory::DisjointPairs)
                }
                _ => Err(Error::InvalidMaskSet),
            },
            None => Err(Error::InvalidMaskSet),
            Some(b) => match masked {
                [x] if x == b => Ok(ReasoningCategory::Intersection),
                [x, y] => {
                    let other = if x == b {
                        y
                    } else if y == b {
                        x
                    } else {
                        return Err(Error::InvalidMaskSet);
                    };
                    if p.other(b) == Some(other) || q.other(b) == Some(other) {
                        Ok(ReasoningCategory::Bridging)
                    } else {
                        Err(Error::InvalidMaskSet)
                    }
                }
                _ => Err(Error::InvalidMaskSet),
            },
        },
        _ => Err(Error::InvalidMaskSet),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SlotTarget {
    /// Inclusive token positions in the full sequence.
    Span { start: usize, end: usize },
    Cls,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSlot {
    pub question_pos: usize,
    pub target: SlotTarget,
    pub masked_entity: EntityId,
    pub answerable: bool,
}

impl QuestionSlot {
    /// Gold (start, end) positions; `[CLS]` for unanswerable slots.
    pub fn gold(&self) -> (usize, usize) {
        match self.target {
            SlotTarget::Span { start, end } => (start, end),
            SlotTarget::Cls => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTypes {
    pub segment: Vec<u8>,
    pub row: Vec<u32>,
    pub col: Vec<u32>,
    pub position: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmTarget {
    pub pos: usize,
    pub original_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub query: SentenceLoc,
    /// Evidence in sequence order.
    pub evidence: Vec<EvidenceRef>,
    pub seed: u64,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainExample {
    pub token_ids: Vec<u32>,
    pub token_types: TokenTypes,
    /// Half-open sequence ranges of each evidence piece.
    pub evidence_ranges: Vec<(usize, usize)>,
    /// Positions covered by entity mentions (query and evidence).
    pub entity_positions: Vec<usize>,
    /// Positions of table header-row tokens.
    pub header_positions: Vec<usize>,
    pub slots: Vec<QuestionSlot>,
    pub mlm_targets: Vec<MlmTarget>,
    pub category: ReasoningCategory,
    pub provenance: Provenance,
}

impl PretrainExample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Index of the `[SEP]` closing the query region.
    pub fn query_end(&self) -> usize {
        self.evidence_ranges.first().map_or(self.token_ids.len(), |r| r.0.saturating_sub(1))
    }

    /// Span-prediction domain: `[CLS]` followed by every evidence token.
    pub fn span_domain(&self) -> Vec<usize> {
        span_domain(&self.token_ids, &self.token_types.segment)
    }
}

/// `[CLS]` plus all non-special segment-1 positions.
pub fn span_domain(token_ids: &[u32], segments: &[u8]) -> Vec<usize> {
    let mut d = vec![0];
    d.extend(
        (1..token_ids.len()).filter(|&i| segments[i] == 1 && !is_special(token_ids[i])),
    );
    d
}

pub fn serialize_example(ex: &PretrainExample) -> String {
    serde_json::to_string(ex).expect("examples serialize")
}

pub fn deserialize_example(line: &str) -> Result<PretrainExample> {
    serde_json::from_str(line).map_err(|e| Error::SchemaViolation(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub budget: BudgetConfig,
    pub profile: Profile,
    pub mlm: bool,
    pub mlm_rate: f64,
    pub unanswerable: bool,
    pub single_evidence: bool,
    /// Probability of the intersection category when the pairs share an entity.
    pub intersection_prob: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            budget: BudgetConfig::default(),
            profile: Profile::Text,
            mlm: true,
            mlm_rate: 0.15,
            unanswerable: true,
            single_evidence: false,
            intersection_prob: 0.5,
        }
    }
}

/// Per-group generator seeded from (query locator, epoch, seed).
pub fn group_rng(query: &SentenceLoc, epoch: u64, seed: u64) -> ChaCha8Rng {
    let key = format!("{}\u{1f}{}\u{1f}{}\u{1f}{epoch}\u{1f}{seed}", query.page, query.paragraph, query.sentence);
    let digest: [u8; 32] = Sha256::digest(key.as_bytes()).into();
    ChaCha8Rng::from_seed(digest)
}

struct Piece {
    seq: EvidenceSeq,
    pair: usize,
}

fn build_piece<R: Rng>(
    store: &CorpusStore,
    query: &SentenceLoc,
    r: &EvidenceRef,
    budget: usize,
    cfg: &BudgetConfig,
    rng: &mut R,
) -> Result<EvidenceSeq> {
    match r.loc {
        EvidenceLoc::Text { .. } => build_text_evidence(store, r, budget, Some(query)),
        EvidenceLoc::Table { .. } => build_table_snippet(store, r, budget, cfg, rng),
    }
}

fn choose_pairs<R: Rng>(group: &QueryGroup, cfg: &GenConfig, rng: &mut R) -> Vec<usize> {
    let n = group.pairs.len();
    let all: Vec<usize> = (0..n).collect();
    let first = if cfg.profile == Profile::Hybrid {
        let with_table: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&i| group.pairs[i].candidates.iter().any(|c| c.loc.is_table()))
            .collect();
        *with_table.choose(rng).or_else(|| all.choose(rng)).expect("group has pairs")
    } else {
        *all.choose(rng).expect("group has pairs")
    };
    let mut chosen = vec![first];
    if !cfg.single_evidence && n > 1 {
        let rest: Vec<usize> = all.into_iter().filter(|&i| i != first).collect();
        chosen.push(*rest.choose(rng).expect("n > 1"));
    }
    chosen
}

fn choose_evidence<R: Rng>(group: &QueryGroup, pairs: &[usize], cfg: &GenConfig, rng: &mut R) -> Vec<(usize, EvidenceRef)> {
    let mut out: Vec<(usize, EvidenceRef)> = Vec::new();
    for (k, &pi) in pairs.iter().enumerate() {
        let cands = &group.pairs[pi].candidates;
        let pool: Vec<&EvidenceRef> = if k == 0 && cfg.profile == Profile::Hybrid && cands.iter().any(|c| c.loc.is_table()) {
            cands.iter().filter(|c| c.loc.is_table()).collect()
        } else {
            cands
                .iter()
                .filter(|c| out.iter().all(|(_, o)| o.loc != c.loc))
                .collect()
        };
        if let Some(r) = pool.choose(rng) {
            out.push((pi, (*r).clone()));
        }
    }
    out
}

/// Samples one pre-training example from a query group.
pub fn sample_example(
    store: &CorpusStore,
    vocab: &Vocab,
    group: &QueryGroup,
    cfg: &GenConfig,
    seed: u64,
    epoch: u64,
) -> Result<PretrainExample> {
    let mut rng = group_rng(&group.query, epoch, seed);
    let no_example = || Error::NoViableExample(group.query.to_string());
    if group.pairs.is_empty() {
        return Err(no_example());
    }
    let query = store.sentence(&group.query).ok_or_else(|| Error::UnknownEvidence(group.query.to_string()))?;

    let pairs = choose_pairs(group, cfg, &mut rng);
    let picks = choose_evidence(group, &pairs, cfg, &mut rng);
    if picks.is_empty() {
        return Err(no_example());
    }
    let budget = &cfg.budget;

    let mut pieces: Vec<Piece> = Vec::new();
    let mut built_with = if picks.len() == 2 { budget.evidence_max_two } else { budget.evidence_max_one };
    let mut infeasible = None;
    for (pi, r) in &picks {
        match build_piece(store, &group.query, r, built_with, budget, &mut rng) {
            Ok(seq) => pieces.push(Piece { seq, pair: *pi }),
            Err(e @ Error::SnippetInfeasible { .. }) => infeasible = Some(e),
            Err(e) => return Err(e),
        }
    }
    if pieces.is_empty() {
        return Err(infeasible.unwrap_or_else(no_example));
    }

    // query, clipped before masking
    let q_all = tokenize(&query.text);
    let q_len = q_all.len().min(budget.query_max);
    let mut q_spans: Vec<(EntityId, usize, usize)> = Vec::new();
    for m in &query.mentions {
        if let Some((a, b)) = token_span(&q_all, m.start, m.end) {
            if a < q_len {
                q_spans.push((m.entity.clone(), a, b.min(q_len)));
            }
        }
    }
    let in_query = |e: &EntityId| q_spans.iter().any(|(x, _, _)| x == e);
    let in_evidence = |pieces: &[Piece], e: &EntityId| pieces.iter().any(|p| p.seq.contains_entity(e));

    let (pieces, sampled, masked, category) = choose_masks(group, pieces, cfg, &mut rng, &in_query, &in_evidence)
        .ok_or_else(no_example)?;
    let pieces: Vec<Piece> = if pieces.len() == 1 && built_with != budget.evidence_max_one {
        // one piece left: rebuild it with the single-evidence budget
        built_with = budget.evidence_max_one;
        let r = pieces[0].seq.source.clone();
        vec![Piece {
            seq: build_piece(store, &group.query, &r, built_with, budget, &mut rng)?,
            pair: pieces[0].pair,
        }]
    } else {
        pieces
    };
    debug_assert!(pieces.iter().all(|p| p.seq.len() <= built_with));
    if !masked.iter().all(|e| in_evidence(&pieces, e)) {
        return Err(no_example());
    }
    debug_assert_eq!(classify_category(&sampled, &masked).ok(), Some(category));

    let mut all_masked: Vec<(EntityId, bool)> = masked.iter().map(|e| (e.clone(), true)).collect();
    if cfg.unanswerable && all_masked.len() < 3 {
        let mut absent: Vec<&EntityId> = q_spans
            .iter()
            .map(|(e, _, _)| e)
            .filter(|e| !masked.contains(e) && !in_evidence(&pieces, e))
            .collect();
        absent.sort();
        absent.dedup();
        if let Some(e) = absent.choose(&mut rng) {
            all_masked.push(((*e).clone(), false));
        }
    }

    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.shuffle(&mut rng);
    let pieces: Vec<Piece> = {
        let mut slots: Vec<Option<Piece>> = pieces.into_iter().map(Some).collect();
        order.iter().map(|&i| slots[i].take().expect("permutation")).collect()
    };

    assemble(vocab, group, &q_all[..q_len], &q_spans, &pieces, &all_masked, category, seed, epoch, cfg, &mut rng)
}

type Masking = (Vec<Piece>, Vec<PairKey>, Vec<EntityId>, ReasoningCategory);

fn choose_masks<R: Rng>(
    group: &QueryGroup,
    mut pieces: Vec<Piece>,
    cfg: &GenConfig,
    rng: &mut R,
    in_query: &dyn Fn(&EntityId) -> bool,
    in_evidence: &dyn Fn(&[Piece], &EntityId) -> bool,
) -> Option<Masking> {
    let viable = |pieces: &[Piece], set: &[EntityId]| set.iter().all(|e| in_query(e) && in_evidence(pieces, e));
    if pieces.len() == 2 {
        let p = group.pairs[pieces[0].pair].pair.clone();
        let q = group.pairs[pieces[1].pair].pair.clone();
        let sampled = vec![p.clone(), q.clone()];
        let mut options: Vec<(Vec<EntityId>, ReasoningCategory)> = Vec::new();
        match p.shared_with(&q) {
            Some(b) => {
                let mut inter = vec![(vec![b.clone()], ReasoningCategory::Intersection)];
                let mut bridge: Vec<(Vec<EntityId>, ReasoningCategory)> = [p.other(b), q.other(b)]
                    .into_iter()
                    .flatten()
                    .map(|c| (vec![b.clone(), c.clone()], ReasoningCategory::Bridging))
                    .collect();
                bridge.shuffle(rng);
                if rng.random::<f64>() < cfg.intersection_prob {
                    options.append(&mut inter);
                    options.append(&mut bridge);
                } else {
                    options.append(&mut bridge);
                    options.append(&mut inter);
                }
            }
            None => {
                for a in [&p.lo, &p.hi] {
                    for c in [&q.lo, &q.hi] {
                        options.push((vec![a.clone(), c.clone()], ReasoningCategory::DisjointPairs));
                    }
                }
                options.shuffle(rng);
            }
        }
        if let Some((set, cat)) = options.into_iter().find(|(set, _)| viable(&pieces, set)) {
            return Some((pieces, sampled, set, cat));
        }
    }
    // single pair: keep one piece and mask one of its pair's entities
    let mut idx: Vec<usize> = (0..pieces.len()).collect();
    idx.shuffle(rng);
    for i in idx {
        let pair = group.pairs[pieces[i].pair].pair.clone();
        let mut ents = vec![pair.lo.clone(), pair.hi.clone()];
        ents.shuffle(rng);
        let keep = pieces.swap_remove(i);
        let single = [keep];
        if let Some(e) = ents.into_iter().find(|e| viable(&single, std::slice::from_ref(e))) {
            let [keep] = single;
            return Some((vec![keep], vec![pair], vec![e], ReasoningCategory::SinglePair));
        }
        let [keep] = single;
        pieces.push(keep);
        let last = pieces.len() - 1;
        pieces.swap(i, last);
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn assemble<R: Rng>(
    vocab: &Vocab,
    group: &QueryGroup,
    q_tokens: &[Token],
    q_spans: &[(EntityId, usize, usize)],
    pieces: &[Piece],
    masked: &[(EntityId, bool)],
    category: ReasoningCategory,
    seed: u64,
    epoch: u64,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<PretrainExample> {
    let mut ids = vec![CLS];
    let mut segment = vec![0u8];
    let mut entity_positions = Vec::new();

    // query region: masked mentions collapse to one [QUESTION] each
    let mut replaced: Vec<(usize, usize, usize)> = q_spans
        .iter()
        .enumerate()
        .filter(|(_, (e, _, _))| masked.iter().any(|(m, _)| m == e))
        .map(|(i, (_, a, b))| (*a, *b, i))
        .collect();
    replaced.sort_unstable();
    let mut first_question: HashMap<&EntityId, usize> = HashMap::new();
    let mut i = 0;
    while i < q_tokens.len() {
        if let Some(&(a, b, si)) = replaced.iter().find(|(a, _, _)| *a == i) {
            let entity = &q_spans[si].0;
            first_question.entry(entity).or_insert(ids.len());
            ids.push(QUESTION);
            segment.push(0);
            i = b.max(a + 1);
            continue;
        }
        if q_spans.iter().any(|(_, a, b)| *a <= i && i < *b) {
            entity_positions.push(ids.len());
        }
        ids.push(vocab.id(&q_tokens[i].text));
        segment.push(0);
        i += 1;
    }
    ids.push(SEP);
    segment.push(0);
    let mut row = vec![0u32; ids.len()];
    let mut col = vec![0u32; ids.len()];

    let mut header_positions = Vec::new();
    let mut ranges = Vec::new();
    let mut entity_at: Vec<(EntityId, usize, usize)> = Vec::new();
    for (k, p) in pieces.iter().enumerate() {
        if k > 0 {
            ids.push(SEP);
            segment.push(1);
            row.push(0);
            col.push(0);
        }
        let base = ids.len();
        for (t, tok) in p.seq.tokens.iter().enumerate() {
            ids.push(vocab.id(tok));
            segment.push(1);
            row.push(p.seq.rows[t]);
            col.push(p.seq.cols[t]);
            if p.seq.header[t] {
                header_positions.push(base + t);
            }
        }
        for s in &p.seq.entities {
            entity_at.push((s.entity.clone(), base + s.start, base + s.end));
            entity_positions.extend(base + s.start..base + s.end);
        }
        ranges.push((base, ids.len()));
    }
    entity_positions.sort_unstable();
    entity_positions.dedup();

    let mut slots = Vec::new();
    for (e, answerable) in masked {
        let question_pos = *first_question.get(e).ok_or_else(|| Error::NoViableExample(group.query.to_string()))?;
        let target = if *answerable {
            let (_, s, t) = entity_at
                .iter()
                .filter(|(x, _, _)| x == e)
                .min_by_key(|(_, s, _)| *s)
                .ok_or_else(|| Error::NoViableExample(group.query.to_string()))?;
            SlotTarget::Span { start: *s, end: t - 1 }
        } else {
            SlotTarget::Cls
        };
        slots.push(QuestionSlot {
            question_pos,
            target,
            masked_entity: e.clone(),
            answerable: *answerable,
        });
    }

    let n = ids.len();
    let mut ex = PretrainExample {
        token_types: TokenTypes {
            segment,
            row,
            col,
            position: (0..n as u32).collect(),
        },
        token_ids: ids,
        evidence_ranges: ranges,
        entity_positions,
        header_positions,
        slots,
        mlm_targets: Vec::new(),
        category,
        provenance: Provenance {
            query: group.query.clone(),
            evidence: pieces.iter().map(|p| p.seq.source.clone()).collect(),
            seed,
            epoch,
        },
    };
    if cfg.mlm {
        apply_mlm(&mut ex, rng, cfg.mlm_rate, vocab.len());
    }
    Ok(ex)
}

/// BERT-style masking of non-entity, non-header, non-special tokens.
pub fn apply_mlm<R: Rng>(ex: &mut PretrainExample, rng: &mut R, rate: f64, vocab_size: usize) {
    let blocked: BTreeSet<usize> = ex.entity_positions.iter().chain(ex.header_positions.iter()).copied().collect();
    let mut targets = Vec::new();
    for pos in 0..ex.token_ids.len() {
        let id = ex.token_ids[pos];
        if is_special(id) || blocked.contains(&pos) {
            continue;
        }
        if rng.random::<f64>() >= rate {
            continue;
        }
        targets.push(MlmTarget { pos, original_id: id });
        let r: f64 = rng.random();
        if r < 0.8 {
            ex.token_ids[pos] = MASK;
        } else if r < 0.9 && vocab_size > RESERVED.len() {
            ex.token_ids[pos] = rng.random_range(RESERVED.len() as u32..vocab_size as u32);
        }
    }
    ex.mlm_targets = targets;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenReport {
    pub generated: usize,
    pub skipped: usize,
}

/// Generates one example per group, in group order.
pub fn generate(
    store: &CorpusStore,
    vocab: &Vocab,
    groups: &[QueryGroup],
    cfg: &GenConfig,
    seed: u64,
    epoch: u64,
) -> Result<(Vec<PretrainExample>, GenReport)> {
    let results: Vec<Result<PretrainExample>> = groups
        .par_iter()
        .map(|g| sample_example(store, vocab, g, cfg, seed, epoch))
        .collect();
    let mut out = Vec::new();
    let mut report = GenReport::default();
    for r in results {
        match r {
            Ok(ex) => {
                report.generated += 1;
                out.push(ex);
            }
            Err(Error::NoViableExample(_) | Error::SnippetInfeasible { .. }) => report.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, report))
}
