//! Extractive QA harness: metrics, evidence windowing, multi-hop and hybrid
//! evidence assembly, few-shot subsets and evaluation.
//!
//! Fine-tuning inputs append `[QUESTION]` to the question:
//! `[CLS] question [QUESTION] [SEP] evidence ([SEP] evidence)`.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::example_gen::{tokenize, Vocab, CLS, QUESTION, SEP};
use crate::neural::heads::{best_answer, cell_scores, rank_spans, span_logits, RankedSpan, TableLayout};
use crate::neural::{encode, EncoderInput, ModelParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub article_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkedCell {
    pub row: usize,
    pub col: usize,
    pub passage: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaTable {
    /// Row 0 is the header.
    pub rows: Vec<Vec<String>>,
    #[serde(default)]
    pub linked_cells: Vec<LinkedCell>,
}

impl QaTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub documents: Vec<Document>,
    #[serde(default)]
    pub tables: Vec<QaTable>,
    /// Empty for unanswerable questions.
    #[serde(default)]
    pub answers: Vec<String>,
}

impl QaExample {
    pub fn answerable(&self) -> bool {
        !self.answers.is_empty()
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<QaExample>> {
    Ok(crate::artifact::read_jsonl(path)?.1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub em: f64,
    pub f1: f64,
    pub n: usize,
}

impl MetricReport {
    /// Dataset means, rounded to 4 decimals.
    pub fn from_scores(scores: &[(f64, f64)]) -> Self {
        let n = scores.len();
        if n == 0 {
            return MetricReport::default();
        }
        let round = |x: f64| (x * 1e4).round() / 1e4;
        MetricReport {
            em: round(scores.iter().map(|s| s.0).sum::<f64>() / n as f64),
            f1: round(scores.iter().map(|s| s.1).sum::<f64>() / n as f64),
            n,
        }
    }
}

/// Lowercase, drop punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return (p.is_empty() && g.is_empty()) as u8 as f64;
    }
    let mut remaining = g.clone();
    let mut common = 0usize;
    for t in &p {
        if let Some(i) = remaining.iter().position(|x| x == t) {
            remaining.swap_remove(i);
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Per-example (EM, F1): max over golds. A null prediction scores (1, 1)
/// on an unanswerable question and (0, 0) otherwise.
pub fn em_f1(prediction: Option<&str>, golds: &[String]) -> (f64, f64) {
    match (prediction, golds.is_empty()) {
        (None, true) => (1.0, 1.0),
        (None, false) | (Some(_), true) => (0.0, 0.0),
        (Some(p), false) => {
            let np = normalize_answer(p);
            let mut em: f64 = 0.0;
            let mut f1: f64 = 0.0;
            for g in golds {
                let ng = normalize_answer(g);
                em = em.max((np == ng) as u8 as f64);
                f1 = f1.max(token_f1(&np, &ng));
            }
            (em, f1)
        }
    }
}

/// Windows starting at `0, stride, 2*stride, ...`, stopping at the first
/// window that reaches the final token.
pub fn window_split(n_tokens: usize, window: usize, stride: usize) -> Result<Vec<Range<usize>>> {
    if stride == 0 || window <= stride {
        return Err(Error::InvalidWindow { window, stride });
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(n_tokens);
        out.push(start..end);
        if end >= n_tokens {
            break;
        }
        start += stride;
    }
    Ok(out)
}

/// Cross-article pairs of selected windows, as index pairs in selection
/// order.
pub fn hotpot_combine<S: AsRef<str>>(articles: &[S]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..articles.len() {
        for j in i + 1..articles.len() {
            if articles[i].as_ref() != articles[j].as_ref() {
                out.push((i, j));
            }
        }
    }
    out
}

/// One window of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub doc: usize,
    pub article_id: String,
    /// Token range in the document.
    pub tokens: Range<usize>,
    pub text: String,
}

pub trait WindowScorer: Sync {
    fn score(&self, question: &str, window_text: &str) -> f64;
}

/// Counts distinct normalized question words present in the window.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalOverlap;

impl WindowScorer for LexicalOverlap {
    fn score(&self, question: &str, window_text: &str) -> f64 {
        let q: BTreeSet<String> = normalize_answer(question).split_whitespace().map(str::to_string).collect();
        let w: BTreeSet<String> = normalize_answer(window_text).split_whitespace().map(str::to_string).collect();
        q.intersection(&w).count() as f64
    }
}

/// Linear relevance scorer on the encoder's `[CLS]` vector of
/// `[CLS] question [SEP] window`.
#[derive(Debug, Clone)]
pub struct ClsSelector<'a> {
    pub params: &'a ModelParams,
    pub vocab: &'a Vocab,
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl ClsSelector<'_> {
    fn features(&self, question: &str, window_text: &str) -> Option<Vec<f64>> {
        let mut ids = vec![CLS];
        ids.extend(self.vocab.encode(question).into_iter().take(100));
        ids.push(SEP);
        let q_len = ids.len();
        ids.extend(self.vocab.encode(window_text));
        ids.truncate(self.params.config.max_positions);
        let seg = (0..ids.len()).map(|i| (i >= q_len) as u8).collect();
        let enc = encode(self.params, &EncoderInput::new(ids, seg)).ok()?;
        Some(enc.h.row(0).to_vec())
    }

    /// Logistic regression on frozen features against "window contains a
    /// gold answer".
    pub fn fit(&mut self, samples: &[(String, String, bool)], epochs: usize, lr: f64) {
        let feats: Vec<(Vec<f64>, f64)> = samples
            .iter()
            .filter_map(|(q, w, y)| self.features(q, w).map(|f| (f, *y as u8 as f64)))
            .collect();
        if self.weight.len() != self.params.config.d {
            self.weight = vec![0.0; self.params.config.d];
        }
        for _ in 0..epochs {
            for (f, y) in &feats {
                let z = crate::neural::tensor::dot(&self.weight, f) + self.bias;
                let g = 1.0 / (1.0 + (-z).exp()) - y;
                crate::neural::tensor::axpy(-lr * g, f, &mut self.weight);
                self.bias -= lr * g;
            }
        }
    }
}

impl WindowScorer for ClsSelector<'_> {
    fn score(&self, question: &str, window_text: &str) -> f64 {
        match self.features(question, window_text) {
            Some(f) if f.len() == self.weight.len() => crate::neural::tensor::dot(&self.weight, &f) + self.bias,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Indices of the top `k` windows by score; ties by (article id, start).
pub fn select_topk(question: &str, windows: &[Window], scorer: &dyn WindowScorer, k: usize) -> Vec<usize> {
    let scores: Vec<f64> = windows.iter().map(|w| scorer.score(question, &w.text)).collect();
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| windows[a].article_id.cmp(&windows[b].article_id))
            .then_with(|| windows[a].tokens.start.cmp(&windows[b].tokens.start))
    });
    idx.truncate(k);
    idx
}

/// Where an evidence token came from, for mapping answers back to text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Doc { doc: usize },
    Cell { table: usize, row: usize, col: usize },
    Passage { table: usize, link: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvToken {
    pub text: String,
    pub origin: Origin,
    pub start: usize,
    pub end: usize,
    pub row: u32,
    pub col: u32,
}

fn text_tokens(text: &str, origin: Origin) -> Vec<EvToken> {
    tokenize(text)
        .into_iter()
        .map(|t| EvToken {
            text: t.text,
            origin,
            start: t.start,
            end: t.end,
            row: 0,
            col: 0,
        })
        .collect()
}

pub fn document_tokens(ex: &QaExample, doc: usize) -> Vec<EvToken> {
    text_tokens(&ex.documents[doc].text, Origin::Doc { doc })
}

/// Header row plus the selected cell's row, then `[SEP]` and the linked
/// passage when there is one. The `[SEP]` is represented by `None`.
pub fn hybrid_compose(
    ex: &QaExample,
    table: usize,
    row: usize,
    col: usize,
    passage: Option<usize>,
    cell_max: usize,
) -> Result<Vec<Option<EvToken>>> {
    let t = ex.tables.get(table).ok_or(Error::CellOutOfRange {
        row,
        col,
        n_rows: 0,
        n_cols: 0,
    })?;
    if row >= t.n_rows() || col >= t.n_cols() {
        return Err(Error::CellOutOfRange {
            row,
            col,
            n_rows: t.n_rows(),
            n_cols: t.n_cols(),
        });
    }
    let mut out: Vec<Option<EvToken>> = Vec::new();
    let rows: Vec<usize> = if row == 0 { vec![0] } else { vec![0, row] };
    for (lr, &r) in rows.iter().enumerate() {
        out.extend(row_tokens(t, table, r, lr as u32 + 1, cell_max).into_iter().map(Some));
    }
    if let Some(link) = passage {
        let lc = t.linked_cells.get(link).ok_or_else(|| Error::SchemaViolation(format!("no linked passage {link}")))?;
        out.push(None);
        out.extend(text_tokens(&lc.passage, Origin::Passage { table, link }).into_iter().map(Some));
    }
    Ok(out)
}

fn row_tokens(t: &QaTable, table: usize, r: usize, local_row: u32, cell_max: usize) -> Vec<EvToken> {
    let mut out = Vec::new();
    for (c, cell) in t.rows[r].iter().enumerate() {
        for tok in tokenize(cell).into_iter().take(cell_max) {
            out.push(EvToken {
                text: tok.text,
                origin: Origin::Cell { table, row: r, col: c },
                start: tok.start,
                end: tok.end,
                row: local_row,
                col: c as u32 + 1,
            });
        }
    }
    out
}

/// A whole table, header first, rows in order while they fit `budget`.
pub fn table_tokens(ex: &QaExample, table: usize, cell_max: usize, budget: usize) -> Vec<EvToken> {
    let t = &ex.tables[table];
    let mut out = Vec::new();
    for r in 0..t.n_rows() {
        let row = row_tokens(t, table, r, r as u32 + 1, cell_max);
        if out.len() + row.len() > budget {
            break;
        }
        out.extend(row);
    }
    out
}

/// A model input assembled for one piece (or pair) of evidence.
#[derive(Debug, Clone)]
pub struct QaInput {
    pub input: EncoderInput,
    pub question_pos: usize,
    /// `[CLS]` followed by every evidence token position.
    pub domain: Vec<usize>,
    /// Evidence token at each sequence position.
    pub evidence: Vec<Option<EvToken>>,
}

/// `[CLS] question [QUESTION] [SEP] evidence`, where `None` entries of
/// `evidence` become `[SEP]`.
pub fn assemble(question: &str, evidence: &[Option<EvToken>], vocab: &Vocab, query_max: usize) -> QaInput {
    let mut ids = vec![CLS];
    ids.extend(tokenize(question).iter().take(query_max).map(|t| vocab.id(&t.text)));
    let question_pos = ids.len();
    ids.push(QUESTION);
    ids.push(SEP);
    let q_end = ids.len();
    let mut slots: Vec<Option<EvToken>> = vec![None; q_end];
    let mut domain = vec![0];
    let mut rows = vec![0; q_end];
    let mut cols = vec![0; q_end];
    for e in evidence {
        match e {
            Some(t) => {
                domain.push(ids.len());
                ids.push(vocab.id(&t.text));
                rows.push(t.row);
                cols.push(t.col);
            }
            None => {
                ids.push(SEP);
                rows.push(0);
                cols.push(0);
            }
        }
        slots.push(e.clone());
    }
    let n = ids.len();
    let segment = (0..n).map(|i| (i >= q_end) as u8).collect();
    QaInput {
        input: EncoderInput {
            token_ids: ids,
            segment,
            row: rows,
            col: cols,
            position: (0..n as u32).collect(),
        },
        question_pos,
        domain,
        evidence: slots,
    }
}

/// Source text of a span; tokens from one source are sliced from it,
/// otherwise token texts are joined.
pub fn answer_text(ex: &QaExample, toks: &[&EvToken]) -> String {
    let Some(first) = toks.first() else {
        return String::new();
    };
    let same = toks.iter().all(|t| t.origin == first.origin);
    if same {
        let src = match first.origin {
            Origin::Doc { doc } => &ex.documents[doc].text,
            Origin::Cell { table, row, col } => &ex.tables[table].rows[row][col],
            Origin::Passage { table, link } => &ex.tables[table].linked_cells[link].passage,
        };
        let last = toks.last().expect("non-empty");
        return src[first.start..last.end].to_string();
    }
    toks.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")
}

/// Start/end logits over the domain of an assembled input.
pub trait SpanModel: Sync {
    fn logits(&self, ex: &QaExample, input: &QaInput) -> Result<(Vec<f64>, Vec<f64>)>;

    /// Optional cell choice for hybrid inputs: (row, col) of table `table`.
    fn select_cell(&self, _ex: &QaExample, _table: usize) -> Option<(usize, usize)> {
        None
    }
}

/// The reference encoder with its span and cell heads.
pub struct RefModel<'a> {
    pub params: &'a ModelParams,
    pub vocab: &'a Vocab,
    pub cell_max: usize,
}

impl SpanModel for RefModel<'_> {
    fn logits(&self, _ex: &QaExample, input: &QaInput) -> Result<(Vec<f64>, Vec<f64>)> {
        let enc = encode(self.params, &input.input)?;
        let lg = span_logits(self.params, &enc.h, input.question_pos, &input.domain)?;
        Ok((lg.f_start, lg.f_end))
    }

    fn select_cell(&self, ex: &QaExample, table: usize) -> Option<(usize, usize)> {
        let toks: Vec<Option<EvToken>> = table_tokens(ex, table, self.cell_max, 400).into_iter().map(Some).collect();
        let qi = assemble(&ex.question, &toks, self.vocab, 100);
        let enc = encode(self.params, &qi.input).ok()?;
        let n = qi.input.len();
        let layout = TableLayout::from_types(&qi.input.row, &qi.input.col, 0..n);
        // never select a header cell
        let layout = TableLayout {
            cells: layout.cells.into_iter().filter(|c| c.row > 1).collect(),
        };
        let s = cell_scores(self.params, &enc.h, &layout, qi.question_pos).ok()?;
        let best = (0..layout.cells.len()).max_by(|&a, &b| s.combined[a].total_cmp(&s.combined[b]).then(b.cmp(&a)))?;
        let c = &layout.cells[best];
        Some((c.row - 1, c.col - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Single,
    Hotpot,
    Table,
    Hybrid,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(EvalMode::Single),
            "hotpot" => Ok(EvalMode::Hotpot),
            "table" => Ok(EvalMode::Table),
            "hybrid" => Ok(EvalMode::Hybrid),
            other => Err(Error::Config(format!("unknown eval mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub total_max: usize,
    pub query_max: usize,
    pub stride: usize,
    pub hotpot_window: usize,
    pub top_k: usize,
    pub max_span_len: usize,
    pub cell_max: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            total_max: 512,
            query_max: 100,
            stride: 128,
            hotpot_window: 200,
            top_k: 3,
            max_span_len: 30,
            cell_max: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer: Option<String>,
    pub score: f64,
    pub em: f64,
    pub f1: f64,
}

/// Ranked spans of one input, each with its answer text.
pub fn score_input(model: &dyn SpanModel, ex: &QaExample, qi: &QaInput, max_span_len: usize) -> Result<Vec<(RankedSpan, String)>> {
    let (fs, fe) = model.logits(ex, qi)?;
    let ranked = rank_spans(&fs, &fe, &qi.domain, max_span_len);
    Ok(ranked
        .into_iter()
        .map(|r| {
            let toks: Vec<&EvToken> = (r.start..=r.end).filter_map(|i| qi.evidence[i].as_ref()).collect();
            (r, answer_text(ex, &toks))
        })
        .collect())
}

/// Every model input for one example under `mode`.
pub fn inputs_for(ex: &QaExample, mode: EvalMode, vocab: &Vocab, cfg: &EvalConfig, scorer: &dyn WindowScorer, model: &dyn SpanModel) -> Result<Vec<QaInput>> {
    let q_len = tokenize(&ex.question).len().min(cfg.query_max);
    let window = cfg.total_max.saturating_sub(q_len + 3);
    let mut out = Vec::new();
    match mode {
        EvalMode::Single => {
            for d in 0..ex.documents.len() {
                let toks = document_tokens(ex, d);
                for w in window_split(toks.len(), window, cfg.stride.min(window.saturating_sub(1)))? {
                    let ev: Vec<Option<EvToken>> = toks[w].iter().cloned().map(Some).collect();
                    out.push(assemble(&ex.question, &ev, vocab, cfg.query_max));
                }
            }
        }
        EvalMode::Hotpot => {
            let mut windows = Vec::new();
            let mut toks_of = Vec::new();
            for d in 0..ex.documents.len() {
                let toks = document_tokens(ex, d);
                for w in window_split(toks.len(), cfg.hotpot_window, cfg.stride)? {
                    let text = match (toks.get(w.start), toks.get(w.end.saturating_sub(1))) {
                        (Some(a), Some(b)) if w.end > w.start => ex.documents[d].text[a.start..b.end].to_string(),
                        _ => String::new(),
                    };
                    windows.push(Window {
                        doc: d,
                        article_id: ex.documents[d].article_id.clone(),
                        tokens: w,
                        text,
                    });
                }
                toks_of.push(toks);
            }
            let top = select_topk(&ex.question, &windows, scorer, cfg.top_k);
            let articles: Vec<&str> = top.iter().map(|&i| windows[i].article_id.as_str()).collect();
            let combos = hotpot_combine(&articles);
            let window_toks = |i: usize| -> Vec<Option<EvToken>> {
                let w = &windows[i];
                toks_of[w.doc][w.tokens.clone()].iter().cloned().map(Some).collect()
            };
            if combos.is_empty() {
                for &i in &top {
                    out.push(assemble(&ex.question, &window_toks(i), vocab, cfg.query_max));
                }
            }
            for (a, b) in combos {
                let mut ev = window_toks(top[a]);
                ev.push(None);
                ev.extend(window_toks(top[b]));
                out.push(assemble(&ex.question, &ev, vocab, cfg.query_max));
            }
        }
        EvalMode::Table => {
            for t in 0..ex.tables.len() {
                let ev: Vec<Option<EvToken>> = table_tokens(ex, t, cfg.cell_max, window).into_iter().map(Some).collect();
                out.push(assemble(&ex.question, &ev, vocab, cfg.query_max));
            }
        }
        EvalMode::Hybrid => {
            for t in 0..ex.tables.len() {
                let table = &ex.tables[t];
                let cells: Vec<(usize, usize)> = match model.select_cell(ex, t) {
                    Some(c) => vec![c],
                    None => table.linked_cells.iter().map(|l| (l.row, l.col)).collect(),
                };
                for (row, col) in cells {
                    let link = table.linked_cells.iter().position(|l| l.row == row && l.col == col);
                    let mut ev = hybrid_compose(ex, t, row, col, link, cfg.cell_max)?;
                    ev.truncate(window);
                    out.push(assemble(&ex.question, &ev, vocab, cfg.query_max));
                }
            }
        }
    }
    Ok(out)
}

/// Best span over every input of the example; `None` when no span beats
/// the null answer.
pub fn predict(
    model: &dyn SpanModel,
    ex: &QaExample,
    mode: EvalMode,
    vocab: &Vocab,
    cfg: &EvalConfig,
    scorer: &dyn WindowScorer,
) -> Result<Option<(RankedSpan, String)>> {
    let mut best: Option<(RankedSpan, String)> = None;
    for qi in inputs_for(ex, mode, vocab, cfg, scorer, model)? {
        let ranked = score_input(model, ex, &qi, cfg.max_span_len)?;
        if let Some(top) = ranked.into_iter().next() {
            if best.as_ref().is_none_or(|b| top.0.score > b.0.score) {
                best = Some(top);
            }
        }
    }
    Ok(best.filter(|b| best_answer(&[b.0]).is_some()))
}

pub fn evaluate(
    model: &dyn SpanModel,
    dataset: &[QaExample],
    mode: EvalMode,
    vocab: &Vocab,
    cfg: &EvalConfig,
    scorer: &dyn WindowScorer,
) -> Result<(MetricReport, Vec<Prediction>)> {
    let preds: Vec<Result<Prediction>> = dataset
        .par_iter()
        .map(|ex| {
            let best = predict(model, ex, mode, vocab, cfg, scorer)?;
            let answer = best.as_ref().map(|b| b.1.clone());
            let (em, f1) = em_f1(answer.as_deref(), &ex.answers);
            Ok(Prediction {
                id: ex.id.clone(),
                answer,
                score: best.map_or(0.0, |b| b.0.score),
                em,
                f1,
            })
        })
        .collect();
    let preds: Vec<Prediction> = preds.into_iter().collect::<Result<_>>()?;
    let scores: Vec<(f64, f64)> = preds.iter().map(|p| (p.em, p.f1)).collect();
    Ok((MetricReport::from_scores(&scores), preds))
}

/// Seeded uniform sample of `k` examples without replacement, in dataset order.
pub fn fewshot_sample(dataset: &[QaExample], k: usize, seed: u64) -> Result<Vec<QaExample>> {
    let n = dataset.len();
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| dataset[i].clone()).collect())
}
