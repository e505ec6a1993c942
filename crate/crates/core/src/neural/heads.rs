//! Output heads on top of the encoder and their pure scoring math.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::tensor::{dot, log_sum_exp, matvec, softmax, Tensor};
use crate::error::{Error, Result};

/// Start/end logits over a span domain. `domain[0]` is the `[CLS]` position.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanLogits {
    pub domain: Vec<usize>,
    pub f_start: Vec<f64>,
    pub f_end: Vec<f64>,
}

impl SpanLogits {
    pub fn probs(&self) -> (Vec<f64>, Vec<f64>) {
        (softmax(&self.f_start), softmax(&self.f_end))
    }
}

/// `f(k) = H[k]^T W H[q]` for every domain position, with `W_start` and `W_end`.
pub fn span_logits(p: &ModelParams, h: &Tensor, question_pos: usize, domain: &[usize]) -> Result<SpanLogits> {
    if domain.len() < 2 {
        return Err(Error::EmptyEvidenceRegion);
    }
    let n = h.rows();
    if question_pos >= n || domain.iter().any(|&k| k >= n) {
        return Err(Error::ShapeMismatch(format!("position out of range for {n} tokens")));
    }
    let d = p.config.d;
    let hq = h.row(question_pos);
    let us = matvec(&p.w_start.data, d, d, hq);
    let ue = matvec(&p.w_end.data, d, d, hq);
    Ok(SpanLogits {
        domain: domain.to_vec(),
        f_start: domain.iter().map(|&k| dot(h.row(k), &us)).collect(),
        f_end: domain.iter().map(|&k| dot(h.row(k), &ue)).collect(),
    })
}

/// Softmax start/end distributions over the domain.
pub fn span_scores(p: &ModelParams, h: &Tensor, question_pos: usize, domain: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(span_logits(p, h, question_pos, domain)?.probs())
}

/// `-sum over slots of log P_start(s) + log P_end(e)`, with gold given as
/// domain indices.
pub fn span_loss(gold: &[(usize, usize)], probs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    gold.iter()
        .zip(probs)
        .map(|(&(s, e), (ps, pe))| -(ps[s].ln() + pe[e].ln()))
        .sum()
}

/// Cross-entropy of one logit vector against `target`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    log_sum_exp(logits) - logits[target]
}

pub fn mlm_logits(p: &ModelParams, h: &Tensor, pos: usize) -> Vec<f64> {
    let v = p.config.vocab_size;
    let d = p.config.d;
    let mut out = p.mlm_b.data.clone();
    let hp = h.row(pos);
    for (i, hi) in hp.iter().enumerate().take(d) {
        super::tensor::axpy(*hi, &p.mlm_w.data[i * v..(i + 1) * v], &mut out);
    }
    out
}

/// Mean cross-entropy at the target positions; 0 without targets.
pub fn mlm_loss(p: &ModelParams, h: &Tensor, targets: &[(usize, u32)]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let total: f64 = targets
        .iter()
        .map(|&(pos, id)| cross_entropy(&mlm_logits(p, h, pos), id as usize))
        .sum();
    total / targets.len() as f64
}

/// Token positions of each table cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellTokens {
    pub row: usize,
    pub col: usize,
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLayout {
    pub cells: Vec<CellTokens>,
}

impl TableLayout {
    /// Groups positions in `range` carrying a nonzero (row, col) into cells.
    pub fn from_types(row: &[u32], col: &[u32], range: Range<usize>) -> Self {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for i in range {
            if row[i] > 0 && col[i] > 0 {
                map.entry((row[i] as usize, col[i] as usize)).or_default().push(i);
            }
        }
        TableLayout {
            cells: map
                .into_iter()
                .map(|((row, col), positions)| CellTokens { row, col, positions })
                .collect(),
        }
    }

    pub fn row_ids(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.iter().map(|c| c.row).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn col_ids(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.iter().map(|c| c.col).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn cell_index(&self, row: usize, col: usize) -> Option<usize> {
        self.cells.iter().position(|c| c.row == row && c.col == col)
    }
}

/// Max-pooled group scores: for each group id (ascending) the best member
/// value and the index of the first member attaining it.
pub fn max_pool(keys: &[usize], values: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<usize>) {
    let mut best: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (i, (&k, &v)) in keys.iter().zip(values).enumerate() {
        match best.get(&k) {
            Some(&(b, _)) if b >= v => {}
            _ => {
                best.insert(k, (v, i));
            }
        }
    }
    let ids = best.keys().copied().collect();
    let maxes = best.values().map(|v| v.0).collect();
    let arg = best.values().map(|v| v.1).collect();
    (ids, maxes, arg)
}

/// Scores of the cell head for one table and one question position.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScores {
    /// Per cell: token score of the cell's first token.
    pub token_score: Vec<f64>,
    /// Per cell: mean token score under `W_row` and `W_col`.
    pub cell_row_score: Vec<f64>,
    pub cell_col_score: Vec<f64>,
    pub row_ids: Vec<usize>,
    pub row_score: Vec<f64>,
    pub row_argmax: Vec<usize>,
    pub col_ids: Vec<usize>,
    pub col_score: Vec<f64>,
    pub col_argmax: Vec<usize>,
    pub p_token: Vec<f64>,
    pub p_row: Vec<f64>,
    pub p_col: Vec<f64>,
    /// Per cell: token + row + column score.
    pub combined: Vec<f64>,
}

/// Pools per-cell scores into row/column distributions.
pub fn pool_cell_scores(layout: &TableLayout, token_score: Vec<f64>, cell_row_score: Vec<f64>, cell_col_score: Vec<f64>) -> Result<CellScores> {
    if layout.cells.is_empty() {
        return Err(Error::EmptyTable);
    }
    let rows: Vec<usize> = layout.cells.iter().map(|c| c.row).collect();
    let cols: Vec<usize> = layout.cells.iter().map(|c| c.col).collect();
    let (row_ids, row_score, row_argmax) = max_pool(&rows, &cell_row_score);
    let (col_ids, col_score, col_argmax) = max_pool(&cols, &cell_col_score);
    let combined = layout
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let r = row_ids.binary_search(&c.row).expect("row present");
            let k = col_ids.binary_search(&c.col).expect("col present");
            token_score[i] + row_score[r] + col_score[k]
        })
        .collect();
    Ok(CellScores {
        p_token: softmax(&token_score),
        p_row: softmax(&row_score),
        p_col: softmax(&col_score),
        token_score,
        cell_row_score,
        cell_col_score,
        row_ids,
        row_score,
        row_argmax,
        col_ids,
        col_score,
        col_argmax,
        combined,
    })
}

pub fn cell_scores(p: &ModelParams, h: &Tensor, layout: &TableLayout, question_pos: usize) -> Result<CellScores> {
    if layout.cells.is_empty() {
        return Err(Error::EmptyTable);
    }
    if layout.cells.iter().any(|c| c.positions.is_empty()) {
        return Err(Error::ShapeMismatch("table cell without tokens".into()));
    }
    let d = p.config.d;
    let hq = h.row(question_pos);
    let ut = matvec(&p.w_tok.data, d, d, hq);
    let ur = matvec(&p.w_row.data, d, d, hq);
    let uc = matvec(&p.w_col.data, d, d, hq);
    let mean = |c: &CellTokens, u: &[f64]| c.positions.iter().map(|&i| dot(h.row(i), u)).sum::<f64>() / c.positions.len() as f64;
    let token_score = layout.cells.iter().map(|c| dot(h.row(c.positions[0]), &ut)).collect();
    let row = layout.cells.iter().map(|c| mean(c, &ur)).collect();
    let col = layout.cells.iter().map(|c| mean(c, &uc)).collect();
    pool_cell_scores(layout, token_score, row, col)
}

/// `-log P_token(cell) - log P_row(row) - log P_col(col)`.
pub fn cell_loss(s: &CellScores, layout: &TableLayout, row: usize, col: usize) -> Result<f64> {
    let (cell, r, c) = cell_target_indices(s, layout, row, col)?;
    Ok(-(s.p_token[cell].ln() + s.p_row[r].ln() + s.p_col[c].ln()))
}

pub(crate) fn cell_target_indices(s: &CellScores, layout: &TableLayout, row: usize, col: usize) -> Result<(usize, usize, usize)> {
    let out_of_range = || Error::CellOutOfRange {
        row,
        col,
        n_rows: s.row_ids.len(),
        n_cols: s.col_ids.len(),
    };
    let cell = layout.cell_index(row, col).ok_or_else(out_of_range)?;
    let r = s.row_ids.binary_search(&row).map_err(|_| out_of_range())?;
    let c = s.col_ids.binary_search(&col).map_err(|_| out_of_range())?;
    Ok((cell, r, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedSpan {
    /// Sequence positions, inclusive.
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// All spans `s <= e` over contiguous domain positions (excluding `[CLS]`
/// at index 0) of at most `max_len` tokens, scored by
/// `g = f_start(s) + f_end(e) - f_start(CLS) - f_end(CLS)` and sorted by
/// descending score, then by position.
pub fn rank_spans(f_start: &[f64], f_end: &[f64], positions: &[usize], max_len: usize) -> Vec<RankedSpan> {
    let n = positions.len();
    if n < 2 || f_start.len() != n || f_end.len() != n {
        return Vec::new();
    }
    let base = f_start[0] + f_end[0];
    let mut out = Vec::new();
    for s in 1..n {
        for e in s..n.min(s + max_len) {
            if positions[e] - positions[s] != e - s {
                break;
            }
            out.push(RankedSpan {
                start: positions[s],
                end: positions[e],
                score: f_start[s] + f_end[e] - base,
            });
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
    });
    out
}

/// The top span when it beats the null answer, else `None`.
pub fn best_answer(ranked: &[RankedSpan]) -> Option<RankedSpan> {
    ranked.first().copied().filter(|s| s.score > 0.0)
}
