//! Losses over one example and their exact gradients.

use serde::{Deserialize, Serialize};

use super::encoder::{encode, encoder_backward, EncoderInput, Encoded};
use super::heads::{cell_scores, cell_target_indices, mlm_logits, span_logits, CellScores, TableLayout};
use super::params::ModelParams;
use super::tensor::{axpy, matvec, matvec_t, outer_acc, softmax, Tensor};
use crate::error::{Error, Result};
use crate::example_gen::{span_domain, PretrainExample};

/// Gold start/end sequence positions for one `[QUESTION]` slot; `(0, 0)`
/// points at `[CLS]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotGold {
    pub question_pos: usize,
    pub start: usize,
    pub end: usize,
}

/// Cell-selection supervision for table inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGold {
    pub question_pos: usize,
    pub layout: TableLayout,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainTarget {
    /// `[CLS]` followed by the evidence positions.
    pub domain: Vec<usize>,
    pub slots: Vec<SlotGold>,
    /// (position, original token id)
    pub mlm: Vec<(usize, u32)>,
    pub cell: Option<CellGold>,
}

impl From<&PretrainExample> for TrainTarget {
    fn from(ex: &PretrainExample) -> Self {
        TrainTarget {
            domain: span_domain(&ex.token_ids, &ex.token_types.segment),
            slots: ex
                .slots
                .iter()
                .map(|s| {
                    let (start, end) = s.gold();
                    SlotGold {
                        question_pos: s.question_pos,
                        start,
                        end,
                    }
                })
                .collect(),
            mlm: ex.mlm_targets.iter().map(|t| (t.pos, t.original_id)).collect(),
            cell: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_sr: f64,
    pub l_mlm: f64,
    /// Cell-selection loss; 0 unless the target carries a cell.
    pub l_cell: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(l_sr: f64, l_mlm: f64, l_cell: f64) -> Self {
        LossReport {
            l_sr,
            l_mlm,
            l_cell,
            total: l_sr + l_mlm + l_cell,
        }
    }

    pub fn add(&mut self, other: &LossReport) {
        *self = LossReport::new(self.l_sr + other.l_sr, self.l_mlm + other.l_mlm, self.l_cell + other.l_cell);
    }

    pub fn scaled(&self, s: f64) -> Self {
        LossReport::new(self.l_sr * s, self.l_mlm * s, self.l_cell * s)
    }
}

/// Which loss terms contribute; every term is on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossTerms {
    pub span: bool,
    pub mlm: bool,
    pub cell: bool,
}

impl Default for LossTerms {
    fn default() -> Self {
        LossTerms {
            span: true,
            mlm: true,
            cell: true,
        }
    }
}

fn domain_index(domain: &[usize], pos: usize) -> Result<usize> {
    domain
        .iter()
        .position(|&k| k == pos)
        .ok_or_else(|| Error::ShapeMismatch(format!("gold position {pos} outside the span domain")))
}

fn check_target(input: &EncoderInput, t: &TrainTarget) -> Result<()> {
    let n = input.len();
    let bad = |what: &str, pos: usize| Err(Error::ShapeMismatch(format!("{what} position {pos} out of range for {n} tokens")));
    for s in &t.slots {
        if s.question_pos >= n {
            return bad("question", s.question_pos);
        }
        domain_index(&t.domain, s.start)?;
        domain_index(&t.domain, s.end)?;
    }
    for &(pos, _) in &t.mlm {
        if pos >= n {
            return bad("mlm", pos);
        }
    }
    Ok(())
}

struct Forward {
    enc: Encoded,
    report: LossReport,
}

fn forward(p: &ModelParams, input: &EncoderInput, t: &TrainTarget, terms: LossTerms) -> Result<Forward> {
    check_target(input, t)?;
    let enc = encode(p, input)?;
    let h = &enc.h;
    let mut l_sr = 0.0;
    if terms.span {
        for s in &t.slots {
            let lg = span_logits(p, h, s.question_pos, &t.domain)?;
            let (ps, pe) = lg.probs();
            l_sr -= ps[domain_index(&t.domain, s.start)?].ln() + pe[domain_index(&t.domain, s.end)?].ln();
        }
    }
    let l_mlm = if terms.mlm { super::heads::mlm_loss(p, h, &t.mlm) } else { 0.0 };
    let mut l_cell = 0.0;
    if let (true, Some(c)) = (terms.cell, &t.cell) {
        let s = cell_scores(p, h, &c.layout, c.question_pos)?;
        l_cell = super::heads::cell_loss(&s, &c.layout, c.row, c.col)?;
    }
    Ok(Forward {
        enc,
        report: LossReport::new(l_sr, l_mlm, l_cell),
    })
}

pub fn loss(p: &ModelParams, input: &EncoderInput, t: &TrainTarget) -> Result<LossReport> {
    Ok(forward(p, input, t, LossTerms::default())?.report)
}

pub fn loss_with(p: &ModelParams, input: &EncoderInput, t: &TrainTarget, terms: LossTerms) -> Result<LossReport> {
    Ok(forward(p, input, t, terms)?.report)
}

/// Loss and the gradient of `total` for every parameter.
pub fn backward(p: &ModelParams, input: &EncoderInput, t: &TrainTarget) -> Result<(LossReport, ModelParams)> {
    backward_with(p, input, t, LossTerms::default())
}

pub fn backward_with(p: &ModelParams, input: &EncoderInput, t: &TrainTarget, terms: LossTerms) -> Result<(LossReport, ModelParams)> {
    let fw = forward(p, input, t, terms)?;
    let mut g = p.zeros_like();
    let h = &fw.enc.h;
    let d = p.config.d;
    let n = input.len();
    let mut dh = vec![0.0; n * d];

    if terms.span {
        for s in &t.slots {
            let lg = span_logits(p, h, s.question_pos, &t.domain)?;
            let gs = domain_index(&t.domain, s.start)?;
            let ge = domain_index(&t.domain, s.end)?;
            bilinear_ce_backward(h, s.question_pos, &t.domain, &lg.f_start, gs, &p.w_start, &mut g.w_start, &mut dh, d);
            bilinear_ce_backward(h, s.question_pos, &t.domain, &lg.f_end, ge, &p.w_end, &mut g.w_end, &mut dh, d);
        }
    }

    if terms.mlm && !t.mlm.is_empty() {
        let v = p.config.vocab_size;
        let inv = 1.0 / t.mlm.len() as f64;
        for &(pos, id) in &t.mlm {
            let mut dl = softmax(&mlm_logits(p, h, pos));
            dl[id as usize] -= 1.0;
            dl.iter_mut().for_each(|x| *x *= inv);
            axpy(1.0, &dl, &mut g.mlm_b.data);
            outer_acc(h.row(pos), &dl, &mut g.mlm_w.data);
            let dhp = matvec(&p.mlm_w.data, d, v, &dl);
            axpy(1.0, &dhp, &mut dh[pos * d..(pos + 1) * d]);
        }
    }

    if let (true, Some(c)) = (terms.cell, &t.cell) {
        let s = cell_scores(p, h, &c.layout, c.question_pos)?;
        cell_backward(p, h, c, &s, &mut g, &mut dh)?;
    }

    encoder_backward(p, input, &fw.enc, &dh, &mut g);
    Ok((fw.report, g))
}

/// Gradient of `-log softmax(f)[gold]` with `f(k) = H[k]^T W H[q]`.
#[allow(clippy::too_many_arguments)]
fn bilinear_ce_backward(
    h: &Tensor,
    q: usize,
    domain: &[usize],
    logits: &[f64],
    gold: usize,
    w: &Tensor,
    gw: &mut Tensor,
    dh: &mut [f64],
    d: usize,
) {
    let mut df = softmax(logits);
    df[gold] -= 1.0;
    let hq = h.row(q).to_vec();
    let u = matvec(&w.data, d, d, &hq);
    // du = sum_k df_k H[k]
    let mut du = vec![0.0; d];
    for (&k, &dk) in domain.iter().zip(&df) {
        axpy(dk, h.row(k), &mut du);
        axpy(dk, &u, &mut dh[k * d..(k + 1) * d]);
    }
    outer_acc(&du, &hq, &mut gw.data);
    let dq = matvec_t(&w.data, d, d, &du);
    axpy(1.0, &dq, &mut dh[q * d..(q + 1) * d]);
}

fn cell_backward(p: &ModelParams, h: &Tensor, c: &CellGold, s: &CellScores, g: &mut ModelParams, dh: &mut [f64]) -> Result<()> {
    let d = p.config.d;
    let (cell, r, k) = cell_target_indices(s, &c.layout, c.row, c.col)?;
    let q = c.question_pos;
    let hq = h.row(q).to_vec();

    let mut dt = s.p_token.clone();
    dt[cell] -= 1.0;
    let mut dr = s.p_row.clone();
    dr[r] -= 1.0;
    let mut dc = s.p_col.clone();
    dc[k] -= 1.0;

    // per-cell upstream gradients for the three bilinear maps
    let n_cells = c.layout.cells.len();
    let mut d_row_cell = vec![0.0; n_cells];
    for (j, &arg) in s.row_argmax.iter().enumerate() {
        d_row_cell[arg] += dr[j];
    }
    let mut d_col_cell = vec![0.0; n_cells];
    for (j, &arg) in s.col_argmax.iter().enumerate() {
        d_col_cell[arg] += dc[j];
    }

    let maps: [(&Tensor, Vec<(usize, f64)>); 3] = [
        (&p.w_tok, c.layout.cells.iter().zip(&dt).map(|(ct, &v)| (ct.positions[0], v)).collect()),
        (
            &p.w_row,
            c.layout
                .cells
                .iter()
                .zip(&d_row_cell)
                .flat_map(|(ct, &v)| ct.positions.iter().map(move |&i| (i, v / ct.positions.len() as f64)))
                .collect(),
        ),
        (
            &p.w_col,
            c.layout
                .cells
                .iter()
                .zip(&d_col_cell)
                .flat_map(|(ct, &v)| ct.positions.iter().map(move |&i| (i, v / ct.positions.len() as f64)))
                .collect(),
        ),
    ];
    let mut grads = [vec![0.0; d * d], vec![0.0; d * d], vec![0.0; d * d]];
    for (m, (w, weights)) in maps.iter().enumerate() {
        let u = matvec(&w.data, d, d, &hq);
        let mut du = vec![0.0; d];
        for &(i, wt) in weights {
            if wt == 0.0 {
                continue;
            }
            axpy(wt, h.row(i), &mut du);
            axpy(wt, &u, &mut dh[i * d..(i + 1) * d]);
        }
        outer_acc(&du, &hq, &mut grads[m]);
        let dq = matvec_t(&w.data, d, d, &du);
        axpy(1.0, &dq, &mut dh[q * d..(q + 1) * d]);
    }
    let [gt, gr, gc] = grads;
    axpy(1.0, &gt, &mut g.w_tok.data);
    axpy(1.0, &gr, &mut g.w_row.data);
    axpy(1.0, &gc, &mut g.w_col.data);
    Ok(())
}
