//! AdamW and the desk-scale training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::{encode, EncoderInput};
use super::heads::{best_answer, rank_spans, span_logits};
use super::objective::{backward, LossReport, TrainTarget};
use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::example_gen::PretrainExample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamHyper {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One AdamW update with bias-corrected moments and decoupled decay:
/// `w -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)`.
pub fn adamw_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, h: &AdamHyper) -> Result<()> {
    params.check_same_shape(grads)?;
    params.check_same_shape(&state.m)?;
    params.check_same_shape(&state.v)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    let gs = grads.groups();
    let ms = state.m.groups_mut();
    let vs = state.v.groups_mut();
    for ((((_, w), (_, g)), (_, m)), (_, v)) in params.groups_mut().into_iter().zip(gs).zip(ms).zip(vs) {
        for i in 0..w.data.len() {
            let gi = g.data[i];
            m.data[i] = h.beta1 * m.data[i] + (1.0 - h.beta1) * gi;
            v.data[i] = h.beta2 * v.data[i] + (1.0 - h.beta2) * gi * gi;
            let mhat = m.data[i] / c1;
            let vhat = v.data[i] / c2;
            w.data[i] -= h.lr * (mhat / (vhat.sqrt() + h.eps) + h.weight_decay * w.data[i]);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Slot-EM is measured every this many steps (0 = only at the end).
    pub eval_every: usize,
    /// Stop once training slot-EM reaches this value.
    pub stop_at_em: Option<f64>,
    pub max_span_len: usize,
}

impl TrainConfig {
    pub fn toy(vocab_size: usize) -> Self {
        TrainConfig {
            model: ModelConfig::new(vocab_size, 32, 2, 2),
            lr: 5e-4,
            weight_decay: 0.0,
            steps: 500,
            batch_size: 8,
            seed: 0,
            eval_every: 25,
            stop_at_em: Some(0.95),
            max_span_len: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub l_sr: f64,
    pub l_mlm: f64,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot_em: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ModelParams,
    pub trace: Vec<TraceRow>,
    pub steps_run: usize,
    pub final_slot_em: f64,
}

/// Mean loss and gradient over a batch. Per-example work may run in
/// parallel; the reduction runs in batch order.
pub fn batch_gradient(p: &ModelParams, batch: &[(EncoderInput, TrainTarget)]) -> Result<(LossReport, ModelParams)> {
    let parts: Vec<Result<(LossReport, ModelParams)>> = batch.par_iter().map(|(x, t)| backward(p, x, t)).collect();
    let mut report = LossReport::default();
    let mut grads = p.zeros_like();
    for part in parts {
        let (r, g) = part?;
        report.add(&r);
        grads.add_assign(&g);
    }
    let inv = 1.0 / batch.len().max(1) as f64;
    grads.scale(inv);
    Ok((report.scaled(inv), grads))
}

/// Predicted (start, end) per slot, `None` for the null answer.
pub fn predict_slots(p: &ModelParams, ex: &PretrainExample, max_span_len: usize) -> Result<Vec<Option<(usize, usize)>>> {
    let input = EncoderInput::from(ex);
    let enc = encode(p, &input)?;
    let domain = ex.span_domain();
    ex.slots
        .iter()
        .map(|s| {
            let lg = span_logits(p, &enc.h, s.question_pos, &domain)?;
            let ranked = rank_spans(&lg.f_start, &lg.f_end, &domain, max_span_len);
            Ok(best_answer(&ranked).map(|r| (r.start, r.end)))
        })
        .collect()
}

/// Fraction of slots answered correctly: the predicted span has the gold
/// span's tokens, or the null answer for unanswerable slots.
pub fn slot_em(p: &ModelParams, examples: &[PretrainExample], max_span_len: usize) -> Result<f64> {
    let per: Vec<Result<(usize, usize)>> = examples
        .par_iter()
        .map(|ex| {
            let preds = predict_slots(p, ex, max_span_len)?;
            let mut hit = 0;
            for (s, pred) in ex.slots.iter().zip(preds) {
                let ok = match (s.answerable, pred) {
                    (false, None) => true,
                    (true, Some((a, b))) => {
                        let (gs, ge) = s.gold();
                        ex.token_ids[a..=b] == ex.token_ids[gs..=ge]
                    }
                    _ => false,
                };
                hit += ok as usize;
            }
            Ok((hit, ex.slots.len()))
        })
        .collect();
    let (mut hit, mut total) = (0, 0);
    for r in per {
        let (h, t) = r?;
        hit += h;
        total += t;
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Seeded minibatch AdamW over `examples`.
pub fn train_toy(examples: &[PretrainExample], cfg: &TrainConfig) -> Result<TrainResult> {
    if examples.is_empty() {
        return Err(Error::Config("train_toy needs at least one example".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut params = ModelParams::init(cfg.model, cfg.seed)?;
    let data: Vec<(EncoderInput, TrainTarget)> = examples.iter().map(|e| (EncoderInput::from(e), TrainTarget::from(e))).collect();
    for (x, _) in &data {
        x.validate(&params)?;
    }
    let mut state = AdamState::new(&params);
    let hyper = AdamHyper::new(cfg.lr, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut steps_run = 0;
    let mut last_em = None;

    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(data.len()) {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            batch.push(data[order.pop().expect("refilled")].clone());
        }
        let (report, grads) = batch_gradient(&params, &batch)?;
        if !report.total.is_finite() {
            return Err(Error::Divergence { step, loss: report.total });
        }
        adamw_step(&mut params, &grads, &mut state, &hyper)?;
        steps_run = step;
        let evaluate = (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps;
        let em = if evaluate { Some(slot_em(&params, examples, cfg.max_span_len)?) } else { None };
        trace.push(TraceRow {
            step,
            l_sr: report.l_sr,
            l_mlm: report.l_mlm,
            total: report.total,
            slot_em: em,
        });
        if em.is_some() {
            last_em = em;
        }
        if let (Some(e), Some(target)) = (em, cfg.stop_at_em) {
            if e >= target {
                break;
            }
        }
    }
    let final_slot_em = match last_em {
        Some(e) => e,
        None => slot_em(&params, examples, cfg.max_span_len)?,
    };
    Ok(TrainResult {
        params,
        trace,
        steps_run,
        final_slot_em,
    })
}
