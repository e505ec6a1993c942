//! Model configuration and the named parameter set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    /// Row and column embedding tables hold ids `0..=max_rows` / `0..=max_cols`.
    pub max_rows: usize,
    pub max_cols: usize,
    pub init_std: f64,
    pub ln_eps: f64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, d: usize, layers: usize, heads: usize) -> Self {
        ModelConfig {
            vocab_size,
            d,
            layers,
            heads,
            d_ff: 4 * d,
            max_positions: 512,
            max_rows: 256,
            max_cols: 16,
            init_std: 0.02,
            ln_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("d={} must be a positive multiple of heads={}", self.d, self.heads)));
        }
        if self.vocab_size == 0 || self.d_ff == 0 || self.max_positions == 0 {
            return Err(Error::Config("vocab_size, d_ff and max_positions must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Every trainable tensor. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub seg_emb: Tensor,
    pub row_emb: Tensor,
    pub col_emb: Tensor,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Tensor,
    pub lnf_b: Tensor,
    /// Span head: start and end bilinear maps.
    pub w_start: Tensor,
    pub w_end: Tensor,
    /// Cell head: token, row and column bilinear maps.
    pub w_tok: Tensor,
    pub w_row: Tensor,
    pub w_col: Tensor,
    pub mlm_w: Tensor,
    pub mlm_b: Tensor,
}

impl ModelParams {
    /// Weights ~ N(0, init_std), biases and offsets 0, norm scales 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut w = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor {
                shape: shape.to_vec(),
                data: (0..n).map(|_| normal.sample(&mut rng)).collect(),
            }
        };
        let d = config.d;
        let mut p = ModelParams {
            config,
            tok_emb: w(&[config.vocab_size, d]),
            pos_emb: w(&[config.max_positions, d]),
            seg_emb: w(&[2, d]),
            row_emb: w(&[config.max_rows + 1, d]),
            col_emb: w(&[config.max_cols + 1, d]),
            layers: Vec::new(),
            lnf_g: Tensor::filled(&[d], 1.0),
            lnf_b: Tensor::zeros(&[d]),
            w_start: w(&[d, d]),
            w_end: w(&[d, d]),
            w_tok: w(&[d, d]),
            w_row: w(&[d, d]),
            w_col: w(&[d, d]),
            mlm_w: w(&[d, config.vocab_size]),
            mlm_b: Tensor::zeros(&[config.vocab_size]),
        };
        for _ in 0..config.layers {
            let layer = LayerParams {
                ln1_g: Tensor::filled(&[d], 1.0),
                ln1_b: Tensor::zeros(&[d]),
                wq: w(&[d, d]),
                bq: Tensor::zeros(&[d]),
                wk: w(&[d, d]),
                bk: Tensor::zeros(&[d]),
                wv: w(&[d, d]),
                bv: Tensor::zeros(&[d]),
                wo: w(&[d, d]),
                bo: Tensor::zeros(&[d]),
                ln2_g: Tensor::filled(&[d], 1.0),
                ln2_b: Tensor::zeros(&[d]),
                w1: w(&[d, config.d_ff]),
                b1: Tensor::zeros(&[config.d_ff]),
                w2: w(&[config.d_ff, d]),
                b2: Tensor::zeros(&[d]),
            };
            p.layers.push(layer);
        }
        Ok(p)
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.groups_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Parameter groups in a fixed order with stable names.
    pub fn groups(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("embed.token".into(), &self.tok_emb),
            ("embed.position".into(), &self.pos_emb),
            ("embed.segment".into(), &self.seg_emb),
            ("embed.row".into(), &self.row_emb),
            ("embed.col".into(), &self.col_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in [
                ("ln1.scale", &l.ln1_g),
                ("ln1.offset", &l.ln1_b),
                ("attn.wq", &l.wq),
                ("attn.bq", &l.bq),
                ("attn.wk", &l.wk),
                ("attn.bk", &l.bk),
                ("attn.wv", &l.wv),
                ("attn.bv", &l.bv),
                ("attn.wo", &l.wo),
                ("attn.bo", &l.bo),
                ("ln2.scale", &l.ln2_g),
                ("ln2.offset", &l.ln2_b),
                ("ff.w1", &l.w1),
                ("ff.b1", &l.b1),
                ("ff.w2", &l.w2),
                ("ff.b2", &l.b2),
            ] {
                out.push((format!("layer{i}.{name}"), t));
            }
        }
        out.extend([
            ("final_ln.scale".to_string(), &self.lnf_g),
            ("final_ln.offset".to_string(), &self.lnf_b),
            ("span.start".to_string(), &self.w_start),
            ("span.end".to_string(), &self.w_end),
            ("cell.token".to_string(), &self.w_tok),
            ("cell.row".to_string(), &self.w_row),
            ("cell.col".to_string(), &self.w_col),
            ("mlm.weight".to_string(), &self.mlm_w),
            ("mlm.bias".to_string(), &self.mlm_b),
        ]);
        out
    }

    pub fn groups_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("embed.token".into(), &mut self.tok_emb),
            ("embed.position".into(), &mut self.pos_emb),
            ("embed.segment".into(), &mut self.seg_emb),
            ("embed.row".into(), &mut self.row_emb),
            ("embed.col".into(), &mut self.col_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, t) in [
                ("ln1.scale", &mut l.ln1_g),
                ("ln1.offset", &mut l.ln1_b),
                ("attn.wq", &mut l.wq),
                ("attn.bq", &mut l.bq),
                ("attn.wk", &mut l.wk),
                ("attn.bk", &mut l.bk),
                ("attn.wv", &mut l.wv),
                ("attn.bv", &mut l.bv),
                ("attn.wo", &mut l.wo),
                ("attn.bo", &mut l.bo),
                ("ln2.scale", &mut l.ln2_g),
                ("ln2.offset", &mut l.ln2_b),
                ("ff.w1", &mut l.w1),
                ("ff.b1", &mut l.b1),
                ("ff.w2", &mut l.w2),
                ("ff.b2", &mut l.b2),
            ] {
                out.push((format!("layer{i}.{name}"), t));
            }
        }
        out.extend([
            ("final_ln.scale".to_string(), &mut self.lnf_g),
            ("final_ln.offset".to_string(), &mut self.lnf_b),
            ("span.start".to_string(), &mut self.w_start),
            ("span.end".to_string(), &mut self.w_end),
            ("cell.token".to_string(), &mut self.w_tok),
            ("cell.row".to_string(), &mut self.w_row),
            ("cell.col".to_string(), &mut self.w_col),
            ("mlm.weight".to_string(), &mut self.mlm_w),
            ("mlm.bias".to_string(), &mut self.mlm_b),
        ]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.groups().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, t)| t.is_finite())
    }

    /// `self += other`, group by group.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let src = other.groups();
        for ((_, dst), (_, s)) in self.groups_mut().into_iter().zip(src) {
            dst.add_assign(s);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.groups_mut() {
            t.scale(s);
        }
    }

    pub fn check_same_shape(&self, other: &ModelParams) -> Result<()> {
        let a = self.groups();
        let b = other.groups();
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!("{} vs {} parameter groups", a.len(), b.len())));
        }
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            x.check_shape(y).map_err(|_| Error::ShapeMismatch(format!("{name}: {:?} vs {:?}", x.shape, y.shape)))?;
        }
        Ok(())
    }
}
