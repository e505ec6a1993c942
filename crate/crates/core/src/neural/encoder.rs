//! Pre-norm transformer encoder with a hand-written backward pass.
//!
//! Input embedding is the sum of token, position, segment, row and column
//! embeddings. Each layer computes `x + attn(ln1(x))` then `x + ff(ln2(x))`
//! with a ReLU feed-forward block, and a final layer norm produces `H`.

use super::params::{LayerParams, ModelParams};
use super::tensor::{axpy, dot, matmul, matmul_a_bt, matmul_at_b_acc, Tensor};
use crate::error::{Error, Result};
use crate::example_gen::{PretrainExample, PAD};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderInput {
    pub token_ids: Vec<u32>,
    pub segment: Vec<u8>,
    pub row: Vec<u32>,
    pub col: Vec<u32>,
    pub position: Vec<u32>,
}

impl EncoderInput {
    /// Plain text input: positions `0..n`, no table coordinates.
    pub fn new(token_ids: Vec<u32>, segment: Vec<u8>) -> Self {
        let n = token_ids.len();
        EncoderInput {
            token_ids,
            segment,
            row: vec![0; n],
            col: vec![0; n],
            position: (0..n as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        let n = self.len();
        let c = &p.config;
        if [self.segment.len(), self.row.len(), self.col.len(), self.position.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::ShapeMismatch("token type arrays differ in length from token_ids".into()));
        }
        if n > c.max_positions {
            return Err(Error::ShapeMismatch(format!("{n} tokens exceed {} positions", c.max_positions)));
        }
        let bad = |what: &str, v: usize, max: usize| {
            Err(Error::ShapeMismatch(format!("{what} id {v} out of range (< {max})")))
        };
        for i in 0..n {
            if self.token_ids[i] as usize >= c.vocab_size {
                return bad("token", self.token_ids[i] as usize, c.vocab_size);
            }
            if self.segment[i] > 1 {
                return bad("segment", self.segment[i] as usize, 2);
            }
            if self.row[i] as usize > c.max_rows {
                return bad("row", self.row[i] as usize, c.max_rows + 1);
            }
            if self.col[i] as usize > c.max_cols {
                return bad("col", self.col[i] as usize, c.max_cols + 1);
            }
            if self.position[i] as usize >= c.max_positions {
                return bad("position", self.position[i] as usize, c.max_positions);
            }
        }
        Ok(())
    }
}

impl From<&PretrainExample> for EncoderInput {
    fn from(ex: &PretrainExample) -> Self {
        EncoderInput {
            token_ids: ex.token_ids.clone(),
            segment: ex.token_types.segment.clone(),
            row: ex.token_types.row.clone(),
            col: ex.token_types.col.clone(),
            position: ex.token_types.position.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &[f64], n: usize, d: usize, g: &[f64], b: &[f64], eps: f64) -> (Vec<f64>, NormCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[i] = is;
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat[i * d + j] = h;
            y[i * d + j] = g[j] * h + b[j];
        }
    }
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &[f64], c: &NormCache, n: usize, d: usize, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let xh = &c.xhat[i * d..(i + 1) * d];
        let dyi = &dy[i * d..(i + 1) * d];
        for j in 0..d {
            dg[j] += dyi[j] * xh[j];
            db[j] += dyi[j];
            dxhat[j] = dyi[j] * g[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dot(&dxhat, xh) / d as f64;
        for j in 0..d {
            dx[i * d + j] = c.inv_std[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

fn add_bias(x: &mut [f64], b: &[f64]) {
    for row in x.chunks_mut(b.len()) {
        axpy(1.0, b, row);
    }
}

fn col_sum_acc(x: &[f64], out: &mut [f64]) {
    for row in x.chunks(out.len()) {
        axpy(1.0, row, out);
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: NormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// heads x n x n attention weights
    probs: Vec<f64>,
    ctx: Vec<f64>,
    ln2: NormCache,
    b: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

/// Encoder output plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// n x d contextual vectors.
    pub h: Tensor,
    /// Key positions that attention may look at.
    pub attend: Vec<bool>,
    layers: Vec<LayerCache>,
    lnf: NormCache,
}

pub fn encode(p: &ModelParams, input: &EncoderInput) -> Result<Encoded> {
    input.validate(p)?;
    let n = input.len();
    let d = p.config.d;
    let eps = p.config.ln_eps;
    let mut x = vec![0.0; n * d];
    for i in 0..n {
        let row = &mut x[i * d..(i + 1) * d];
        axpy(1.0, p.tok_emb.row(input.token_ids[i] as usize), row);
        axpy(1.0, p.pos_emb.row(input.position[i] as usize), row);
        axpy(1.0, p.seg_emb.row(input.segment[i] as usize), row);
        axpy(1.0, p.row_emb.row(input.row[i] as usize), row);
        axpy(1.0, p.col_emb.row(input.col[i] as usize), row);
    }
    let attend: Vec<bool> = input.token_ids.iter().map(|&t| t != PAD).collect();
    let mut layers = Vec::with_capacity(p.layers.len());
    for lp in &p.layers {
        let (cache, out) = layer_forward(p, lp, &x, n, &attend);
        layers.push(cache);
        x = out;
    }
    let (h, lnf) = layer_norm(&x, n, d, &p.lnf_g.data, &p.lnf_b.data, eps);
    Ok(Encoded {
        h: Tensor { shape: vec![n, d], data: h },
        attend,
        layers,
        lnf,
    })
}

fn layer_forward(p: &ModelParams, lp: &LayerParams, x: &[f64], n: usize, attend: &[bool]) -> (LayerCache, Vec<f64>) {
    let d = p.config.d;
    let heads = p.config.heads;
    let dh = p.config.head_dim();
    let dff = p.config.d_ff;
    let scale = 1.0 / (dh as f64).sqrt();
    let (a, ln1) = layer_norm(x, n, d, &lp.ln1_g.data, &lp.ln1_b.data, p.config.ln_eps);
    let mut q = matmul(&a, n, d, &lp.wq.data, d);
    add_bias(&mut q, &lp.bq.data);
    let mut k = matmul(&a, n, d, &lp.wk.data, d);
    add_bias(&mut k, &lp.bk.data);
    let mut v = matmul(&a, n, d, &lp.wv.data, d);
    add_bias(&mut v, &lp.bv.data);

    let mut probs = vec![0.0; heads * n * n];
    let mut ctx = vec![0.0; n * d];
    let mut scores = vec![0.0; n];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..n {
            let qi = &q[i * d + off..i * d + off + dh];
            let mut m = f64::NEG_INFINITY;
            for j in 0..n {
                scores[j] = if attend[j] {
                    dot(qi, &k[j * d + off..j * d + off + dh]) * scale
                } else {
                    f64::NEG_INFINITY
                };
                m = m.max(scores[j]);
            }
            let pr = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                pr[j] = if attend[j] { (scores[j] - m).exp() } else { 0.0 };
                s += pr[j];
            }
            let ci = &mut ctx[i * d + off..i * d + off + dh];
            for j in 0..n {
                pr[j] /= s;
                if pr[j] != 0.0 {
                    axpy(pr[j], &v[j * d + off..j * d + off + dh], ci);
                }
            }
        }
    }
    let mut o = matmul(&ctx, n, d, &lp.wo.data, d);
    add_bias(&mut o, &lp.bo.data);
    let mut x_mid = x.to_vec();
    axpy(1.0, &o, &mut x_mid);

    let (b, ln2) = layer_norm(&x_mid, n, d, &lp.ln2_g.data, &lp.ln2_b.data, p.config.ln_eps);
    let mut pre = matmul(&b, n, d, &lp.w1.data, dff);
    add_bias(&mut pre, &lp.b1.data);
    let act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
    let mut f = matmul(&act, n, dff, &lp.w2.data, d);
    add_bias(&mut f, &lp.b2.data);
    let mut out = x_mid;
    axpy(1.0, &f, &mut out);
    (
        LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            ln2,
            b,
            pre,
            act,
        },
        out,
    )
}

/// Accumulates into `grads` the gradient of a scalar loss given `dh`,
/// the loss gradient with respect to the encoder output.
pub fn encoder_backward(p: &ModelParams, input: &EncoderInput, enc: &Encoded, dh: &[f64], grads: &mut ModelParams) {
    let n = input.len();
    let d = p.config.d;
    let mut dx = layer_norm_backward(dh, &enc.lnf, n, d, &p.lnf_g.data, &mut grads.lnf_g.data, &mut grads.lnf_b.data);
    for (li, lp) in p.layers.iter().enumerate().rev() {
        dx = layer_backward(p, lp, &enc.layers[li], &enc.attend, n, dx, &mut grads.layers[li]);
    }
    for i in 0..n {
        let g = &dx[i * d..(i + 1) * d];
        axpy(1.0, g, grads.tok_emb.row_mut(input.token_ids[i] as usize));
        axpy(1.0, g, grads.pos_emb.row_mut(input.position[i] as usize));
        axpy(1.0, g, grads.seg_emb.row_mut(input.segment[i] as usize));
        axpy(1.0, g, grads.row_emb.row_mut(input.row[i] as usize));
        axpy(1.0, g, grads.col_emb.row_mut(input.col[i] as usize));
    }
}

fn layer_backward(
    p: &ModelParams,
    lp: &LayerParams,
    c: &LayerCache,
    attend: &[bool],
    n: usize,
    dout: Vec<f64>,
    g: &mut LayerParams,
) -> Vec<f64> {
    let d = p.config.d;
    let heads = p.config.heads;
    let dh = p.config.head_dim();
    let dff = p.config.d_ff;
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward block
    col_sum_acc(&dout, &mut g.b2.data);
    matmul_at_b_acc(&c.act, n, dff, &dout, d, &mut g.w2.data);
    let mut dpre = matmul_a_bt(&dout, n, d, &lp.w2.data, dff);
    for (dz, z) in dpre.iter_mut().zip(&c.pre) {
        if *z <= 0.0 {
            *dz = 0.0;
        }
    }
    col_sum_acc(&dpre, &mut g.b1.data);
    matmul_at_b_acc(&c.b, n, d, &dpre, dff, &mut g.w1.data);
    let db = matmul_a_bt(&dpre, n, dff, &lp.w1.data, d);
    let mut dx_mid = layer_norm_backward(&db, &c.ln2, n, d, &lp.ln2_g.data, &mut g.ln2_g.data, &mut g.ln2_b.data);
    axpy(1.0, &dout, &mut dx_mid);

    // attention block
    col_sum_acc(&dx_mid, &mut g.bo.data);
    matmul_at_b_acc(&c.ctx, n, d, &dx_mid, d, &mut g.wo.data);
    let dctx = matmul_a_bt(&dx_mid, n, d, &lp.wo.data, d);
    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    let mut dp = vec![0.0; n];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..n {
            let pr = &c.probs[(h * n + i) * n..(h * n + i + 1) * n];
            let dci = &dctx[i * d + off..i * d + off + dh];
            let mut weighted = 0.0;
            for j in 0..n {
                if !attend[j] {
                    dp[j] = 0.0;
                    continue;
                }
                axpy(pr[j], dci, &mut dv[j * d + off..j * d + off + dh]);
                dp[j] = dot(dci, &c.v[j * d + off..j * d + off + dh]);
                weighted += pr[j] * dp[j];
            }
            for j in 0..n {
                if !attend[j] {
                    continue;
                }
                let ds = pr[j] * (dp[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                let (qi, kj) = (i * d + off, j * d + off);
                for t in 0..dh {
                    dq[qi + t] += ds * c.k[kj + t];
                    dk[kj + t] += ds * c.q[qi + t];
                }
            }
        }
    }
    col_sum_acc(&dq, &mut g.bq.data);
    col_sum_acc(&dk, &mut g.bk.data);
    col_sum_acc(&dv, &mut g.bv.data);
    matmul_at_b_acc(&c.a, n, d, &dq, d, &mut g.wq.data);
    matmul_at_b_acc(&c.a, n, d, &dk, d, &mut g.wk.data);
    matmul_at_b_acc(&c.a, n, d, &dv, d, &mut g.wv.data);
    let mut da = matmul_a_bt(&dq, n, d, &lp.wq.data, d);
    axpy(1.0, &matmul_a_bt(&dk, n, d, &lp.wk.data, d), &mut da);
    axpy(1.0, &matmul_a_bt(&dv, n, d, &lp.wv.data, d), &mut da);
    let mut dx = layer_norm_backward(&da, &c.ln1, n, d, &lp.ln1_g.data, &mut g.ln1_g.data, &mut g.ln1_b.data);
    axpy(1.0, &dx_mid, &mut dx);
    dx
}

/// Smallest `|pre-activation|` over all ReLU inputs, for checks that must
/// stay away from the kink.
pub fn min_relu_margin(enc: &Encoded) -> f64 {
    enc.layers
        .iter()
        .flat_map(|l| l.pre.iter())
        .map(|z| z.abs())
        .fold(f64::INFINITY, f64::min)
}
