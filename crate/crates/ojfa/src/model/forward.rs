//! Forward pass with per-block hidden-state tracing.

use super::{head, layer_norm_row, BlockWeights, HiddenTrace, TransformerWeights};
use crate::error::Error;
use crate::num::{softmax, Matrix};
use crate::Result;

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

/// `x W + b`, bias broadcast over rows.
fn linear(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut out = x.matmul(w)?;
    for i in 0..out.rows() {
        for (o, &bias) in out.row_mut(i).iter_mut().zip(b) {
            *o += bias;
        }
    }
    Ok(out)
}

fn layer_norm(x: &Matrix, gain: &[f64], bias: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let normed = layer_norm_row(x.row(i), gain, bias);
        out.row_mut(i).copy_from_slice(&normed);
    }
    out
}

/// Causal multi-head self-attention. Position `p` attends only to positions
/// `0..=p`, and the attention sum runs in ascending position order, so the
/// output at `p` is bit-identical no matter how many positions follow it.
fn causal_attention(x: &Matrix, block: &BlockWeights, num_heads: usize) -> Result<Matrix> {
    let n = x.rows();
    let h = x.cols();
    let d = h / num_heads;
    let q = linear(x, &block.w_q, &block.b_q)?;
    let k = linear(x, &block.w_k, &block.b_k)?;
    let v = linear(x, &block.w_v, &block.b_v)?;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();

    let mut mixed = Matrix::zeros(n, h);
    for head_idx in 0..num_heads {
        let lo = head_idx * d;
        let hi = lo + d;
        for p in 0..n {
            let q_p = &q.row(p)[lo..hi];
            let mut scores = Vec::with_capacity(p + 1);
            for src in 0..=p {
                let k_s = &k.row(src)[lo..hi];
                let dot: f64 = q_p.iter().zip(k_s).map(|(a, b)| a * b).sum();
                scores.push(dot * inv_sqrt_d);
            }
            let attn = softmax(&scores, 1.0)?;
            let out_p = &mut mixed.row_mut(p)[lo..hi];
            for (src, &weight) in attn.iter().enumerate() {
                let v_s = &v.row(src)[lo..hi];
                for (o, &val) in out_p.iter_mut().zip(v_s) {
                    *o += weight * val;
                }
            }
        }
    }
    linear(&mixed, &block.w_o, &block.b_o)
}

fn feed_forward(x: &Matrix, block: &BlockWeights) -> Result<Matrix> {
    let mut inner = linear(x, &block.w_ff1, &block.b_ff1)?;
    for i in 0..inner.rows() {
        for v in inner.row_mut(i) {
            *v = gelu(*v);
        }
    }
    linear(&inner, &block.w_ff2, &block.b_ff2)
}

/// Forward-pass a token sequence, capturing the residual stream after the
/// embedding (level 0) and after every block (levels `1..=K`), plus final
/// logits from the model head.
pub fn forward_trace(weights: &TransformerWeights, tokens: &[usize]) -> Result<HiddenTrace> {
    let cfg = &weights.config;
    if tokens.is_empty() {
        return Err(Error::Empty("forward_trace"));
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::InvalidArgument {
            name: "tokens",
            message: format!(
                "sequence length {} exceeds max_seq_len {}",
                tokens.len(),
                cfg.max_seq_len
            ),
        });
    }
    for &t in tokens {
        if t >= cfg.vocab_size {
            return Err(Error::TokenOutOfRange {
                token: t,
                vocab: cfg.vocab_size,
            });
        }
    }

    let n = tokens.len();
    let h = cfg.hidden_dim;
    let mut x = Matrix::zeros(n, h);
    for (p, &t) in tokens.iter().enumerate() {
        let tok_row = weights.tok_embed.row(t);
        let pos_row = weights.pos_embed.row(p);
        for (out, (&a, &b)) in x.row_mut(p).iter_mut().zip(tok_row.iter().zip(pos_row)) {
            *out = a + b;
        }
    }

    let mut levels = Vec::with_capacity(cfg.num_blocks + 1);
    levels.push(x.clone());
    for block in &weights.blocks {
        let attn = causal_attention(
            &layer_norm(&x, &block.ln1_gain, &block.ln1_bias),
            block,
            cfg.num_heads,
        )?;
        x = x.add(&attn)?;
        let ff = feed_forward(&layer_norm(&x, &block.ln2_gain, &block.ln2_bias), block)?;
        x = x.add(&ff)?;
        levels.push(x.clone());
    }

    let mut logits = Matrix::zeros(n, cfg.vocab_size);
    for p in 0..n {
        let row_logits = head(weights, x.row(p))?;
        logits.row_mut(p).copy_from_slice(&row_logits);
    }

    Ok(HiddenTrace { levels, logits })
}
