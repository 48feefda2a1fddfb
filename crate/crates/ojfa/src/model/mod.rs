//! Seeded decoder-only toy transformer, forward pass only.
//!
//! The model exists to produce per-block hidden states `h^0..h^K` and
//! model-head logits at desk scale; it is never trained. `h^K` is the final
//! block's residual-stream output; the model head owns the final layer norm
//! plus unembedding, so true finals, shortcut approximations, and identity
//! shortcuts all pass through the identical head path. Level 0 is the
//! embedding+positional output before block 1, giving exactly `K` exit
//! levels `{0..K-1}`.
//!
//! Architecture: pre-layer-norm blocks (attention then feed-forward, each
//! with a residual connection), GELU activation, byte-level tokens
//! (one byte = one token, vocab 256 by default). Weights initialize from a
//! seeded scaled normal (scale 0.02) and are rounded through `f32` so that
//! an `OJFW` save/load round trip reproduces the in-memory model exactly.

mod forward;
mod io;

pub use io::{load_model, save_model};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::num::{Matrix, Rng};
use crate::Result;

/// Layer-norm epsilon used everywhere in the model.
pub const LN_EPS: f64 = 1e-5;

/// Shape and seed of a toy transformer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    /// Token vocabulary size; 256 covers byte-level text.
    pub vocab_size: usize,
    /// Residual-stream width `H`.
    pub hidden_dim: usize,
    /// Number of transformer blocks `K`.
    pub num_blocks: usize,
    /// Attention heads per block; must divide `hidden_dim`.
    pub num_heads: usize,
    /// Feed-forward inner width.
    pub ffn_dim: usize,
    /// Longest supported token sequence.
    pub max_seq_len: usize,
    /// Weight-initialization seed.
    pub seed: u64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            vocab_size: 256,
            hidden_dim: 128,
            num_blocks: 8,
            num_heads: 4,
            ffn_dim: 256,
            max_seq_len: 64,
            seed: 42,
        }
    }
}

impl TransformerConfig {
    /// Validate every field, collecting all violations.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.vocab_size < 2 {
            problems.push(format!("vocab_size must be >= 2, got {}", self.vocab_size));
        }
        if self.num_blocks < 2 {
            problems.push(format!("num_blocks must be >= 2, got {}", self.num_blocks));
        }
        if self.hidden_dim == 0 {
            problems.push("hidden_dim must be positive".to_string());
        }
        if self.num_heads == 0 {
            problems.push("num_heads must be positive".to_string());
        } else if !self.hidden_dim.is_multiple_of(self.num_heads) {
            problems.push(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.ffn_dim == 0 {
            problems.push("ffn_dim must be positive".to_string());
        }
        if self.max_seq_len == 0 {
            problems.push("max_seq_len must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

/// Parameters of one transformer block.
#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub w_q: Matrix,
    pub b_q: Vec<f64>,
    pub w_k: Matrix,
    pub b_k: Vec<f64>,
    pub w_v: Matrix,
    pub b_v: Vec<f64>,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w_ff1: Matrix,
    pub b_ff1: Vec<f64>,
    pub w_ff2: Matrix,
    pub b_ff2: Vec<f64>,
}

/// Full model parameters. Immutable after [`init_model`]; forward passes are
/// pure and may run on many inputs in parallel.
#[derive(Debug, Clone)]
pub struct TransformerWeights {
    pub config: TransformerConfig,
    /// Per-head dimension, `hidden_dim / num_heads`.
    pub head_dim: usize,
    pub tok_embed: Matrix,
    pub pos_embed: Matrix,
    pub blocks: Vec<BlockWeights>,
    pub ln_f_gain: Vec<f64>,
    pub ln_f_bias: Vec<f64>,
    pub unembed: Matrix,
}

/// Per-position hidden states at every level plus final logits.
///
/// `levels[0]` is the embedding output (pre-block-1); `levels[k]` for
/// `k = 1..=K` is the residual-stream output of block `k`. Each level is an
/// `n x H` matrix over the `n` input positions.
#[derive(Debug, Clone)]
pub struct HiddenTrace {
    pub levels: Vec<Matrix>,
    /// `n x vocab` logits, the model head applied to `levels[K]`.
    pub logits: Matrix,
}

impl HiddenTrace {
    /// Number of stored levels, `K + 1`.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Hidden vector at `(level, position)`.
    pub fn level_at(&self, level: usize, pos: usize) -> &[f64] {
        self.levels[level].row(pos)
    }
}

fn sample_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| (rng.normal() * scale) as f32 as f64)
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sampled weights are finite")
}

/// Deterministic seeded initialization.
///
/// Sampling order is fixed: token embedding, positional embedding, then per
/// block `W_q, W_k, W_v, W_o, W_ff1, W_ff2`, then the unembedding. Biases
/// start at zero and layer-norm gains at one, so they draw nothing from the
/// stream. Same seed, same bits.
pub fn init_model(config: &TransformerConfig) -> Result<TransformerWeights> {
    config.validate()?;
    let h = config.hidden_dim;
    let mut rng = Rng::new(config.seed);
    let scale = 0.02;

    let tok_embed = sample_matrix(&mut rng, config.vocab_size, h, scale);
    let pos_embed = sample_matrix(&mut rng, config.max_seq_len, h, scale);
    let blocks = (0..config.num_blocks)
        .map(|_| BlockWeights {
            ln1_gain: vec![1.0; h],
            ln1_bias: vec![0.0; h],
            w_q: sample_matrix(&mut rng, h, h, scale),
            b_q: vec![0.0; h],
            w_k: sample_matrix(&mut rng, h, h, scale),
            b_k: vec![0.0; h],
            w_v: sample_matrix(&mut rng, h, h, scale),
            b_v: vec![0.0; h],
            w_o: sample_matrix(&mut rng, h, h, scale),
            b_o: vec![0.0; h],
            ln2_gain: vec![1.0; h],
            ln2_bias: vec![0.0; h],
            w_ff1: sample_matrix(&mut rng, h, config.ffn_dim, scale),
            b_ff1: vec![0.0; config.ffn_dim],
            w_ff2: sample_matrix(&mut rng, config.ffn_dim, h, scale),
            b_ff2: vec![0.0; h],
        })
        .collect();
    let unembed = sample_matrix(&mut rng, h, config.vocab_size, scale);

    Ok(TransformerWeights {
        head_dim: h / config.num_heads,
        config: config.clone(),
        tok_embed,
        pos_embed,
        blocks,
        ln_f_gain: vec![1.0; h],
        ln_f_bias: vec![0.0; h],
        unembed,
    })
}

/// Row-wise layer norm with affine parameters.
pub(crate) fn layer_norm_row(row: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    row.iter()
        .zip(gain.iter().zip(bias))
        .map(|(&x, (&g, &b))| (x - mean) * inv * g + b)
        .collect()
}

/// Model head: final layer norm followed by the unembedding. This is the one
/// path from any `H`-vector (true final, shortcut approximation, or identity
/// shortcut) to next-token logits.
pub fn head(weights: &TransformerWeights, hidden: &[f64]) -> Result<Vec<f64>> {
    let h = weights.config.hidden_dim;
    if hidden.len() != h {
        return Err(Error::DimMismatch {
            op: "head",
            left: format!("hidden length {}", hidden.len()),
            right: format!("model hidden_dim {h}"),
        });
    }
    let normed = layer_norm_row(hidden, &weights.ln_f_gain, &weights.ln_f_bias);
    let vocab = weights.config.vocab_size;
    let mut logits = vec![0.0; vocab];
    for (k, &x) in normed.iter().enumerate() {
        let u_row = weights.unembed.row(k);
        for (l, &u) in logits.iter_mut().zip(u_row) {
            *l += x * u;
        }
    }
    Ok(logits)
}

impl TransformerWeights {
    /// Every weight blob in the fixed `OJFW` serialization order.
    pub(crate) fn ordered_blobs(&self) -> Vec<&[f64]> {
        let mut blobs: Vec<&[f64]> = vec![self.tok_embed.data(), self.pos_embed.data()];
        for block in &self.blocks {
            blobs.push(&block.ln1_gain);
            blobs.push(&block.ln1_bias);
            blobs.push(block.w_q.data());
            blobs.push(&block.b_q);
            blobs.push(block.w_k.data());
            blobs.push(&block.b_k);
            blobs.push(block.w_v.data());
            blobs.push(&block.b_v);
            blobs.push(block.w_o.data());
            blobs.push(&block.b_o);
            blobs.push(&block.ln2_gain);
            blobs.push(&block.ln2_bias);
            blobs.push(block.w_ff1.data());
            blobs.push(&block.b_ff1);
            blobs.push(block.w_ff2.data());
            blobs.push(&block.b_ff2);
        }
        blobs.push(&self.ln_f_gain);
        blobs.push(&self.ln_f_bias);
        blobs.push(self.unembed.data());
        blobs
    }

    /// FNV-1a hash over the 32-bit serialization of all weights.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        for blob in self.ordered_blobs() {
            for &v in blob {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        crate::binio::fnv1a64(&bytes)
    }
}

pub use forward::forward_trace;
