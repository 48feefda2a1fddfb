//! `OJFW` model weights file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "OJFW"
//! version u32      currently 1
//! vocab_size, hidden_dim, num_blocks, num_heads, ffn_dim, max_seq_len  u32 each
//! seed    u64
//! weights little-endian f32 blobs in the order:
//!         tok_embed, pos_embed,
//!         per block: ln1_gain, ln1_bias, W_q, b_q, W_k, b_k, W_v, b_v,
//!                    W_o, b_o, ln2_gain, ln2_bias, W_ff1, b_ff1, W_ff2, b_ff2,
//!         ln_f_gain, ln_f_bias, unembed
//! ```
//!
//! Matrices are row-major. Round trips are bit-exact at 32-bit precision.

use std::path::Path;

use super::{BlockWeights, TransformerConfig, TransformerWeights};
use crate::binio::{BinReader, BinWriter};
use crate::num::Matrix;
use crate::Result;

pub(crate) const MAGIC: &[u8; 4] = b"OJFW";
pub(crate) const VERSION: u32 = 1;

/// Write model weights to an `OJFW` file.
pub fn save_model(weights: &TransformerWeights, path: &Path) -> Result<()> {
    let cfg = &weights.config;
    let mut w = BinWriter::create(path)?;
    w.magic(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(cfg.vocab_size as u32)?;
    w.u32(cfg.hidden_dim as u32)?;
    w.u32(cfg.num_blocks as u32)?;
    w.u32(cfg.num_heads as u32)?;
    w.u32(cfg.ffn_dim as u32)?;
    w.u32(cfg.max_seq_len as u32)?;
    w.u64(cfg.seed)?;
    for blob in weights.ordered_blobs() {
        w.f32_slice(blob)?;
    }
    w.finish()
}

/// Read model weights from an `OJFW` file.
pub fn load_model(path: &Path) -> Result<TransformerWeights> {
    let mut r = BinReader::open(path)?;
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}, expected {VERSION}")));
    }
    let config = TransformerConfig {
        vocab_size: r.u32("vocab_size")? as usize,
        hidden_dim: r.u32("hidden_dim")? as usize,
        num_blocks: r.u32("num_blocks")? as usize,
        num_heads: r.u32("num_heads")? as usize,
        ffn_dim: r.u32("ffn_dim")? as usize,
        max_seq_len: r.u32("max_seq_len")? as usize,
        seed: r.u64("seed")?,
    };
    config.validate()?;
    let h = config.hidden_dim;

    let matrix = |r: &mut BinReader, rows: usize, cols: usize, what: &str| -> Result<Matrix> {
        let data = r.f32_vec(rows * cols, what)?;
        Matrix::from_vec(rows, cols, data)
    };

    let tok_embed = matrix(&mut r, config.vocab_size, h, "tok_embed")?;
    let pos_embed = matrix(&mut r, config.max_seq_len, h, "pos_embed")?;
    let mut blocks = Vec::with_capacity(config.num_blocks);
    for b in 0..config.num_blocks {
        let what = |name: &str| format!("block {b} {name}");
        blocks.push(BlockWeights {
            ln1_gain: r.f32_vec(h, &what("ln1_gain"))?,
            ln1_bias: r.f32_vec(h, &what("ln1_bias"))?,
            w_q: matrix(&mut r, h, h, &what("w_q"))?,
            b_q: r.f32_vec(h, &what("b_q"))?,
            w_k: matrix(&mut r, h, h, &what("w_k"))?,
            b_k: r.f32_vec(h, &what("b_k"))?,
            w_v: matrix(&mut r, h, h, &what("w_v"))?,
            b_v: r.f32_vec(h, &what("b_v"))?,
            w_o: matrix(&mut r, h, h, &what("w_o"))?,
            b_o: r.f32_vec(h, &what("b_o"))?,
            ln2_gain: r.f32_vec(h, &what("ln2_gain"))?,
            ln2_bias: r.f32_vec(h, &what("ln2_bias"))?,
            w_ff1: matrix(&mut r, h, config.ffn_dim, &what("w_ff1"))?,
            b_ff1: r.f32_vec(config.ffn_dim, &what("b_ff1"))?,
            w_ff2: matrix(&mut r, config.ffn_dim, h, &what("w_ff2"))?,
            b_ff2: r.f32_vec(h, &what("b_ff2"))?,
        });
    }
    let ln_f_gain = r.f32_vec(h, "ln_f_gain")?;
    let ln_f_bias = r.f32_vec(h, "ln_f_bias")?;
    let unembed = matrix(&mut r, h, config.vocab_size, "unembed")?;
    r.expect_eof()?;

    Ok(TransformerWeights {
        head_dim: h / config.num_heads,
        config,
        tok_embed,
        pos_embed,
        blocks,
        ln_f_gain,
        ln_f_bias,
        unembed,
    })
}
