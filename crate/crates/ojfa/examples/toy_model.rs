//! Build a seeded toy transformer, trace its per-level hidden states, and
//! round-trip the weights through the `OJFW` format.
//!
//! ```bash
//! cargo run --release -p ojfa --example toy_model
//! ```

use ojfa::model::{forward_trace, head, init_model, load_model, save_model, TransformerConfig};
use ojfa::num::argmax;

fn main() -> Result<(), ojfa::Error> {
    let config = TransformerConfig {
        vocab_size: 256,
        hidden_dim: 64,
        num_blocks: 6,
        num_heads: 4,
        ffn_dim: 128,
        max_seq_len: 32,
        seed: 2024,
    };
    let weights = init_model(&config)?;
    println!(
        "model: H={} K={} heads={} (per-head dim {}), checksum {:016x}",
        config.hidden_dim,
        config.num_blocks,
        config.num_heads,
        weights.head_dim,
        weights.checksum()
    );

    let tokens: Vec<usize> = b"the quick brown fox".iter().map(|&b| b as usize).collect();
    let trace = forward_trace(&weights, &tokens)?;
    println!(
        "trace: {} levels x {} positions x width {}",
        trace.num_levels(),
        tokens.len(),
        trace.levels[0].cols()
    );

    // The final level feeds the model head; intermediate levels are the
    // early-exit entry points.
    let last = tokens.len() - 1;
    for level in 0..trace.num_levels() {
        let logits = head(&weights, trace.level_at(level, last))?;
        let top = argmax(&logits).unwrap();
        println!(
            "  level {level}: head argmax = {top:3} (byte {:?})",
            (top as u8) as char
        );
    }

    // Same seed, same bits.
    let again = init_model(&config)?;
    assert_eq!(weights.checksum(), again.checksum());

    let path = std::env::temp_dir().join("ojfa_example_model.ojfw");
    save_model(&weights, &path)?;
    let loaded = load_model(&path)?;
    assert_eq!(loaded.checksum(), weights.checksum());
    println!("weights round-tripped through {}", path.display());
    Ok(())
}
