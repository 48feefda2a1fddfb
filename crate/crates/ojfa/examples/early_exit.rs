//! Sweep the confidence threshold of the early-exit policy: at each level
//! the reused jump's prediction is accepted once its maximum softmax
//! probability reaches the threshold, otherwise the pass continues.
//!
//! ```bash
//! cargo run --release -p ojfa --example early_exit
//! ```

use ojfa::bank::JumpBank;
use ojfa::corpus::build_corpus;
use ojfa::eval::{early_exit_run, ExitPolicy};
use ojfa::jump::{train_jump, TrainSettings};
use ojfa::model::{forward_trace, head, init_model, TransformerConfig};
use ojfa::num::{softmax, Rng};
use ojfa::pipeline::synthetic_texts;
use ojfa::select::{reuse_approximation, select_ojfa};

fn main() -> Result<(), ojfa::Error> {
    let config = TransformerConfig {
        hidden_dim: 64,
        num_blocks: 6,
        num_heads: 4,
        ffn_dim: 128,
        max_seq_len: 48,
        seed: 7,
        ..TransformerConfig::default()
    };
    let weights = init_model(&config)?;
    let mut rng = Rng::new(99);
    let texts = synthetic_texts(&mut rng, 150, 40, config.vocab_size);
    let corpus = build_corpus(&weights, &texts, 8, &mut rng)?;

    let settings = TrainSettings {
        epochs: 80,
        learning_rate: 2e-3,
        batch_size: 64,
        seed: 5,
        ..TrainSettings::default()
    };
    let jumps = (0..config.num_blocks)
        .map(|m| train_jump(m, &corpus, &settings, Some(12)).map(|t| t.jump))
        .collect::<Result<Vec<_>, _>>()?;
    let bank = JumpBank::new(config.num_blocks, jumps, None)?;
    let chosen = select_ojfa(&bank, &corpus)?.chosen;
    let jump = bank.jump_for_level(chosen).expect("chosen jump exists");
    println!(
        "reusing jump {chosen} at every level (K = {})",
        config.num_blocks
    );

    // Per-level confidences for one probe, to anchor the sweep range; an
    // untrained byte-level model is diffuse over 256 tokens, so everything
    // sits far below 1.
    let probes = synthetic_texts(&mut Rng::new(4242), 6, 24, config.vocab_size);
    let demo_tokens: Vec<usize> = probes[0].iter().map(|&b| b as usize).collect();
    let trace = forward_trace(&weights, &demo_tokens)?;
    let last = demo_tokens.len() - 1;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    println!("probe 0, reused-jump confidence at each exit level:");
    for k in 0..config.num_blocks {
        let approx = reuse_approximation(jump, trace.level_at(k, last))?;
        let probs = softmax(&head(&weights, &approx)?, 1.0)?;
        let confidence = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lo = lo.min(confidence);
        hi = hi.max(confidence);
        println!("  level {k}: max prob {confidence:.5}");
    }

    println!("lambda    mean exit level  agreement with full pass");
    for i in 0..=10 {
        let lambda = (lo * 0.9) + (hi * 1.1 - lo * 0.9) * i as f64 / 10.0;
        let mut levels = 0usize;
        let mut agree = 0usize;
        for text in &probes {
            let tokens: Vec<usize> = text.iter().map(|&b| b as usize).collect();
            let outcome = early_exit_run(&weights, ExitPolicy::SingleJump(jump), &tokens, lambda)?;
            let full = early_exit_run(&weights, ExitPolicy::SingleJump(jump), &tokens, 1.0)?;
            levels += outcome.exit_level;
            agree += usize::from(outcome.token == full.token);
        }
        println!(
            "  {lambda:0.5} {:15.2}  {:8.2}",
            levels as f64 / probes.len() as f64,
            agree as f64 / probes.len() as f64
        );
    }
    Ok(())
}
