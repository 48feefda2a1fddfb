//! Train one low-rank shortcut jump per exit level and save the bank.
//!
//! ```bash
//! cargo run --release -p ojfa --example train_shortcuts
//! ```

use ojfa::bank::{save_bank, JumpBank};
use ojfa::corpus::build_corpus;
use ojfa::jump::{count_bank_params, count_jump_params, default_rank, train_jump, TrainSettings};
use ojfa::model::{init_model, TransformerConfig};
use ojfa::num::Rng;
use ojfa::pipeline::synthetic_texts;

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

    // H = 64 floors to rank 0 under the H/100 rule, so the clamp kicks in;
    // override to something more expressive for the demo.
    let rank = 12;
    println!(
        "rank rule would give {}, training at rank {rank}",
        default_rank(config.hidden_dim)
    );
    println!(
        "per-jump parameters: {} | full bank of {}: {}",
        count_jump_params(config.hidden_dim, rank),
        config.num_blocks,
        count_bank_params(config.hidden_dim, rank, config.num_blocks)
    );

    let settings = TrainSettings {
        epochs: 80,
        learning_rate: 2e-3,
        batch_size: 64,
        seed: 5,
        ..TrainSettings::default()
    };
    let mut jumps = Vec::new();
    for level in 0..config.num_blocks {
        let trained = train_jump(level, &corpus, &settings, Some(rank))?;
        println!(
            "level {level}: mse {:9.4} -> {:9.4}  ({:5.1}x down)",
            trained.initial_loss,
            trained.final_loss,
            trained.initial_loss / trained.final_loss
        );
        jumps.push(trained.jump);
    }

    let bank = JumpBank::new(config.num_blocks, jumps, None)?;
    let path = std::env::temp_dir().join("ojfa_example_bank.ojfs");
    save_bank(&bank, &path)?;
    println!("bank saved to {}", path.display());
    Ok(())
}
