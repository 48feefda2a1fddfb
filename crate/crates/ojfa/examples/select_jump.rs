//! Score every trained jump for cross-level reuse and keep the single best
//! one. The kept jump serves every exit level at inference, dividing the
//! shortcut parameter cost by the number of levels.
//!
//! ```bash
//! cargo run --release -p ojfa --example select_jump
//! ```

use ojfa::bank::JumpBank;
use ojfa::corpus::build_corpus;
use ojfa::jump::{train_jump, TrainSettings};
use ojfa::model::{init_model, TransformerConfig};
use ojfa::num::Rng;
use ojfa::pipeline::synthetic_texts;
use ojfa::select::{score_distribution, select_ojfa, SCORE_TEMPERATURE};

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

    let table = select_ojfa(&bank, &corpus)?;
    let sharp = score_distribution(&table.d_scores, SCORE_TEMPERATURE)?;
    println!("jump  D-score     softmax(T=5e-4)");
    for ((level, d), p) in table.levels.iter().zip(&table.d_scores).zip(&sharp) {
        let marker = if *level == table.chosen {
            "  <- chosen"
        } else {
            ""
        };
        println!("  {level:2}  {d:9.6}  {p:14.3e}{marker}");
    }

    let pruned = bank.pruned_to(table.chosen)?;
    println!(
        "kept jump {} of {}: {} parameters instead of {} ({}x reduction)",
        table.chosen,
        bank.level_count,
        pruned.param_count(),
        bank.param_count(),
        bank.param_count() / pruned.param_count()
    );

    let json = serde_json::to_string_pretty(&table).expect("score table serializes");
    let path = std::env::temp_dir().join("ojfa_example_scores.json");
    std::fs::write(&path, json).expect("score table writes");
    println!("score table saved to {}", path.display());
    Ok(())
}
