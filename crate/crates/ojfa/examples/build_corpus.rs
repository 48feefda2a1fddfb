//! Build a hidden-state corpus from synthetic byte text, split it, and
//! persist both halves as `OJFC` files.
//!
//! ```bash
//! cargo run --release -p ojfa --example build_corpus
//! ```

use ojfa::corpus::{build_corpus, load_corpus, save_corpus, split};
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
    let texts = synthetic_texts(&mut rng, 60, 40, config.vocab_size);
    let corpus = build_corpus(&weights, &texts, 8, &mut rng)?;
    println!(
        "built {} records ({} levels x width {}), {} texts skipped",
        corpus.len(),
        corpus.num_levels(),
        corpus.hidden,
        corpus.skipped_texts
    );

    let (train, test) = split(&corpus, 0.75, &mut rng)?;
    println!("split: {} train / {} test", train.len(), test.len());

    let dir = std::env::temp_dir();
    let train_path = dir.join("ojfa_example_train.ojfc");
    let test_path = dir.join("ojfa_example_test.ojfc");
    save_corpus(&train, &train_path)?;
    save_corpus(&test, &test_path)?;

    // A corpus loads without any model around; this is the same path an
    // externally dumped hidden-state file would take.
    let reloaded = load_corpus(&train_path)?;
    assert_eq!(reloaded.len(), train.len());
    println!("saved {} and {}", train_path.display(), test_path.display());
    Ok(())
}
