//! Config-driven end-to-end run: model, corpora, per-level training,
//! single-jump selection, and evaluation, all from one `RunConfig`.
//!
//! ```bash
//! cargo run --release -p ojfa --example full_pipeline
//! ```

use ojfa::jump::TrainSettings;
use ojfa::model::TransformerConfig;
use ojfa::pipeline::{cmd_pipeline, CorpusSettings, ModelSource, RunConfig};

fn main() -> Result<(), ojfa::Error> {
    let out_dir = std::env::temp_dir().join("ojfa_example_pipeline");
    let config = RunConfig {
        model: ModelSource {
            path: None,
            config: TransformerConfig {
                hidden_dim: 64,
                num_blocks: 6,
                num_heads: 4,
                ffn_dim: 128,
                max_seq_len: 48,
                seed: 7,
                ..TransformerConfig::default()
            },
        },
        corpus: CorpusSettings {
            num_texts: 60,
            text_len: 40,
            positions_per_text: 8,
            seed: 99,
            ..CorpusSettings::default()
        },
        train: TrainSettings {
            epochs: 40,
            learning_rate: 2e-3,
            batch_size: 64,
            seed: 5,
            ..TrainSettings::default()
        },
        rank: Some(12),
        out_dir: out_dir.clone(),
        ..RunConfig::default()
    };
    config.validate()?;

    let artifacts = cmd_pipeline(&config)?;
    println!("pipeline wrote {} artifacts:", artifacts.len());
    for path in &artifacts {
        println!("  {}", path.display());
    }

    let scores = std::fs::read_to_string(out_dir.join("scores.json")).expect("scores exist");
    let table: ojfa::select::ReuseScoreTable = serde_json::from_str(&scores).expect("scores parse");
    println!("chosen jump: level {} (D = {:.6})", table.chosen, {
        let idx = table
            .levels
            .iter()
            .position(|&l| l == table.chosen)
            .unwrap();
        table.d_scores[idx]
    });
    println!("full report under {}", out_dir.display());
    Ok(())
}
