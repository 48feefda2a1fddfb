//! Compare every exit strategy on held-out data: the selected single jump,
//! arbitrary jump choices, the jointly-trained jump, identity shortcuts,
//! and the full per-level bank. Emits the CSV/JSON/SVG report files.
//!
//! ```bash
//! cargo run --release -p ojfa --example evaluate_strategies
//! ```

use ojfa::bank::JumpBank;
use ojfa::corpus::{build_corpus, split};
use ojfa::eval::{evaluate_strategy, StrategyKind};
use ojfa::jump::{train_jump, TrainSettings};
use ojfa::model::{init_model, TransformerConfig};
use ojfa::num::Rng;
use ojfa::pipeline::synthetic_texts;
use ojfa::report::{emit_report, EvalReport, ReportFormat, ReportMeta, StrategySeries};
use ojfa::select::{select_ojfa, train_joint_jump};

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
    let full_corpus = build_corpus(&weights, &texts, 8, &mut rng)?;
    let (train, test) = split(&full_corpus, 0.75, &mut rng)?;

    let settings = TrainSettings {
        epochs: 80,
        learning_rate: 2e-3,
        batch_size: 64,
        seed: 5,
        ..TrainSettings::default()
    };
    let rank = Some(12);
    let jumps = (0..config.num_blocks)
        .map(|m| train_jump(m, &train, &settings, rank).map(|t| t.jump))
        .collect::<Result<Vec<_>, _>>()?;
    let joint = train_joint_jump(&train, &settings, rank)?.jump;
    let mut bank = JumpBank::new(config.num_blocks, jumps, Some(joint))?;
    let table = select_ojfa(&bank, &train)?;
    bank.chosen = Some(table.chosen);

    let kinds = vec![
        StrategyKind::Identity,
        StrategyKind::Ojfa {
            level: table.chosen,
        },
        StrategyKind::Arbitrary { level: 0 },
        StrategyKind::Joint,
        StrategyKind::FullMultiJump,
    ];
    let mut strategies = Vec::new();
    for kind in &kinds {
        let per_level = evaluate_strategy(kind, &weights, &bank, &test)?;
        println!("{}:", kind.label());
        for m in &per_level {
            println!(
                "  level {}: precision {:5.3}  surprisal {:6.3}",
                m.level, m.precision, m.surprisal
            );
        }
        strategies.push(StrategySeries {
            label: kind.label(),
            per_level,
        });
    }

    let report = EvalReport {
        meta: ReportMeta {
            n_records: test.len(),
            hidden: test.hidden,
            exit_levels: test.num_blocks,
            ojfa_level: Some(table.chosen),
            ..ReportMeta::default()
        },
        strategies,
        score_table: Some(table),
    };
    let out_dir = std::env::temp_dir().join("ojfa_example_report");
    let written = emit_report(
        &report,
        &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg],
        &out_dir,
    )?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
