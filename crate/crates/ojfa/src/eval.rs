//! Precision/surprisal evaluation of exit strategies, and the
//! confidence-threshold early-exit policy.
//!
//! Every strategy is evaluated with fixed exits: at each exit level the
//! shortcut prediction is scored against the model's own final prediction
//! for every test record, unconditionally. Precision is argmax agreement;
//! surprisal is the mean negative log-probability (natural log) that the
//! shortcut distribution assigns to the final distribution's top token.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::JumpBank;
use crate::corpus::HiddenCorpus;
use crate::error::Error;
use crate::jump::LowRankJump;
use crate::model::{forward_trace, head, TransformerWeights};
use crate::num::{argmax, softmax, Matrix};
use crate::select::reuse_approximation;
use crate::Result;

/// Probabilities are clamped below at this value so surprisal stays finite.
pub const PROB_FLOOR: f64 = 1e-12;

/// An exit strategy to evaluate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrategyKind {
    /// Feed `h^k` to the model head unchanged.
    Identity,
    /// Reuse the selected jump at every level.
    Ojfa { level: usize },
    /// Reuse an arbitrarily chosen jump at every level.
    Arbitrary { level: usize },
    /// The jointly-trained jump at every level.
    Joint,
    /// Each level uses its own trained jump.
    FullMultiJump,
}

impl StrategyKind {
    /// Stable label used in CSV/JSON output.
    pub fn label(&self) -> String {
        match self {
            StrategyKind::Identity => "identity".to_string(),
            StrategyKind::Ojfa { .. } => "ojfa".to_string(),
            StrategyKind::Arbitrary { level } => format!("arbitrary:{level}"),
            StrategyKind::Joint => "joint".to_string(),
            StrategyKind::FullMultiJump => "full_multi_jump".to_string(),
        }
    }

    /// Parse a label like `identity`, `ojfa`, `joint`, `full_multi_jump`,
    /// or `arbitrary:<level>`. The OJFA level comes from the selection
    /// result, not the label.
    pub fn parse(label: &str, ojfa_level: Option<usize>) -> Result<StrategyKind> {
        match label {
            "identity" => Ok(StrategyKind::Identity),
            "joint" => Ok(StrategyKind::Joint),
            "full_multi_jump" => Ok(StrategyKind::FullMultiJump),
            "ojfa" => ojfa_level
                .map(|level| StrategyKind::Ojfa { level })
                .ok_or_else(|| Error::MissingJump("ojfa strategy before selection".to_string())),
            other => match other.strip_prefix("arbitrary:") {
                Some(num) => num
                    .parse::<usize>()
                    .map(|level| StrategyKind::Arbitrary { level })
                    .map_err(|_| Error::InvalidArgument {
                        name: "strategy",
                        message: format!("bad arbitrary level in {other:?}"),
                    }),
                None => Err(Error::InvalidArgument {
                    name: "strategy",
                    message: format!("unknown strategy {other:?}"),
                }),
            },
        }
    }
}

/// Metrics for one strategy at one exit level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: usize,
    pub precision: f64,
    pub surprisal: f64,
}

/// Fraction of rows whose shortcut argmax equals the final argmax; argmax
/// ties break toward the smallest token id on both sides.
pub fn precision(shortcut_logits: &Matrix, final_logits: &Matrix) -> Result<f64> {
    check_logit_shapes(shortcut_logits, final_logits, "precision")?;
    let n = shortcut_logits.rows();
    let mut agree = 0usize;
    for i in 0..n {
        if argmax(shortcut_logits.row(i)) == argmax(final_logits.row(i)) {
            agree += 1;
        }
    }
    Ok(agree as f64 / n as f64)
}

/// Mean over rows of `-ln p_shortcut(argmax(final_row))`, with `p` the
/// temperature-1 softmax of the shortcut logits clamped at [`PROB_FLOOR`].
pub fn surprisal(shortcut_logits: &Matrix, final_logits: &Matrix) -> Result<f64> {
    check_logit_shapes(shortcut_logits, final_logits, "surprisal")?;
    let n = shortcut_logits.rows();
    let mut total = 0.0;
    for i in 0..n {
        let probs = softmax(shortcut_logits.row(i), 1.0)?;
        let top = argmax(final_logits.row(i)).expect("non-empty row");
        total += -probs[top].max(PROB_FLOOR).ln();
    }
    Ok(total / n as f64)
}

fn check_logit_shapes(a: &Matrix, b: &Matrix, op: &'static str) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimMismatch {
            op,
            left: format!("{}x{}", a.rows(), a.cols()),
            right: format!("{}x{}", b.rows(), b.cols()),
        });
    }
    if a.rows() == 0 {
        return Err(Error::Empty(op));
    }
    if a.cols() < 2 {
        return Err(Error::InvalidArgument {
            name: "logits",
            message: format!("need at least 2 vocabulary entries, got {}", a.cols()),
        });
    }
    Ok(())
}

fn jump_for(
    kind: &StrategyKind,
    bank: &JumpBank,
    exit_level: usize,
) -> Result<Option<LowRankJump>> {
    let lookup = |level: usize| {
        bank.jump_for_level(level)
            .cloned()
            .ok_or_else(|| Error::MissingJump(format!("level {level}")))
    };
    match kind {
        StrategyKind::Identity => Ok(None),
        StrategyKind::Ojfa { level } | StrategyKind::Arbitrary { level } => {
            lookup(*level).map(Some)
        }
        StrategyKind::FullMultiJump => lookup(exit_level).map(Some),
        StrategyKind::Joint => bank
            .joint
            .clone()
            .ok_or_else(|| Error::MissingJump("joint jump".to_string()))
            .map(Some),
    }
}

/// Evaluate one strategy at every exit level of the corpus. For each level
/// `k`, the approximation is fed through the model head and scored against
/// the head applied to the true final representation.
pub fn evaluate_strategy(
    kind: &StrategyKind,
    weights: &TransformerWeights,
    bank: &JumpBank,
    corpus: &HiddenCorpus,
) -> Result<Vec<LevelMetrics>> {
    if corpus.hidden != weights.config.hidden_dim {
        return Err(Error::DimMismatch {
            op: "evaluate_strategy",
            left: format!("corpus hidden {}", corpus.hidden),
            right: format!("model hidden {}", weights.config.hidden_dim),
        });
    }
    let k_levels = corpus.num_blocks;
    let final_level = corpus.num_blocks;
    let vocab = weights.config.vocab_size;

    let final_rows: Vec<Vec<f64>> = corpus
        .records
        .par_iter()
        .map(|rec| head(weights, &rec.levels[final_level]))
        .collect::<Result<_>>()?;
    let final_logits = rows_to_matrix(final_rows, vocab)?;

    let mut out = Vec::with_capacity(k_levels);
    for k in 0..k_levels {
        let jump = jump_for(kind, bank, k)?;
        let shortcut_rows: Vec<Vec<f64>> = corpus
            .records
            .par_iter()
            .map(|rec| {
                let h_k = &rec.levels[k];
                match &jump {
                    None => head(weights, h_k),
                    Some(j) => head(weights, &reuse_approximation(j, h_k)?),
                }
            })
            .collect::<Result<_>>()?;
        let shortcut_logits = rows_to_matrix(shortcut_rows, vocab)?;
        out.push(LevelMetrics {
            level: k,
            precision: precision(&shortcut_logits, &final_logits)?,
            surprisal: surprisal(&shortcut_logits, &final_logits)?,
        });
    }
    Ok(out)
}

fn rows_to_matrix(rows: Vec<Vec<f64>>, cols: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(row);
    }
    Ok(m)
}

/// Jump source for the early-exit walk.
#[derive(Debug, Clone, Copy)]
pub enum ExitPolicy<'a> {
    /// One jump reused at every level.
    SingleJump(&'a LowRankJump),
    /// Each level uses its own jump from the bank.
    PerLevel(&'a JumpBank),
}

/// Result of one early-exit forward pass.
#[derive(Debug, Clone)]
pub struct ExitOutcome {
    /// First level whose confidence reached the threshold, or `K` when the
    /// pass ran to completion.
    pub exit_level: usize,
    /// Predicted next token at the exit point.
    pub token: usize,
    /// Maximum softmax probability at the exit point.
    pub confidence: f64,
    /// Logits at the exit point.
    pub logits: Vec<f64>,
}

/// Walk exit levels `0..K` in order for the last position of `tokens`,
/// exiting at the first level whose maximum softmax probability reaches
/// `lambda`; otherwise complete the full pass. `lambda` must lie in
/// `[0, 1]`, so `lambda = 0` always exits at level 0 and `lambda = 1`
/// exits early only on exact-certainty distributions.
pub fn early_exit_run(
    weights: &TransformerWeights,
    policy: ExitPolicy<'_>,
    tokens: &[usize],
    lambda: f64,
) -> Result<ExitOutcome> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument {
            name: "lambda",
            message: format!("confidence level must be in [0, 1], got {lambda}"),
        });
    }
    let trace = forward_trace(weights, tokens)?;
    let last = tokens.len() - 1;
    let k_levels = weights.config.num_blocks;

    for k in 0..k_levels {
        let jump = match policy {
            ExitPolicy::SingleJump(j) => j,
            ExitPolicy::PerLevel(bank) => bank
                .jump_for_level(k)
                .ok_or_else(|| Error::MissingJump(format!("level {k}")))?,
        };
        let approx = reuse_approximation(jump, trace.level_at(k, last))?;
        let logits = head(weights, &approx)?;
        let probs = softmax(&logits, 1.0)?;
        let token = argmax(&probs).expect("non-empty vocab");
        let confidence = probs[token];
        if confidence >= lambda {
            return Ok(ExitOutcome {
                exit_level: k,
                token,
                confidence,
                logits,
            });
        }
    }

    let logits = trace.logits.row(last).to_vec();
    let probs = softmax(&logits, 1.0)?;
    let token = argmax(&probs).expect("non-empty vocab");
    Ok(ExitOutcome {
        exit_level: k_levels,
        token,
        confidence: probs[token],
        logits,
    })
}
