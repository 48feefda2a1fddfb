//! Cross-level reuse scoring and single-jump selection.
//!
//! A jump trained for level `m` can be applied to hidden states from any
//! exit level `k`: normalize with jump `m`'s running statistics, then apply
//! its `A` and `B`. The signed sensitive cosine similarity scores how well
//! that reuse approximates the true final representation over every record
//! and every exit level: each term is `sgn(C) * C^2` for the cosine `C`
//! between approximation and truth, which sharpens the influence of very
//! good and very bad directions while discounting near-orthogonal ones.
//! The jump with the highest mean score is the single one kept at
//! inference; everything else can be discarded.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::JumpBank;
use crate::corpus::HiddenCorpus;
use crate::error::Error;
use crate::jump::{run_training, JumpMode, LowRankJump, TrainSettings, TrainedJump};
use crate::num::{cosine, softmax, Rng};
use crate::Result;

/// Default temperature for the reported score distribution; low enough that
/// the softmax is effectively an argmax indicator.
pub const SCORE_TEMPERATURE: f64 = 5e-4;

/// Per-jump reuse scores and the selected level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReuseScoreTable {
    /// Exit level each scored jump was trained for, ascending.
    pub levels: Vec<usize>,
    /// Mean signed squared cosine per jump, aligned with `levels`.
    pub d_scores: Vec<f64>,
    /// `mean_cosine[j][k]`: mean raw cosine of jump `levels[j]` applied at
    /// exit level `k`, over all records.
    pub mean_cosine: Vec<Vec<f64>>,
    /// Selected level: argmax of `d_scores`, ties toward the smallest level.
    pub chosen: usize,
}

/// Apply jump `m`'s parameters to a hidden vector from any exit level.
/// The jump must be in infer mode (its running statistics are the
/// normalizer). For `k == m` this is exactly the jump's own infer-mode
/// forward.
pub fn reuse_approximation(jump: &LowRankJump, hidden: &[f64]) -> Result<Vec<f64>> {
    if jump.mode != JumpMode::Infer {
        return Err(Error::WrongMode {
            op: "reuse_approximation",
            required: "infer",
            actual: "train",
        });
    }
    jump.apply_vec(hidden)
}

/// Signed squared cosine with the zero-norm convention: a zero-norm
/// approximation or target counts as orthogonal and contributes nothing.
fn signed_sq_cosine(approx: &[f64], target: &[f64]) -> Result<f64> {
    match cosine(approx, target) {
        Ok(c) => Ok(c.signum() * c * c),
        Err(Error::ZeroNorm(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn raw_cosine(approx: &[f64], target: &[f64]) -> Result<f64> {
    match cosine(approx, target) {
        Ok(c) => Ok(c),
        Err(Error::ZeroNorm(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Score one jump over every record and exit level. Returns the mean
/// signed squared cosine and, per exit level, the mean raw cosine.
/// Records fan out in parallel; the reduction runs in record order.
fn score_jump(jump: &LowRankJump, corpus: &HiddenCorpus) -> Result<(f64, Vec<f64>)> {
    let k_levels = corpus.num_blocks;
    let final_level = corpus.num_blocks;
    let per_record: Vec<Result<(f64, Vec<f64>)>> = corpus
        .records
        .par_iter()
        .map(|rec| {
            let target = &rec.levels[final_level];
            let mut signed_sum = 0.0;
            let mut cos_by_level = vec![0.0; k_levels];
            for (k, slot) in cos_by_level.iter_mut().enumerate() {
                let approx = reuse_approximation(jump, &rec.levels[k])?;
                signed_sum += signed_sq_cosine(&approx, target)?;
                *slot = raw_cosine(&approx, target)?;
            }
            Ok((signed_sum, cos_by_level))
        })
        .collect();

    let n = corpus.len() as f64;
    let mut total = 0.0;
    let mut mean_cos = vec![0.0; k_levels];
    for item in per_record {
        let (signed_sum, cos_by_level) = item?;
        total += signed_sum;
        for (acc, c) in mean_cos.iter_mut().zip(cos_by_level) {
            *acc += c;
        }
    }
    for c in &mut mean_cos {
        *c /= n;
    }
    Ok((total / (n * k_levels as f64), mean_cos))
}

/// Mean signed squared cosine of jump `m` reused at every exit level of the
/// corpus. Higher is better; the value lies in `[-1, 1]`.
pub fn sscs_score(jump: &LowRankJump, corpus: &HiddenCorpus) -> Result<f64> {
    if corpus.is_empty() || corpus.num_blocks == 0 {
        return Err(Error::Empty("sscs_score"));
    }
    Ok(score_jump(jump, corpus)?.0)
}

/// Score every jump in the bank and select the level with the highest
/// score, ties broken toward the smallest level. Selection runs on the
/// training split; the test split stays untouched for evaluation.
pub fn select_ojfa(bank: &JumpBank, corpus: &HiddenCorpus) -> Result<ReuseScoreTable> {
    if bank.jumps.is_empty() {
        return Err(Error::Empty("select_ojfa"));
    }
    if corpus.is_empty() || corpus.num_blocks == 0 {
        return Err(Error::Empty("select_ojfa corpus"));
    }
    let scored: Vec<Result<(f64, Vec<f64>)>> = bank
        .jumps
        .par_iter()
        .map(|jump| score_jump(jump, corpus))
        .collect();
    let mut levels = Vec::with_capacity(bank.jumps.len());
    let mut d_scores = Vec::with_capacity(bank.jumps.len());
    let mut mean_cosine = Vec::with_capacity(bank.jumps.len());
    for (jump, item) in bank.jumps.iter().zip(scored) {
        let (d, cos) = item?;
        levels.push(jump.level);
        d_scores.push(d);
        mean_cosine.push(cos);
    }
    // Strictly-greater comparison in ascending level order keeps the
    // smallest level on ties.
    let mut best = 0usize;
    for i in 1..d_scores.len() {
        if d_scores[i] > d_scores[best] {
            best = i;
        }
    }
    Ok(ReuseScoreTable {
        chosen: levels[best],
        levels,
        d_scores,
        mean_cosine,
    })
}

/// Softmax of the reuse scores at the given temperature, for reporting.
pub fn score_distribution(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    softmax(scores, temperature)
}

/// Train the joint baseline: one jump with the usual architecture and
/// recipe, but trained on pairs `(h^k_i, h^K_i)` pooled over every exit
/// level. The returned jump carries the sentinel level `K`.
pub fn train_joint_jump(
    corpus: &HiddenCorpus,
    settings: &TrainSettings,
    rank: Option<usize>,
) -> Result<TrainedJump> {
    settings.validate()?;
    let pooled = corpus.len() * corpus.num_blocks;
    if settings.batch_size > pooled {
        return Err(Error::InvalidArgument {
            name: "batch_size",
            message: format!(
                "batch size {} exceeds pooled pair count {pooled}",
                settings.batch_size
            ),
        });
    }
    let rank = rank.unwrap_or_else(|| crate::jump::default_rank(corpus.hidden));
    let sentinel = corpus.num_blocks;
    let mut rng = Rng::derive(settings.seed, sentinel as u64);
    let mut jump = LowRankJump::new(sentinel, corpus.hidden, rank, &mut rng)?;
    jump.momentum = settings.bn_momentum;
    let mut pairs = Vec::with_capacity(pooled);
    for rec in 0..corpus.len() {
        for level in 0..corpus.num_blocks {
            pairs.push((rec, level));
        }
    }
    run_training(jump, &pairs, corpus, settings, rng)
}
