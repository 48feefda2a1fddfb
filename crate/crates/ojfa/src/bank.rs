//! Banks of trained jumps and the `OJFS` checkpoint format.
//!
//! A full bank holds one jump per exit level (and optionally the
//! jointly-trained baseline jump, stored with the sentinel level `K`).
//! After selection the bank can be pruned to the single chosen jump,
//! which divides the stored parameter count by exactly `K`.

use std::path::Path;

use crate::binio::{BinReader, BinWriter};
use crate::error::Error;
use crate::jump::{count_jump_params, JumpMode, LowRankJump};
use crate::num::Matrix;
use crate::Result;

pub(crate) const MAGIC: &[u8; 4] = b"OJFS";
pub(crate) const VERSION: u32 = 1;

/// A set of trained jumps sharing `(H, r)`, plus the selection result.
#[derive(Debug, Clone)]
pub struct JumpBank {
    pub hidden: usize,
    pub rank: usize,
    /// Exit-level count `K` of the bank this came from; preserved across
    /// pruning so a single-jump bank still reports its origin.
    pub level_count: usize,
    /// Per-level jumps, ascending by level.
    pub jumps: Vec<LowRankJump>,
    /// Jointly-trained baseline jump, when present (stored level `K`).
    pub joint: Option<LowRankJump>,
    /// Level of the selected single jump, when selection has run.
    pub chosen: Option<usize>,
}

impl JumpBank {
    /// Assemble a bank from per-level jumps; validates shared dimensions.
    pub fn new(
        level_count: usize,
        jumps: Vec<LowRankJump>,
        joint: Option<LowRankJump>,
    ) -> Result<Self> {
        let first = jumps
            .first()
            .or(joint.as_ref())
            .ok_or(Error::Empty("JumpBank"))?;
        let hidden = first.hidden;
        let rank = first.rank;
        for jump in jumps.iter().chain(&joint) {
            if jump.hidden != hidden || jump.rank != rank {
                return Err(Error::DimMismatch {
                    op: "JumpBank",
                    left: format!("hidden {hidden}, rank {rank}"),
                    right: format!("jump with hidden {}, rank {}", jump.hidden, jump.rank),
                });
            }
        }
        let mut bank = JumpBank {
            hidden,
            rank,
            level_count,
            jumps,
            joint,
            chosen: None,
        };
        bank.jumps.sort_by_key(|j| j.level);
        Ok(bank)
    }

    /// The jump trained for exit level `level`, if the bank holds it.
    pub fn jump_for_level(&self, level: usize) -> Option<&LowRankJump> {
        self.jumps.iter().find(|j| j.level == level)
    }

    /// True when every exit level `0..level_count` has its own jump.
    pub fn is_complete(&self) -> bool {
        (0..self.level_count).all(|k| self.jump_for_level(k).is_some())
    }

    /// Stored parameter count over all jumps (joint included).
    pub fn param_count(&self) -> usize {
        let n = self.jumps.len() + usize::from(self.joint.is_some());
        n * count_jump_params(self.hidden, self.rank)
    }

    /// Keep only the jump for `level`, discarding every other jump's
    /// parameters. `level_count` is preserved.
    pub fn pruned_to(&self, level: usize) -> Result<JumpBank> {
        let jump = self
            .jump_for_level(level)
            .ok_or_else(|| Error::MissingJump(format!("level {level}")))?;
        Ok(JumpBank {
            hidden: self.hidden,
            rank: self.rank,
            level_count: self.level_count,
            jumps: vec![jump.clone()],
            joint: None,
            chosen: Some(level),
        })
    }
}

/// Write a bank as an `OJFS` file.
///
/// Layout: magic `OJFS`, version u32, H u32, r u32, K u32 (original exit
/// level count), jump_count u32, then per jump: level u32 followed by
/// gamma, beta, running_mean, running_var, A, B as little-endian f32 in
/// that order. A jump with `level == K` is the jointly-trained baseline.
/// Jumps are stored in infer-mode convention; loaded jumps come back in
/// infer mode.
pub fn save_bank(bank: &JumpBank, path: &Path) -> Result<()> {
    let mut w = BinWriter::create(path)?;
    w.magic(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(bank.hidden as u32)?;
    w.u32(bank.rank as u32)?;
    w.u32(bank.level_count as u32)?;
    let count = bank.jumps.len() + usize::from(bank.joint.is_some());
    w.u32(count as u32)?;
    for jump in bank.jumps.iter().chain(&bank.joint) {
        w.u32(jump.level as u32)?;
        w.f32_slice(&jump.gamma)?;
        w.f32_slice(&jump.beta)?;
        w.f32_slice(&jump.running_mean)?;
        w.f32_slice(&jump.running_var)?;
        w.f32_slice(jump.a.data())?;
        w.f32_slice(jump.b.data())?;
    }
    w.finish()
}

/// Read an `OJFS` file. Every jump is validated against the header
/// dimensions and returned in infer mode.
pub fn load_bank(path: &Path) -> Result<JumpBank> {
    let mut r = BinReader::open(path)?;
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}, expected {VERSION}")));
    }
    let hidden = r.u32("hidden")? as usize;
    let rank = r.u32("rank")? as usize;
    let level_count = r.u32("level_count")? as usize;
    if hidden == 0 || rank == 0 {
        return Err(r.fail("hidden and rank must be positive"));
    }
    let count = r.u32("jump_count")? as usize;
    if count == 0 {
        return Err(r.fail("bank must hold at least one jump"));
    }
    let mut jumps = Vec::new();
    let mut joint = None;
    for _ in 0..count {
        let level = r.u32("level")? as usize;
        if level > level_count {
            return Err(r.fail(format!(
                "jump level {level} exceeds declared level count {level_count}"
            )));
        }
        let gamma = r.f32_vec(hidden, "gamma")?;
        let beta = r.f32_vec(hidden, "beta")?;
        let running_mean = r.f32_vec(hidden, "running_mean")?;
        let running_var = r.f32_vec(hidden, "running_var")?;
        if running_var.iter().any(|&v| v < 0.0) {
            return Err(r.fail("negative running variance"));
        }
        let a = Matrix::from_vec(hidden, rank, r.f32_vec(hidden * rank, "A")?)?;
        let b = Matrix::from_vec(rank, hidden, r.f32_vec(rank * hidden, "B")?)?;
        let jump = LowRankJump {
            level,
            hidden,
            rank,
            gamma,
            beta,
            running_mean,
            running_var,
            a,
            b,
            epsilon: crate::jump::BN_EPS,
            momentum: crate::jump::BN_MOMENTUM,
            mode: JumpMode::Infer,
        };
        if level == level_count {
            joint = Some(jump);
        } else {
            jumps.push(jump);
        }
    }
    r.expect_eof()?;
    JumpBank::new(level_count, jumps, joint)
}
