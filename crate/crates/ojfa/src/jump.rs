//! The low-rank shortcut-jump mechanism: batch normalization followed by
//! two low-rank matrices `A: H x r` and `B: r x H`, trained with analytic
//! gradients against the MSE between approximated and true final
//! representations.
//!
//! A jump carries `2·H·r + 4·H` parameters (A, B, gamma, beta, running
//! mean, running variance). Train mode normalizes with batch statistics
//! (biased variance) and maintains running statistics; infer mode
//! normalizes with the running statistics and is a pure function.

use serde::{Deserialize, Serialize};

use crate::corpus::HiddenCorpus;
use crate::error::Error;
use crate::num::{Matrix, Rng};
use crate::Result;

/// Batch-norm epsilon. Fixed by the `OJFS` format, which does not store it.
pub const BN_EPS: f64 = 1e-5;

/// Default running-statistics momentum: `new = 0.9 * old + 0.1 * batch`.
pub const BN_MOMENTUM: f64 = 0.1;

/// Whether a jump normalizes with batch statistics (train) or running
/// statistics (infer).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpMode {
    Train,
    Infer,
}

impl JumpMode {
    fn name(self) -> &'static str {
        match self {
            JumpMode::Train => "train",
            JumpMode::Infer => "infer",
        }
    }
}

/// Default rank rule `max(1, floor(H / 100))`; the floor degenerates to
/// zero below `H = 100`, hence the clamp. Callers may override the rank
/// explicitly.
pub fn default_rank(hidden: usize) -> usize {
    (hidden / 100).max(1)
}

/// Parameters of one jump: `A` and `B` plus the four per-feature
/// normalization vectors.
pub fn count_jump_params(hidden: usize, rank: usize) -> usize {
    2 * hidden * rank + 4 * hidden
}

/// Total cost of keeping a separate jump per exit level; selecting a single
/// jump divides this by exactly `levels`.
pub fn count_bank_params(hidden: usize, rank: usize, levels: usize) -> usize {
    levels * count_jump_params(hidden, rank)
}

/// One shortcut jump's parameters.
#[derive(Debug, Clone)]
pub struct LowRankJump {
    /// Exit level this jump was trained for. A jump trained on pooled
    /// inputs from every level (the joint baseline) uses `level == K`.
    pub level: usize,
    pub hidden: usize,
    pub rank: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// `H x r` down-projection.
    pub a: Matrix,
    /// `r x H` up-projection.
    pub b: Matrix,
    pub epsilon: f64,
    /// Running-statistics update weight for new batches.
    pub momentum: f64,
    pub mode: JumpMode,
}

/// Gradients of the batch MSE with respect to the trainable parameters.
#[derive(Debug, Clone)]
pub struct JumpGradients {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub a: Matrix,
    pub b: Matrix,
}

impl LowRankJump {
    /// Seeded initialization: `A`, `B` scaled normal (scale `1/sqrt(H)`),
    /// gamma one, beta zero, running statistics `(0, 1)`, train mode.
    pub fn new(level: usize, hidden: usize, rank: usize, rng: &mut Rng) -> Result<Self> {
        if hidden == 0 || rank == 0 {
            return Err(Error::InvalidArgument {
                name: "rank",
                message: format!("hidden {hidden} and rank {rank} must be positive"),
            });
        }
        let scale = 1.0 / (hidden as f64).sqrt();
        let sample = |rng: &mut Rng, rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| rng.normal() * scale).collect();
            Matrix::from_vec(rows, cols, data)
        };
        Ok(LowRankJump {
            level,
            hidden,
            rank,
            gamma: vec![1.0; hidden],
            beta: vec![0.0; hidden],
            running_mean: vec![0.0; hidden],
            running_var: vec![1.0; hidden],
            a: sample(rng, hidden, rank)?,
            b: sample(rng, rank, hidden)?,
            epsilon: BN_EPS,
            momentum: BN_MOMENTUM,
            mode: JumpMode::Train,
        })
    }

    /// `2·H·r + 4·H`.
    pub fn param_count(&self) -> usize {
        count_jump_params(self.hidden, self.rank)
    }

    fn check_width(&self, cols: usize, op: &'static str) -> Result<()> {
        if cols != self.hidden {
            return Err(Error::DimMismatch {
                op,
                left: format!("batch width {cols}"),
                right: format!("jump hidden {}", self.hidden),
            });
        }
        Ok(())
    }

    /// Per-feature batch mean and biased variance.
    fn batch_stats(batch: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let n = batch.rows() as f64;
        let h = batch.cols();
        let mut mean = vec![0.0; h];
        for i in 0..batch.rows() {
            for (m, &x) in mean.iter_mut().zip(batch.row(i)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; h];
        for i in 0..batch.rows() {
            for (j, &x) in batch.row(i).iter().enumerate() {
                let d = x - mean[j];
                var[j] += d * d;
            }
        }
        for v in &mut var {
            *v /= n;
        }
        (mean, var)
    }

    /// Normalize with given statistics, then apply the affine and `A·B`.
    fn project(&self, batch: &Matrix, mean: &[f64], var: &[f64]) -> Result<Matrix> {
        let z = self.normalize_affine(batch, mean, var);
        z.matmul(&self.a)?.matmul(&self.b)
    }

    fn normalize_affine(&self, batch: &Matrix, mean: &[f64], var: &[f64]) -> Matrix {
        let inv_std: Vec<f64> = var
            .iter()
            .map(|&v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        let mut z = Matrix::zeros(batch.rows(), batch.cols());
        for i in 0..batch.rows() {
            let src = batch.row(i);
            let dst = z.row_mut(i);
            for j in 0..src.len() {
                dst[j] = (src[j] - mean[j]) * inv_std[j] * self.gamma[j] + self.beta[j];
            }
        }
        z
    }

    /// Standardized activations (before the affine), used to check that
    /// batch normalization actually centers and scales each feature.
    #[cfg(test)]
    fn standardize_train(&self, batch: &Matrix) -> Matrix {
        let (mean, var) = Self::batch_stats(batch);
        let mut out = Matrix::zeros(batch.rows(), batch.cols());
        for i in 0..batch.rows() {
            let src = batch.row(i);
            let dst = out.row_mut(i);
            for j in 0..src.len() {
                dst[j] = (src[j] - mean[j]) / (var[j] + self.epsilon).sqrt();
            }
        }
        out
    }

    /// Forward pass. Train mode requires `n >= 2` rows, normalizes with
    /// batch statistics, and folds them into the running statistics; infer
    /// mode accepts any `n >= 1`, uses the running statistics, and mutates
    /// nothing.
    pub fn forward(&mut self, batch: &Matrix) -> Result<Matrix> {
        self.check_width(batch.cols(), "jump_forward")?;
        match self.mode {
            JumpMode::Train => {
                if batch.rows() < 2 {
                    return Err(Error::InvalidArgument {
                        name: "batch",
                        message: format!(
                            "train mode needs at least 2 rows for batch statistics, got {}",
                            batch.rows()
                        ),
                    });
                }
                let (mean, var) = Self::batch_stats(batch);
                let out = self.project(batch, &mean, &var)?;
                for j in 0..self.hidden {
                    self.running_mean[j] =
                        (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                    self.running_var[j] =
                        (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j];
                }
                Ok(out)
            }
            JumpMode::Infer => self.infer_forward(batch),
        }
    }

    /// Infer-mode forward regardless of stored mode; pure.
    pub fn infer_forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_width(batch.cols(), "jump_forward")?;
        if batch.rows() == 0 {
            return Err(Error::Empty("jump_forward"));
        }
        self.project(batch, &self.running_mean, &self.running_var)
    }

    /// Train-mode forward without touching the running statistics; used
    /// for loss measurement.
    pub fn train_forward_pure(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_width(batch.cols(), "jump_forward")?;
        if batch.rows() < 2 {
            return Err(Error::InvalidArgument {
                name: "batch",
                message: "train-mode forward needs at least 2 rows".to_string(),
            });
        }
        let (mean, var) = Self::batch_stats(batch);
        self.project(batch, &mean, &var)
    }

    /// Apply the jump to a single hidden vector in infer mode.
    pub fn apply_vec(&self, hidden: &[f64]) -> Result<Vec<f64>> {
        self.check_width(hidden.len(), "jump apply")?;
        if self.mode != JumpMode::Infer {
            return Err(Error::WrongMode {
                op: "apply",
                required: "infer",
                actual: self.mode.name(),
            });
        }
        let mut down = vec![0.0; self.rank];
        for (j, &x) in hidden.iter().enumerate() {
            let z = (x - self.running_mean[j]) / (self.running_var[j] + self.epsilon).sqrt()
                * self.gamma[j]
                + self.beta[j];
            for (d, &a) in down.iter_mut().zip(self.a.row(j)) {
                *d += z * a;
            }
        }
        let mut out = vec![0.0; self.hidden];
        for (t, &d) in down.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.b.row(t)) {
                *o += d * b;
            }
        }
        Ok(out)
    }

    /// Analytic gradients of `mse_loss(forward(batch), target)` with
    /// respect to gamma, beta, A, and B.
    ///
    /// Normalization precedes every trainable parameter, so the batch mean
    /// and variance are constants of the data as far as these gradients are
    /// concerned; the finite-difference oracle in the tests perturbs only
    /// parameters and confirms the complete derivative.
    pub fn backward(&self, batch: &Matrix, target: &Matrix) -> Result<JumpGradients> {
        if self.mode != JumpMode::Train {
            return Err(Error::WrongMode {
                op: "jump_backward",
                required: "train",
                actual: self.mode.name(),
            });
        }
        self.check_width(batch.cols(), "jump_backward")?;
        if batch.rows() != target.rows() || batch.cols() != target.cols() {
            return Err(Error::DimMismatch {
                op: "jump_backward",
                left: format!("{}x{}", batch.rows(), batch.cols()),
                right: format!("{}x{}", target.rows(), target.cols()),
            });
        }
        if batch.rows() < 2 {
            return Err(Error::InvalidArgument {
                name: "batch",
                message: "backward needs at least 2 rows".to_string(),
            });
        }

        let n = batch.rows();
        let (mean, var) = Self::batch_stats(batch);
        let inv_std: Vec<f64> = var
            .iter()
            .map(|&v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        let z = self.normalize_affine(batch, &mean, &var);
        let u = z.matmul(&self.a)?; // n x r
        let y = u.matmul(&self.b)?; // n x H

        // dL/dY for L = (1/n) sum_i |Y_i - T_i|^2
        let mut g_y = Matrix::zeros(n, self.hidden);
        for i in 0..n {
            let yr = y.row(i);
            let tr = target.row(i);
            let gr = g_y.row_mut(i);
            for j in 0..self.hidden {
                gr[j] = 2.0 * (yr[j] - tr[j]) / n as f64;
            }
        }

        let g_b = u.transpose().matmul(&g_y)?; // r x H
        let g_u = g_y.matmul(&self.b.transpose())?; // n x r
        let g_a = z.transpose().matmul(&g_u)?; // H x r
        let g_z = g_u.matmul(&self.a.transpose())?; // n x H

        let mut g_gamma = vec![0.0; self.hidden];
        let mut g_beta = vec![0.0; self.hidden];
        for i in 0..n {
            let gz = g_z.row(i);
            let x = batch.row(i);
            for j in 0..self.hidden {
                let x_hat = (x[j] - mean[j]) * inv_std[j];
                g_gamma[j] += gz[j] * x_hat;
                g_beta[j] += gz[j];
            }
        }

        Ok(JumpGradients {
            gamma: g_gamma,
            beta: g_beta,
            a: g_a,
            b: g_b,
        })
    }
}

/// Mean over rows of the squared Euclidean distance.
pub fn mse_loss(approx: &Matrix, target: &Matrix) -> Result<f64> {
    if approx.rows() != target.rows() || approx.cols() != target.cols() {
        return Err(Error::DimMismatch {
            op: "mse_loss",
            left: format!("{}x{}", approx.rows(), approx.cols()),
            right: format!("{}x{}", target.rows(), target.cols()),
        });
    }
    if approx.rows() == 0 {
        return Err(Error::Empty("mse_loss"));
    }
    let mut total = 0.0;
    for i in 0..approx.rows() {
        let mut row = 0.0;
        for (a, t) in approx.row(i).iter().zip(target.row(i)) {
            let d = a - t;
            row += d * d;
        }
        total += row;
    }
    Ok(total / approx.rows() as f64)
}

/// Training recipe for a jump. The optimizer is Adam with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub bn_momentum: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 64,
            epochs: 20,
            seed: 1,
            bn_momentum: BN_MOMENTUM,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            problems.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !self.beta1.is_finite() || self.beta1 <= 0.0 || self.beta1 >= 1.0 {
            problems.push(format!("beta1 must be in (0, 1), got {}", self.beta1));
        }
        if !self.beta2.is_finite() || self.beta2 <= 0.0 || self.beta2 >= 1.0 {
            problems.push(format!("beta2 must be in (0, 1), got {}", self.beta2));
        }
        if !self.adam_epsilon.is_finite() || self.adam_epsilon <= 0.0 {
            problems.push(format!(
                "adam_epsilon must be positive, got {}",
                self.adam_epsilon
            ));
        }
        if self.batch_size < 2 {
            problems.push(format!(
                "batch_size must be at least 2 for batch statistics, got {}",
                self.batch_size
            ));
        }
        if self.epochs == 0 {
            problems.push("epochs must be positive".to_string());
        }
        if !self.bn_momentum.is_finite() || self.bn_momentum <= 0.0 || self.bn_momentum > 1.0 {
            problems.push(format!(
                "bn_momentum must be in (0, 1], got {}",
                self.bn_momentum
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

/// A trained jump plus its recorded losses. The losses are full-training-set
/// MSE under train-mode normalization (the whole set as one batch), measured
/// before the first update and after the last one.
#[derive(Debug, Clone)]
pub struct TrainedJump {
    pub jump: LowRankJump,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], t: i32, s: &TrainSettings) {
        let correction1 = 1.0 - s.beta1.powi(t);
        let correction2 = 1.0 - s.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            *m = s.beta1 * *m + (1.0 - s.beta1) * g;
            *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= s.learning_rate * m_hat / (v_hat.sqrt() + s.adam_epsilon);
        }
    }
}

/// Training pairs: (record index, input level). The target level is always
/// the final representation.
pub(crate) fn run_training(
    mut jump: LowRankJump,
    pairs: &[(usize, usize)],
    corpus: &HiddenCorpus,
    settings: &TrainSettings,
    mut rng: Rng,
) -> Result<TrainedJump> {
    let h = corpus.hidden;
    let final_level = corpus.num_blocks;
    let gather = |selection: &[(usize, usize)]| -> Result<(Matrix, Matrix)> {
        let mut input = Matrix::zeros(selection.len(), h);
        let mut target = Matrix::zeros(selection.len(), h);
        for (row, &(rec, level)) in selection.iter().enumerate() {
            input
                .row_mut(row)
                .copy_from_slice(&corpus.records[rec].levels[level]);
            target
                .row_mut(row)
                .copy_from_slice(&corpus.records[rec].levels[final_level]);
        }
        Ok((input, target))
    };

    let (all_in, all_target) = gather(pairs)?;
    let initial_loss = mse_loss(&jump.train_forward_pure(&all_in)?, &all_target)?;

    let mut adam_gamma = AdamState::new(h);
    let mut adam_beta = AdamState::new(h);
    let mut adam_a = AdamState::new(h * jump.rank);
    let mut adam_b = AdamState::new(jump.rank * h);
    let mut t = 0i32;
    let mut order: Vec<(usize, usize)> = pairs.to_vec();
    let mut epoch_losses = Vec::with_capacity(settings.epochs);

    for _ in 0..settings.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        // The last partial mini-batch is dropped: batch statistics need a
        // fixed batch size for reproducible streams.
        for chunk in order.chunks_exact(settings.batch_size) {
            let (input, target) = gather(chunk)?;
            let out = jump.forward(&input)?;
            epoch_loss += mse_loss(&out, &target)?;
            batches += 1;
            let grads = jump.backward(&input, &target)?;
            t += 1;
            adam_gamma.step(&mut jump.gamma, &grads.gamma, t, settings);
            adam_beta.step(&mut jump.beta, &grads.beta, t, settings);
            adam_a.step(jump.a.data_mut(), grads.a.data(), t, settings);
            adam_b.step(jump.b.data_mut(), grads.b.data(), t, settings);
        }
        epoch_losses.push(epoch_loss / batches.max(1) as f64);
    }

    let final_loss = mse_loss(&jump.train_forward_pure(&all_in)?, &all_target)?;
    jump.mode = JumpMode::Infer;
    Ok(TrainedJump {
        jump,
        initial_loss,
        final_loss,
        epoch_losses,
    })
}

/// Train a jump for exit level `m` on pairs `(h^m_i, h^K_i)` from the
/// corpus. `rank` defaults to [`default_rank`] of the corpus width. The
/// jump's randomness derives from `(settings.seed, m)`, so a bank of
/// levels can train in parallel and still be bit-reproducible.
pub fn train_jump(
    level: usize,
    corpus: &HiddenCorpus,
    settings: &TrainSettings,
    rank: Option<usize>,
) -> Result<TrainedJump> {
    settings.validate()?;
    if level >= corpus.num_blocks {
        return Err(Error::InvalidArgument {
            name: "level",
            message: format!(
                "exit level {level} out of range for {} blocks",
                corpus.num_blocks
            ),
        });
    }
    if settings.batch_size > corpus.len() {
        return Err(Error::InvalidArgument {
            name: "batch_size",
            message: format!(
                "batch size {} exceeds corpus size {}",
                settings.batch_size,
                corpus.len()
            ),
        });
    }
    let rank = rank.unwrap_or_else(|| default_rank(corpus.hidden));
    let mut rng = Rng::derive(settings.seed, level as u64);
    let mut jump = LowRankJump::new(level, corpus.hidden, rank, &mut rng)?;
    jump.momentum = settings.bn_momentum;
    let pairs: Vec<(usize, usize)> = (0..corpus.len()).map(|i| (i, level)).collect();
    run_training(jump, &pairs, corpus, settings, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_jump(hidden: usize, rank: usize, seed: u64) -> LowRankJump {
        let mut rng = Rng::new(seed);
        let mut jump = LowRankJump::new(0, hidden, rank, &mut rng).unwrap();
        // Randomize the affine and statistics so gradient checks cover
        // non-default parameter values.
        for j in 0..hidden {
            jump.gamma[j] = 1.0 + 0.3 * rng.normal();
            jump.beta[j] = 0.2 * rng.normal();
            jump.running_mean[j] = 0.1 * rng.normal();
            jump.running_var[j] = (0.5 + rng.next_f64()).abs();
        }
        jump
    }

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn rank_rule() {
        assert_eq!(default_rank(1600), 16);
        assert_eq!(default_rank(3072), 30);
        assert_eq!(default_rank(4096), 40);
        assert_eq!(default_rank(64), 1);
        assert_eq!(default_rank(199), 1);
    }

    #[test]
    fn param_counts_match_published_budgets() {
        assert_eq!(count_jump_params(1600, 16), 57_600);
        assert_eq!(count_bank_params(1600, 16, 48), 2_764_800);
        assert_eq!(count_jump_params(3072, 30), 196_608);
        assert_eq!(count_bank_params(3072, 30, 32), 6_291_456);
        assert_eq!(count_jump_params(4096, 40), 344_064);
        assert_eq!(count_bank_params(4096, 40, 32), 11_010_048);
    }

    #[test]
    fn infer_forward_on_identity_subspace() {
        // Running stats (0, 1), gamma 1, beta 0, A = e1, B = e1^T: the first
        // coordinate passes through scaled by 1/sqrt(1 + eps).
        let hidden = 4;
        let mut rng = Rng::new(1);
        let mut jump = LowRankJump::new(0, hidden, 1, &mut rng).unwrap();
        jump.mode = JumpMode::Infer;
        jump.a = Matrix::from_vec(hidden, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        jump.b = Matrix::from_vec(1, hidden, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let input = Matrix::from_rows(vec![vec![3.0, 0.0, 0.0, 0.0]]).unwrap();
        let out = jump.infer_forward(&input).unwrap();
        let expected = 3.0 / (1.0 + BN_EPS).sqrt();
        assert!((out.get(0, 0) - expected).abs() <= 1e-12);
        for j in 1..hidden {
            assert_eq!(out.get(0, j), 0.0);
        }
    }

    #[test]
    fn train_forward_standardizes_one_dim_batch() {
        // Batch [[1], [3]]: mean 2, biased variance 1, outputs ±1/sqrt(1+eps).
        let mut rng = Rng::new(2);
        let mut jump = LowRankJump::new(0, 1, 1, &mut rng).unwrap();
        jump.a = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        jump.b = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let batch = Matrix::from_rows(vec![vec![1.0], vec![3.0]]).unwrap();
        let out = jump.forward(&batch).unwrap();
        let expected = 1.0 / (1.0 + BN_EPS).sqrt();
        assert!((out.get(0, 0) + expected).abs() <= 1e-12);
        assert!((out.get(1, 0) - expected).abs() <= 1e-12);
    }

    #[test]
    fn zero_projection_gives_zero_output() {
        let mut rng = Rng::new(3);
        let mut jump = LowRankJump::new(0, 3, 2, &mut rng).unwrap();
        jump.a = Matrix::zeros(3, 2);
        let batch = random_matrix(&mut rng, 4, 3);
        let out = jump.forward(&batch).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_forward_updates_running_stats() {
        let mut rng = Rng::new(4);
        let mut jump = LowRankJump::new(0, 2, 1, &mut rng).unwrap();
        let batch = Matrix::from_rows(vec![vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        jump.forward(&batch).unwrap();
        // new = 0.9 * old + 0.1 * batch; old mean 0, old var 1.
        assert!((jump.running_mean[0] - 0.1).abs() <= 1e-12);
        assert!((jump.running_mean[1] - 0.2).abs() <= 1e-12);
        assert!((jump.running_var[0] - (0.9 + 0.1)).abs() <= 1e-12);
    }

    #[test]
    fn infer_forward_is_pure() {
        let mut rng = Rng::new(5);
        let mut jump = LowRankJump::new(0, 3, 1, &mut rng).unwrap();
        jump.mode = JumpMode::Infer;
        let before = jump.clone();
        let batch = random_matrix(&mut rng, 1, 3);
        jump.forward(&batch).unwrap();
        assert_eq!(jump.running_mean, before.running_mean);
        assert_eq!(jump.running_var, before.running_var);
    }

    #[test]
    fn train_mode_rejects_single_row() {
        let mut rng = Rng::new(6);
        let mut jump = LowRankJump::new(0, 3, 1, &mut rng).unwrap();
        let batch = random_matrix(&mut rng, 1, 3);
        assert!(jump.forward(&batch).is_err());
    }

    #[test]
    fn standardized_activations_have_zero_mean_unit_variance() {
        let mut rng = Rng::new(7);
        let jump = seeded_jump(6, 2, 7);
        // Feature variance well above the batch-norm epsilon, so the
        // standardized variance sits within 1e-6 of one.
        let batch = random_matrix(&mut rng, 16, 6).scale(40.0).unwrap();
        let x_hat = jump.standardize_train(&batch);
        let n = x_hat.rows() as f64;
        for j in 0..6 {
            let mean: f64 = (0..x_hat.rows()).map(|i| x_hat.get(i, j)).sum::<f64>() / n;
            let var: f64 = (0..x_hat.rows())
                .map(|i| (x_hat.get(i, j) - mean).powi(2))
                .sum::<f64>()
                / n;
            assert!(mean.abs() <= 1e-9, "feature {j} mean {mean}");
            assert!((var - 1.0).abs() <= 1e-6, "feature {j} var {var}");
        }
    }

    #[test]
    fn mse_loss_examples() {
        let zero = Matrix::zeros(2, 3);
        assert_eq!(mse_loss(&zero, &zero).unwrap(), 0.0);

        let a = Matrix::from_rows(vec![vec![3.0, 4.0]]).unwrap();
        let b = Matrix::zeros(1, 2);
        assert_eq!(mse_loss(&a, &b).unwrap(), 25.0);

        // Per-row squared norms 2 and 4: mean 3.
        let a = Matrix::from_rows(vec![vec![1.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let b = Matrix::zeros(2, 2);
        assert_eq!(mse_loss(&a, &b).unwrap(), 3.0);

        assert!(mse_loss(&Matrix::zeros(1, 2), &Matrix::zeros(2, 2)).is_err());
    }

    /// Central finite differences over every parameter coordinate.
    fn finite_diff_check(hidden: usize, rank: usize, n: usize, seed: u64) -> f64 {
        let jump = seeded_jump(hidden, rank, seed);
        let mut rng = Rng::new(seed ^ 0xabcd);
        let batch = random_matrix(&mut rng, n, hidden);
        let target = random_matrix(&mut rng, n, hidden);
        let grads = jump.backward(&batch, &target).unwrap();

        let loss_of =
            |j: &LowRankJump| mse_loss(&j.train_forward_pure(&batch).unwrap(), &target).unwrap();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        let mut check = |analytic: f64, plus: LowRankJump, minus: LowRankJump| {
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max((analytic - fd).abs() / denom);
        };

        for j in 0..hidden {
            let mut plus = jump.clone();
            let mut minus = jump.clone();
            plus.gamma[j] += step;
            minus.gamma[j] -= step;
            check(grads.gamma[j], plus, minus);

            let mut plus = jump.clone();
            let mut minus = jump.clone();
            plus.beta[j] += step;
            minus.beta[j] -= step;
            check(grads.beta[j], plus, minus);
        }
        for idx in 0..hidden * rank {
            let mut plus = jump.clone();
            let mut minus = jump.clone();
            plus.a.data_mut()[idx] += step;
            minus.a.data_mut()[idx] -= step;
            check(grads.a.data()[idx], plus, minus);

            let mut plus = jump.clone();
            let mut minus = jump.clone();
            plus.b.data_mut()[idx] += step;
            minus.b.data_mut()[idx] -= step;
            check(grads.b.data()[idx], plus, minus);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let worst = finite_diff_check(5, 2, 6, 11);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradient_zero_at_exact_fit() {
        let jump = seeded_jump(4, 2, 12);
        let mut rng = Rng::new(99);
        let batch = random_matrix(&mut rng, 5, 4);
        let target = jump.train_forward_pure(&batch).unwrap();
        let grads = jump.backward(&batch, &target).unwrap();
        let max = grads
            .gamma
            .iter()
            .chain(&grads.beta)
            .chain(grads.a.data())
            .chain(grads.b.data())
            .fold(0.0f64, |acc, &g| acc.max(g.abs()));
        assert!(max <= 1e-12, "max gradient {max}");
    }

    #[test]
    fn gradient_is_linear_in_residual() {
        let jump = seeded_jump(4, 1, 13);
        let mut rng = Rng::new(100);
        let batch = random_matrix(&mut rng, 5, 4);
        let target = random_matrix(&mut rng, 5, 4);
        let output = jump.train_forward_pure(&batch).unwrap();
        // Moving the target to 2*target - output doubles the residual.
        let doubled = target
            .scale(2.0)
            .unwrap()
            .add(&output.scale(-1.0).unwrap())
            .unwrap();
        let g1 = jump.backward(&batch, &target).unwrap();
        let g2 = jump.backward(&batch, &doubled).unwrap();
        for (a, b) in g1.a.data().iter().zip(g2.a.data()) {
            assert!((2.0 * a - b).abs() <= 1e-9, "{a} vs {b}");
        }
        for (a, b) in g1.gamma.iter().zip(&g2.gamma) {
            assert!((2.0 * a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn backward_rejects_infer_mode() {
        let mut jump = seeded_jump(3, 1, 14);
        jump.mode = JumpMode::Infer;
        let batch = Matrix::zeros(2, 3);
        assert!(matches!(
            jump.backward(&batch, &batch),
            Err(Error::WrongMode { .. })
        ));
    }

    fn synthetic_corpus(hidden: usize, levels: usize, n: usize, seed: u64) -> HiddenCorpus {
        let mut rng = Rng::new(seed);
        let records = (0..n)
            .map(|i| HiddenRecord {
                sentence_id: i as u64,
                position: 0,
                levels: (0..=levels)
                    .map(|_| (0..hidden).map(|_| rng.normal()).collect())
                    .collect(),
            })
            .collect();
        HiddenCorpus {
            hidden,
            num_blocks: levels,
            records,
            split: None,
            skipped_texts: 0,
        }
    }

    use crate::corpus::HiddenRecord;

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let corpus = synthetic_corpus(8, 3, 64, 15);
        let settings = TrainSettings {
            batch_size: 16,
            epochs: 10,
            seed: 7,
            ..TrainSettings::default()
        };
        let a = train_jump(1, &corpus, &settings, Some(2)).unwrap();
        assert!(a.final_loss < a.initial_loss);
        assert_eq!(a.jump.mode, JumpMode::Infer);
        assert_eq!(a.epoch_losses.len(), 10);

        let b = train_jump(1, &corpus, &settings, Some(2)).unwrap();
        assert_eq!(a.jump.a, b.jump.a);
        assert_eq!(a.jump.b, b.jump.b);
        assert_eq!(a.jump.gamma, b.jump.gamma);
        assert_eq!(a.jump.running_mean, b.jump.running_mean);
    }

    #[test]
    fn training_rejects_oversized_batch() {
        let corpus = synthetic_corpus(4, 2, 8, 16);
        let settings = TrainSettings {
            batch_size: 9,
            ..TrainSettings::default()
        };
        assert!(train_jump(0, &corpus, &settings, Some(1)).is_err());
    }

    #[test]
    fn training_rejects_out_of_range_level() {
        let corpus = synthetic_corpus(4, 2, 8, 17);
        let settings = TrainSettings {
            batch_size: 4,
            ..TrainSettings::default()
        };
        assert!(train_jump(2, &corpus, &settings, Some(1)).is_err());
    }

    #[test]
    fn planted_jump_is_recovered() {
        // Targets generated by a planted jump over the whole set as one
        // batch; full-batch training can then drive the loss toward zero.
        let hidden = 8;
        let rank = 2;
        let n = 64;
        let mut rng = Rng::new(18);
        let planted = seeded_jump(hidden, rank, 19);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..hidden).map(|_| rng.normal()).collect())
            .collect();
        let input_matrix = Matrix::from_rows(inputs.clone()).unwrap();
        let targets = planted.train_forward_pure(&input_matrix).unwrap();

        let records = (0..n)
            .map(|i| HiddenRecord {
                sentence_id: i as u64,
                position: 0,
                levels: vec![inputs[i].clone(), targets.row(i).to_vec()],
            })
            .collect();
        let corpus = HiddenCorpus {
            hidden,
            num_blocks: 1,
            records,
            split: None,
            skipped_texts: 0,
        };
        let settings = TrainSettings {
            learning_rate: 2e-2,
            batch_size: n,
            epochs: 2000,
            seed: 20,
            ..TrainSettings::default()
        };
        let trained = train_jump(0, &corpus, &settings, Some(rank)).unwrap();
        assert!(
            trained.final_loss < 1e-3 * trained.initial_loss,
            "initial {} final {}",
            trained.initial_loss,
            trained.final_loss
        );
    }
}
