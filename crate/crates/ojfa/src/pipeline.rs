//! Config-driven pipeline: model and corpus generation, jump training,
//! single-jump selection, and evaluation, each runnable on its own or as
//! one sequence.
//!
//! Every stage is a pure function of the configuration and its input
//! artifacts: fixed seeds give byte-identical outputs on reruns. Each
//! stage writes the effective configuration next to its outputs and
//! records a content hash for every artifact in `run_manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bank::{load_bank, save_bank, JumpBank};
use crate::binio::file_hash;
use crate::corpus::{build_corpus, load_corpus, save_corpus, split, MIN_POS};
use crate::error::Error;
use crate::eval::{early_exit_run, evaluate_strategy, ExitPolicy, StrategyKind};
use crate::jump::{train_jump, TrainSettings, TrainedJump};
use crate::model::{init_model, load_model, save_model, TransformerConfig, TransformerWeights};
use crate::num::Rng;
use crate::report::{emit_report, EvalReport, ReportFormat, ReportMeta, StrategySeries};
use crate::select::{select_ojfa, train_joint_jump, ReuseScoreTable};
use crate::Result;

/// Where model weights come from: an `OJFW` file when `path` is set,
/// otherwise a seeded initialization of `config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSource {
    pub path: Option<PathBuf>,
    pub config: TransformerConfig,
}

/// Corpus construction settings. `source` is one of `synthetic` (built-in
/// seeded Markov byte stream), `text` (newline-separated byte strings from
/// `text_path`), or `import` (pre-built `OJFC` files).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSettings {
    pub source: String,
    pub text_path: Option<PathBuf>,
    pub import_train: Option<PathBuf>,
    pub import_test: Option<PathBuf>,
    pub num_texts: usize,
    pub text_len: usize,
    pub positions_per_text: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            source: "synthetic".to_string(),
            text_path: None,
            import_train: None,
            import_test: None,
            num_texts: 250,
            text_len: 48,
            // One sampled position per text; raise it (as configs/desk.json
            // does) to grow the record count without more forward passes.
            positions_per_text: 1,
            train_fraction: 0.75,
            seed: 7,
        }
    }
}

/// Full pipeline configuration; serializes to/from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelSource,
    pub corpus: CorpusSettings,
    pub train: TrainSettings,
    /// Jump rank override; `None` uses `max(1, H / 100)`.
    pub rank: Option<usize>,
    /// Strategy labels to evaluate; `arbitrary:all` expands to one series
    /// per exit level.
    pub strategies: Vec<String>,
    /// Confidence thresholds for the early-exit sweep.
    pub lambda_grid: Vec<f64>,
    pub out_dir: PathBuf,
    /// Worker-thread bound; `None` uses all available cores.
    pub threads: Option<usize>,
    /// Master seed: when set, the model, corpus, and training seeds all
    /// derive from it.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSource::default(),
            corpus: CorpusSettings::default(),
            train: TrainSettings::default(),
            rank: None,
            strategies: vec![
                "identity".to_string(),
                "ojfa".to_string(),
                "joint".to_string(),
                "full_multi_jump".to_string(),
                "arbitrary:all".to_string(),
            ],
            lambda_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            out_dir: PathBuf::from("out"),
            threads: None,
            seed: None,
        }
    }
}

impl RunConfig {
    /// Derive the per-stage seeds from the master seed, when one is set.
    pub fn resolve_seeds(&mut self) {
        if let Some(master) = self.seed {
            self.model.config.seed = Rng::derive(master, 0).next_u64();
            self.corpus.seed = Rng::derive(master, 1).next_u64();
            self.train.seed = Rng::derive(master, 2).next_u64();
        }
    }

    /// Validate the whole configuration, reporting every violated field.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Some(path) = &self.model.path {
            if !path.exists() {
                problems.push(format!("model.path {} does not exist", path.display()));
            }
        } else if let Err(Error::InvalidConfig(inner)) = self.model.config.validate() {
            problems.extend(inner.into_iter().map(|p| format!("model.config: {p}")));
        }
        match self.corpus.source.as_str() {
            "synthetic" => {
                if self.corpus.num_texts == 0 {
                    problems.push("corpus.num_texts must be positive".to_string());
                }
                if self.corpus.text_len < MIN_POS + 1 {
                    problems.push(format!(
                        "corpus.text_len must be at least {}, got {}",
                        MIN_POS + 1,
                        self.corpus.text_len
                    ));
                }
            }
            "text" => match &self.corpus.text_path {
                Some(path) if path.exists() => {}
                Some(path) => problems.push(format!(
                    "corpus.text_path {} does not exist",
                    path.display()
                )),
                None => problems.push("corpus.text_path required for source \"text\"".to_string()),
            },
            "import" => {
                for (name, path) in [
                    ("corpus.import_train", &self.corpus.import_train),
                    ("corpus.import_test", &self.corpus.import_test),
                ] {
                    match path {
                        Some(p) if p.exists() => {}
                        Some(p) => problems.push(format!("{name} {} does not exist", p.display())),
                        None => problems.push(format!("{name} required for source \"import\"")),
                    }
                }
            }
            other => problems.push(format!(
                "corpus.source must be synthetic, text, or import; got {other:?}"
            )),
        }
        if self.corpus.positions_per_text == 0 {
            problems.push("corpus.positions_per_text must be positive".to_string());
        }
        if !(self.corpus.train_fraction > 0.0 && self.corpus.train_fraction < 1.0) {
            problems.push(format!(
                "corpus.train_fraction must be inside (0, 1), got {}",
                self.corpus.train_fraction
            ));
        }
        if let Err(Error::InvalidConfig(inner)) = self.train.validate() {
            problems.extend(inner.into_iter().map(|p| format!("train: {p}")));
        }
        if self.rank == Some(0) {
            problems.push("rank override must be positive".to_string());
        }
        for label in &self.strategies {
            if label != "arbitrary:all" {
                if let Err(e) = StrategyKind::parse(label, Some(0)) {
                    problems.push(e.to_string());
                }
            }
        }
        for &lambda in &self.lambda_grid {
            if !(0.0..=1.0).contains(&lambda) {
                problems.push(format!("lambda_grid entry {lambda} outside [0, 1]"));
            }
        }
        if self.threads == Some(0) {
            problems.push("threads must be positive when set".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.out_dir.join("model.ojfw")
    }
    pub fn train_corpus_path(&self) -> PathBuf {
        self.out_dir.join("corpus_train.ojfc")
    }
    pub fn test_corpus_path(&self) -> PathBuf {
        self.out_dir.join("corpus_test.ojfc")
    }
    pub fn bank_path(&self) -> PathBuf {
        self.out_dir.join("bank.ojfs")
    }
    pub fn joint_path(&self) -> PathBuf {
        self.out_dir.join("joint.ojfs")
    }
    pub fn scores_path(&self) -> PathBuf {
        self.out_dir.join("scores.json")
    }
    pub fn ojfa_path(&self) -> PathBuf {
        self.out_dir.join("ojfa.ojfs")
    }
}

/// Seeded Markov byte stream: each symbol has a small seeded successor set,
/// so the texts carry learnable structure without any external data.
pub fn synthetic_texts(
    rng: &mut Rng,
    num_texts: usize,
    text_len: usize,
    vocab: usize,
) -> Vec<Vec<u8>> {
    let vocab = vocab.min(256) as u64;
    let branching = 4u64.min(vocab);
    let table: Vec<Vec<u8>> = (0..vocab)
        .map(|_| {
            (0..branching)
                .map(|_| rng.next_below(vocab) as u8)
                .collect()
        })
        .collect();
    (0..num_texts)
        .map(|_| {
            let mut state = rng.next_below(vocab) as u8;
            (0..text_len)
                .map(|_| {
                    let successors = &table[state as usize];
                    state = successors[rng.next_below(branching) as usize];
                    state
                })
                .collect()
        })
        .collect()
}

fn load_or_init_model(cfg: &RunConfig) -> Result<TransformerWeights> {
    match &cfg.model.path {
        Some(path) => load_model(path),
        None => init_model(&cfg.model.config),
    }
}

fn read_text_file(path: &Path) -> Result<Vec<Vec<u8>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(bytes
        .split(|&b| b == b'\n')
        .filter(|line| !line.is_empty())
        .map(|line| line.to_vec())
        .collect())
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))
}

/// Write the effective configuration next to the outputs and record
/// content hashes for the stage's artifacts in `run_manifest.json`.
fn finish_stage(cfg: &RunConfig, artifacts: &[PathBuf]) -> Result<()> {
    let cfg_path = cfg.out_dir.join("effective_config.json");
    let json = serde_json::to_string_pretty(cfg)?;
    std::fs::write(&cfg_path, json).map_err(|e| Error::io(cfg_path.display().to_string(), e))?;

    let manifest_path = cfg.out_dir.join("run_manifest.json");
    let mut entries: BTreeMap<String, String> = if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        serde_json::from_str(&text).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    for artifact in artifacts {
        let name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| artifact.display().to_string());
        entries.insert(name, file_hash(artifact)?);
    }
    let json = serde_json::to_string_pretty(&entries)?;
    std::fs::write(&manifest_path, json)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    Ok(())
}

/// Generate (or re-serialize) the model weights file.
pub fn cmd_gen_model(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    ensure_out_dir(cfg)?;
    let weights = load_or_init_model(cfg)?;
    save_model(&weights, &cfg.model_path())?;
    let artifacts = vec![cfg.model_path()];
    finish_stage(cfg, &artifacts)?;
    Ok(artifacts)
}

/// Build the train/test hidden-state corpora.
pub fn cmd_gen_corpus(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    ensure_out_dir(cfg)?;
    let (train, test) = match cfg.corpus.source.as_str() {
        "import" => {
            let train = load_corpus(
                cfg.corpus
                    .import_train
                    .as_ref()
                    .ok_or_else(missing_import)?,
            )?;
            let test = load_corpus(cfg.corpus.import_test.as_ref().ok_or_else(missing_import)?)?;
            if train.hidden != test.hidden || train.num_blocks != test.num_blocks {
                return Err(Error::DimMismatch {
                    op: "cmd_gen_corpus",
                    left: format!("train (H={}, K={})", train.hidden, train.num_blocks),
                    right: format!("test (H={}, K={})", test.hidden, test.num_blocks),
                });
            }
            (train, test)
        }
        _ => {
            let weights = load_or_init_model(cfg)?;
            let mut rng = Rng::new(cfg.corpus.seed);
            let texts = match cfg.corpus.source.as_str() {
                "synthetic" => synthetic_texts(
                    &mut rng,
                    cfg.corpus.num_texts,
                    cfg.corpus.text_len,
                    weights.config.vocab_size,
                ),
                "text" => read_text_file(cfg.corpus.text_path.as_ref().ok_or_else(|| {
                    Error::InvalidArgument {
                        name: "corpus.text_path",
                        message: "required for source \"text\"".to_string(),
                    }
                })?)?,
                other => {
                    return Err(Error::InvalidArgument {
                        name: "corpus.source",
                        message: format!("unknown source {other:?}"),
                    })
                }
            };
            let full = build_corpus(&weights, &texts, cfg.corpus.positions_per_text, &mut rng)?;
            split(&full, cfg.corpus.train_fraction, &mut rng)?
        }
    };
    save_corpus(&train, &cfg.train_corpus_path())?;
    save_corpus(&test, &cfg.test_corpus_path())?;
    let artifacts = vec![cfg.train_corpus_path(), cfg.test_corpus_path()];
    finish_stage(cfg, &artifacts)?;
    Ok(artifacts)
}

fn missing_import() -> Error {
    Error::InvalidArgument {
        name: "corpus.import_train/import_test",
        message: "required for source \"import\"".to_string(),
    }
}

/// Per-level training summary, written alongside the bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub level: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Train one jump per exit level plus the joint baseline. Levels train in
/// parallel; each level's stream derives from `(train.seed, level)`, so the
/// result is independent of scheduling.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    ensure_out_dir(cfg)?;
    let corpus = load_corpus(&cfg.train_corpus_path())?;
    let levels = corpus.num_blocks;

    use rayon::prelude::*;
    let trained: Vec<TrainedJump> = (0..levels)
        .into_par_iter()
        .map(|m| train_jump(m, &corpus, &cfg.train, cfg.rank))
        .collect::<Result<_>>()?;
    let joint = train_joint_jump(&corpus, &cfg.train, cfg.rank)?;

    let mut summaries: Vec<TrainSummary> = trained
        .iter()
        .map(|t| TrainSummary {
            level: t.jump.level,
            initial_loss: t.initial_loss,
            final_loss: t.final_loss,
        })
        .collect();
    summaries.push(TrainSummary {
        level: joint.jump.level,
        initial_loss: joint.initial_loss,
        final_loss: joint.final_loss,
    });

    let bank = JumpBank::new(levels, trained.into_iter().map(|t| t.jump).collect(), None)?;
    save_bank(&bank, &cfg.bank_path())?;
    let joint_bank = JumpBank::new(levels, Vec::new(), Some(joint.jump))?;
    save_bank(&joint_bank, &cfg.joint_path())?;

    let losses_path = cfg.out_dir.join("train_losses.json");
    std::fs::write(&losses_path, serde_json::to_string_pretty(&summaries)?)
        .map_err(|e| Error::io(losses_path.display().to_string(), e))?;

    let artifacts = vec![cfg.bank_path(), cfg.joint_path(), losses_path];
    finish_stage(cfg, &artifacts)?;
    Ok(artifacts)
}

/// Score every jump for cross-level reuse, write the score table, and emit
/// the pruned single-jump bank.
pub fn cmd_select(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    ensure_out_dir(cfg)?;
    let bank = load_bank(&cfg.bank_path())?;
    let corpus = load_corpus(&cfg.train_corpus_path())?;
    let table = select_ojfa(&bank, &corpus)?;
    let scores_path = cfg.scores_path();
    std::fs::write(&scores_path, serde_json::to_string_pretty(&table)?)
        .map_err(|e| Error::io(scores_path.display().to_string(), e))?;
    let pruned = bank.pruned_to(table.chosen)?;
    save_bank(&pruned, &cfg.ojfa_path())?;
    let artifacts = vec![scores_path, cfg.ojfa_path()];
    finish_stage(cfg, &artifacts)?;
    Ok(artifacts)
}

fn expand_strategies(labels: &[String], chosen: usize, levels: usize) -> Result<Vec<StrategyKind>> {
    let mut kinds = Vec::new();
    for label in labels {
        if label == "arbitrary:all" {
            kinds.extend((0..levels).map(|m| StrategyKind::Arbitrary { level: m }));
        } else {
            kinds.push(StrategyKind::parse(label, Some(chosen))?);
        }
    }
    Ok(kinds)
}

/// One row of the early-exit sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExitSweepRow {
    pub lambda: f64,
    pub mean_exit_level: f64,
    /// Fraction of probe sequences whose early-exit token matches the full
    /// forward pass.
    pub full_pass_agreement: f64,
}

/// Evaluate every configured strategy on the test corpus and emit the
/// report files, plus an early-exit sweep over the lambda grid.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    ensure_out_dir(cfg)?;
    let weights = load_or_init_model(cfg)?;
    let mut bank = load_bank(&cfg.bank_path())?;
    if bank.joint.is_none() && cfg.joint_path().exists() {
        bank.joint = load_bank(&cfg.joint_path())?.joint;
    }
    let table: ReuseScoreTable = serde_json::from_str(
        &std::fs::read_to_string(cfg.scores_path())
            .map_err(|e| Error::io(cfg.scores_path().display().to_string(), e))?,
    )?;
    let corpus = load_corpus(&cfg.test_corpus_path())?;

    let kinds = expand_strategies(&cfg.strategies, table.chosen, corpus.num_blocks)?;
    let mut strategies = Vec::with_capacity(kinds.len());
    for kind in &kinds {
        strategies.push(StrategySeries {
            label: kind.label(),
            per_level: evaluate_strategy(kind, &weights, &bank, &corpus)?,
        });
    }

    let report = EvalReport {
        meta: ReportMeta {
            n_records: corpus.len(),
            hidden: corpus.hidden,
            exit_levels: corpus.num_blocks,
            bank_hash: Some(file_hash(&cfg.bank_path())?),
            corpus_hash: Some(file_hash(&cfg.test_corpus_path())?),
            corpus_seed: Some(cfg.corpus.seed),
            train_seed: Some(cfg.train.seed),
            ojfa_level: Some(table.chosen),
        },
        strategies,
        score_table: Some(table.clone()),
    };
    let mut artifacts = emit_report(
        &report,
        &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg],
        &cfg.out_dir,
    )?;

    if let Some(sweep) = exit_sweep(cfg, &weights, &bank, table.chosen)? {
        let path = cfg.out_dir.join("early_exit.json");
        std::fs::write(&path, serde_json::to_string_pretty(&sweep)?)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        artifacts.push(path);
    }

    finish_stage(cfg, &artifacts)?;
    Ok(artifacts)
}

fn exit_sweep(
    cfg: &RunConfig,
    weights: &TransformerWeights,
    bank: &JumpBank,
    chosen: usize,
) -> Result<Option<Vec<ExitSweepRow>>> {
    if cfg.lambda_grid.is_empty() {
        return Ok(None);
    }
    let probes: Vec<Vec<u8>> = match cfg.corpus.source.as_str() {
        "synthetic" => {
            let mut rng = Rng::new(cfg.corpus.seed);
            synthetic_texts(
                &mut rng,
                cfg.corpus.num_texts.min(8),
                cfg.corpus.text_len,
                weights.config.vocab_size,
            )
        }
        "text" => match &cfg.corpus.text_path {
            Some(path) => read_text_file(path)?.into_iter().take(8).collect(),
            None => return Ok(None),
        },
        _ => return Ok(None), // imported hidden states carry no token text
    };
    let jump = match bank.jump_for_level(chosen) {
        Some(j) => j,
        None => return Ok(None),
    };

    let mut rows = Vec::with_capacity(cfg.lambda_grid.len());
    for &lambda in &cfg.lambda_grid {
        let mut level_sum = 0usize;
        let mut agree = 0usize;
        let mut count = 0usize;
        for text in &probes {
            let len = text.len().min(weights.config.max_seq_len);
            if len < 2 {
                continue;
            }
            let tokens: Vec<usize> = text[..len].iter().map(|&b| b as usize).collect();
            let outcome = early_exit_run(weights, ExitPolicy::SingleJump(jump), &tokens, lambda)?;
            let full = early_exit_run(weights, ExitPolicy::SingleJump(jump), &tokens, 1.0)?;
            level_sum += outcome.exit_level;
            agree += usize::from(outcome.token == full.token);
            count += 1;
        }
        if count == 0 {
            return Ok(None);
        }
        rows.push(ExitSweepRow {
            lambda,
            mean_exit_level: level_sum as f64 / count as f64,
            full_pass_agreement: agree as f64 / count as f64,
        });
    }
    Ok(Some(rows))
}

/// Run every stage in order.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut artifacts = cmd_gen_model(cfg)?;
    artifacts.extend(cmd_gen_corpus(cfg)?);
    artifacts.extend(cmd_train(cfg)?);
    artifacts.extend(cmd_select(cfg)?);
    artifacts.extend(cmd_evaluate(cfg)?);
    Ok(artifacts)
}
