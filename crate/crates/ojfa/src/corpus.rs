//! Hidden-state corpora: build from a model, split, and persist.
//!
//! A corpus is a set of records, one per sampled token position, each
//! holding that position's hidden vector at every level `0..=K` (level `K`
//! is the final representation the shortcuts are trained against). Values
//! are rounded through `f32` when a record is built, so the in-memory
//! corpus and its `OJFC` file carry identical numbers.
//!
//! The `OJFC` format is the import path for hidden states dumped from real
//! models; loading needs no model weights.

use std::path::Path;

use rayon::prelude::*;

use crate::binio::{BinReader, BinWriter};
use crate::error::Error;
use crate::model::{forward_trace, TransformerWeights};
use crate::num::Rng;
use crate::Result;

pub(crate) const MAGIC: &[u8; 4] = b"OJFC";
pub(crate) const VERSION: u32 = 1;

/// Sampled positions keep at least this many tokens of context, so
/// next-token distributions are non-degenerate.
pub const MIN_POS: usize = 2;

/// Which side of a split a corpus belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// One token position's representation at every block level.
#[derive(Debug, Clone)]
pub struct HiddenRecord {
    /// Index of the source text.
    pub sentence_id: u64,
    /// Token position within the text.
    pub position: u32,
    /// `K + 1` vectors of length `H`; `levels[K]` is the final representation.
    pub levels: Vec<Vec<f64>>,
}

/// A set of hidden-state records sharing dimensions `(H, K)`.
#[derive(Debug, Clone)]
pub struct HiddenCorpus {
    /// Hidden width `H`.
    pub hidden: usize,
    /// Block count `K`; each record stores `K + 1` levels.
    pub num_blocks: usize,
    pub records: Vec<HiddenRecord>,
    /// Set by [`split`]; `None` for freshly built or imported corpora.
    pub split: Option<Split>,
    /// Texts skipped during building because they were shorter than
    /// `MIN_POS + 1` tokens. Not persisted.
    pub skipped_texts: usize,
}

impl HiddenCorpus {
    /// Number of levels per record, `K + 1`.
    pub fn num_levels(&self) -> usize {
        self.num_blocks + 1
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Empty("HiddenCorpus"));
        }
        for rec in &self.records {
            if rec.levels.len() != self.num_levels() {
                return Err(Error::DimMismatch {
                    op: "HiddenCorpus",
                    left: format!("{} levels", self.num_levels()),
                    right: format!("record with {} levels", rec.levels.len()),
                });
            }
            for level in &rec.levels {
                if level.len() != self.hidden {
                    return Err(Error::DimMismatch {
                        op: "HiddenCorpus",
                        left: format!("hidden {}", self.hidden),
                        right: format!("level vector of length {}", level.len()),
                    });
                }
                if !level.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("HiddenCorpus"));
                }
            }
        }
        Ok(())
    }
}

fn round_f32(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| v as f32 as f64).collect()
}

/// Build a corpus by forward-passing each text and sampling
/// `positions_per_text` distinct token positions uniformly from
/// `{MIN_POS .. len-1}` (fewer when the text has fewer eligible positions).
///
/// Texts shorter than `MIN_POS + 1` tokens are skipped and counted in
/// `skipped_texts`; texts longer than the model's `max_seq_len` are
/// truncated to it. Record order is fixed by text order then position
/// order, so the fan-out across texts cannot change output bytes. The
/// result is a pure function of `(weights, texts, rng seed)`.
pub fn build_corpus(
    weights: &TransformerWeights,
    texts: &[Vec<u8>],
    positions_per_text: usize,
    rng: &mut Rng,
) -> Result<HiddenCorpus> {
    if positions_per_text == 0 {
        return Err(Error::InvalidArgument {
            name: "positions_per_text",
            message: "must be at least 1".to_string(),
        });
    }
    if texts.is_empty() {
        return Err(Error::Empty("build_corpus"));
    }
    let base = rng.next_u64();
    let cfg = &weights.config;

    let per_text: Vec<Result<Vec<HiddenRecord>>> = texts
        .par_iter()
        .enumerate()
        .map(|(id, text)| {
            let len = text.len().min(cfg.max_seq_len);
            if len < MIN_POS + 1 {
                return Ok(Vec::new());
            }
            let tokens: Vec<usize> = text[..len].iter().map(|&b| b as usize).collect();
            let trace = forward_trace(weights, &tokens)?;
            let mut candidates: Vec<usize> = (MIN_POS..len).collect();
            let mut text_rng = Rng::derive(base, id as u64);
            text_rng.shuffle(&mut candidates);
            let take = positions_per_text.min(candidates.len());
            let mut positions: Vec<usize> = candidates[..take].to_vec();
            positions.sort_unstable();
            Ok(positions
                .into_iter()
                .map(|pos| HiddenRecord {
                    sentence_id: id as u64,
                    position: pos as u32,
                    levels: (0..trace.num_levels())
                        .map(|k| round_f32(trace.level_at(k, pos)))
                        .collect(),
                })
                .collect())
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = 0usize;
    for chunk in per_text {
        let chunk = chunk?;
        if chunk.is_empty() {
            skipped += 1;
        }
        records.extend(chunk);
    }

    let corpus = HiddenCorpus {
        hidden: cfg.hidden_dim,
        num_blocks: cfg.num_blocks,
        records,
        split: None,
        skipped_texts: skipped,
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Disjoint partition by shuffled record index. The first side receives
/// `floor(n * train_fraction)` records, the second the remainder; both
/// sides keep the shuffled order.
pub fn split(
    corpus: &HiddenCorpus,
    train_fraction: f64,
    rng: &mut Rng,
) -> Result<(HiddenCorpus, HiddenCorpus)> {
    if corpus.len() < 2 {
        return Err(Error::InvalidArgument {
            name: "corpus",
            message: format!("split needs at least 2 records, got {}", corpus.len()),
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument {
            name: "train_fraction",
            message: format!("must be strictly inside (0, 1), got {train_fraction}"),
        });
    }
    let n = corpus.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument {
            name: "train_fraction",
            message: format!("fraction {train_fraction} leaves an empty side for {n} records"),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let side = |ids: &[usize], tag: Split| HiddenCorpus {
        hidden: corpus.hidden,
        num_blocks: corpus.num_blocks,
        records: ids.iter().map(|&i| corpus.records[i].clone()).collect(),
        split: Some(tag),
        skipped_texts: 0,
    };
    Ok((
        side(&order[..n_train], Split::Train),
        side(&order[n_train..], Split::Test),
    ))
}

/// Write a corpus as an `OJFC` file.
///
/// Layout: magic `OJFC`, version u32, H u32, K u32, record_count u64, then
/// per record: sentence_id u64, position u32, `(K+1) * H` little-endian
/// f32 values (level 0 first).
pub fn save_corpus(corpus: &HiddenCorpus, path: &Path) -> Result<()> {
    corpus.validate()?;
    let mut w = BinWriter::create(path)?;
    w.magic(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(corpus.hidden as u32)?;
    w.u32(corpus.num_blocks as u32)?;
    w.u64(corpus.records.len() as u64)?;
    for rec in &corpus.records {
        w.u64(rec.sentence_id)?;
        w.u32(rec.position)?;
        for level in &rec.levels {
            w.f32_slice(level)?;
        }
    }
    w.finish()
}

/// Read an `OJFC` file; validates every corpus invariant. Needs no model.
pub fn load_corpus(path: &Path) -> Result<HiddenCorpus> {
    let mut r = BinReader::open(path)?;
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}, expected {VERSION}")));
    }
    let hidden = r.u32("hidden")? as usize;
    let num_blocks = r.u32("num_blocks")? as usize;
    if hidden == 0 || num_blocks == 0 {
        return Err(r.fail("hidden and num_blocks must be positive"));
    }
    let count = r.u64("record_count")?;
    if count == 0 {
        return Err(r.fail("corpus must hold at least one record"));
    }
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let sentence_id = r.u64("sentence_id")?;
        let position = r.u32("position")?;
        let levels = (0..=num_blocks)
            .map(|k| r.f32_vec(hidden, &format!("level {k}")))
            .collect::<Result<Vec<_>>>()?;
        records.push(HiddenRecord {
            sentence_id,
            position,
            levels,
        });
    }
    r.expect_eof()?;
    let corpus = HiddenCorpus {
        hidden,
        num_blocks,
        records,
        split: None,
        skipped_texts: 0,
    };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, TransformerConfig};

    fn test_weights() -> TransformerWeights {
        init_model(&TransformerConfig {
            vocab_size: 256,
            hidden_dim: 16,
            num_blocks: 2,
            num_heads: 2,
            ffn_dim: 24,
            max_seq_len: 12,
            seed: 21,
        })
        .unwrap()
    }

    fn texts(n: usize, len: usize) -> Vec<Vec<u8>> {
        (0..n)
            .map(|i| (0..len).map(|j| ((i * 31 + j * 7) % 200) as u8).collect())
            .collect()
    }

    #[test]
    fn one_position_per_text_gives_one_record_each() {
        let w = test_weights();
        let mut rng = Rng::new(1);
        let corpus = build_corpus(&w, &texts(10, 8), 1, &mut rng).unwrap();
        assert_eq!(corpus.len(), 10);
        assert_eq!(corpus.skipped_texts, 0);
        assert_eq!(corpus.num_levels(), 3);
    }

    #[test]
    fn short_texts_are_skipped_and_counted() {
        let w = test_weights();
        let mut all = texts(4, 8);
        all.push(vec![7u8, 8]); // too short: only positions 0 and 1 exist
        all.push(Vec::new());
        let mut rng = Rng::new(2);
        let corpus = build_corpus(&w, &all, 1, &mut rng).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.skipped_texts, 2);
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let w = test_weights();
        let t = texts(6, 10);
        let a = build_corpus(&w, &t, 2, &mut Rng::new(5)).unwrap();
        let b = build_corpus(&w, &t, 2, &mut Rng::new(5)).unwrap();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.sentence_id, rb.sentence_id);
            assert_eq!(ra.position, rb.position);
            assert_eq!(ra.levels, rb.levels);
        }
    }

    #[test]
    fn stored_final_level_matches_recomputed_trace() {
        let w = test_weights();
        let t = texts(3, 9);
        let corpus = build_corpus(&w, &t, 2, &mut Rng::new(8)).unwrap();
        for rec in &corpus.records {
            let tokens: Vec<usize> = t[rec.sentence_id as usize]
                .iter()
                .map(|&b| b as usize)
                .collect();
            let trace = forward_trace(&w, &tokens).unwrap();
            let stored = &rec.levels[corpus.num_blocks];
            let fresh = trace.level_at(corpus.num_blocks, rec.position as usize);
            for (s, f) in stored.iter().zip(fresh) {
                assert!((s - f).abs() <= 1e-6, "{s} vs {f}");
            }
        }
    }

    #[test]
    fn split_sizes_and_union() {
        let w = test_weights();
        let corpus = build_corpus(&w, &texts(12, 8), 1, &mut Rng::new(3)).unwrap();
        let (train, test) = split(&corpus, 0.75, &mut Rng::new(4)).unwrap();
        assert_eq!(train.len(), 9);
        assert_eq!(test.len(), 3);
        assert_eq!(train.split, Some(Split::Train));
        assert_eq!(test.split, Some(Split::Test));

        let mut seen: Vec<(u64, u32)> = train
            .records
            .iter()
            .chain(&test.records)
            .map(|r| (r.sentence_id, r.position))
            .collect();
        seen.sort_unstable();
        let mut original: Vec<(u64, u32)> = corpus
            .records
            .iter()
            .map(|r| (r.sentence_id, r.position))
            .collect();
        original.sort_unstable();
        assert_eq!(seen, original);
    }

    #[test]
    fn split_is_deterministic() {
        let w = test_weights();
        let corpus = build_corpus(&w, &texts(8, 8), 1, &mut Rng::new(3)).unwrap();
        let (a, _) = split(&corpus, 0.5, &mut Rng::new(9)).unwrap();
        let (b, _) = split(&corpus, 0.5, &mut Rng::new(9)).unwrap();
        let ids = |c: &HiddenCorpus| {
            c.records
                .iter()
                .map(|r| (r.sentence_id, r.position))
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn split_rejects_degenerate_fraction() {
        let w = test_weights();
        let corpus = build_corpus(&w, &texts(4, 8), 1, &mut Rng::new(3)).unwrap();
        assert!(split(&corpus, 0.0, &mut Rng::new(1)).is_err());
        assert!(split(&corpus, 1.0, &mut Rng::new(1)).is_err());
        assert!(split(&corpus, 0.1, &mut Rng::new(1)).is_err()); // floor(4*0.1) = 0
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let w = test_weights();
        let corpus = build_corpus(&w, &texts(5, 9), 2, &mut Rng::new(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("c1.ojfc");
        let p2 = dir.path().join("c2.ojfc");
        save_corpus(&corpus, &p1).unwrap();
        let loaded = load_corpus(&p1).unwrap();
        save_corpus(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupted_magic_names_expected_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ojfc");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00").unwrap();
        let err = load_corpus(&path).unwrap_err().to_string();
        assert!(err.contains("OJFC"), "{err}");
    }

    #[test]
    fn header_only_import_without_model() {
        // A corpus with large-model dimensions loads with no toy model around.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.ojfc");
        let hidden = 3072;
        let num_blocks = 32;
        let corpus = HiddenCorpus {
            hidden,
            num_blocks,
            records: vec![HiddenRecord {
                sentence_id: 9,
                position: 4,
                levels: (0..=num_blocks)
                    .map(|k| (0..hidden).map(|j| (k * j) as f64 * 0.25).collect())
                    .collect(),
            }],
            split: None,
            skipped_texts: 0,
        };
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded.hidden, hidden);
        assert_eq!(loaded.num_blocks, num_blocks);
        assert_eq!(loaded.records[0].levels, corpus.records[0].levels);
    }
}
