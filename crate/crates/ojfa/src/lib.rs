//! Low-rank early-exit shortcut jumps for transformer hidden states.
//!
//! A transformer stacks `K` blocks and normally predicts only from the final
//! block's representation `h^K`. An early-exit shortcut instead maps an
//! intermediate representation `h^k` to an approximation of `h^K` and feeds
//! that through the model head. This crate implements the normalized low-rank
//! jump family (batch normalization followed by two low-rank matrices
//! `A: H x r` and `B: r x H`), trains one jump per exit level against MSE,
//! and then scores every trained jump for *cross-level reuse* with a signed
//! sensitive cosine similarity. The best-scoring jump becomes the single
//! one-jump-fits-all (OJFA) shortcut: every other jump can be discarded,
//! cutting shortcut parameter cost by a factor of `K` at inference.
//!
//! Everything runs at desk scale on a built-in seeded toy transformer, or on
//! hidden-state corpora imported from real models via the `OJFC` file format.
//!
//! ## Capabilities, one runnable example each
//!
//! ```text
//! examples/
//! ├── toy_model.rs            # seeded transformer, per-level hidden traces
//! ├── build_corpus.rs         # hidden-state corpus: build, split, save
//! ├── train_shortcuts.rs      # per-level jump training + parameter accounting
//! ├── select_jump.rs          # reuse scoring and the single-jump selection
//! ├── evaluate_strategies.rs  # precision/surprisal for every strategy
//! ├── early_exit.rs           # confidence-threshold exit policy sweep
//! ├── param_costs.rs          # exact parameter-cost arithmetic at scale
//! └── full_pipeline.rs        # config-driven end-to-end run
//! ```
//!
//! Run any of them with `cargo run --release -p ojfa --example <name>`.
//!
//! The `ojfa` binary drives the same pipeline from a JSON config:
//! `gen-model`, `gen-corpus`, `train`, `select`, `evaluate`, `pipeline`.
//!
//! ## File formats
//!
//! Three little-endian binary formats are the public contract for
//! interoperating with externally dumped data:
//!
//! - `OJFW` — toy transformer weights ([`model::save_model`])
//! - `OJFC` — hidden-state corpora ([`corpus::save_corpus`])
//! - `OJFS` — shortcut-jump banks ([`bank::save_bank`])
//!
//! All three round-trip bit-exactly at 32-bit float precision.

pub mod bank;
pub mod binio;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod jump;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod report;
pub mod select;

pub use bank::JumpBank;
pub use corpus::{HiddenCorpus, HiddenRecord};
pub use error::Error;
pub use eval::StrategyKind;
pub use jump::{LowRankJump, TrainSettings, TrainedJump};
pub use model::{HiddenTrace, TransformerConfig, TransformerWeights};
pub use num::{Matrix, Rng};
pub use pipeline::RunConfig;
pub use report::EvalReport;
pub use select::ReuseScoreTable;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
