//! Two-stage span identifier for nested named entity recognition.
//!
//! Stage one enumerates seed spans with a set of sliding windows, keeps the
//! ones a filter head believes overlap an entity, and shifts their boundaries
//! with a regressor head. Stage two classifies each adjusted span and removes
//! near-duplicates with Soft-NMS.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod objective;
pub mod span;
pub mod synth;
pub mod targets;
pub mod train;

pub use checkpoint::{Checkpoint, Prediction, CHECKPOINT_VERSION};
pub use config::{HyperParams, KvFile};
pub use corpus::{build_vocab, read_jsonl, write_jsonl, Encoded, Entity, Gold, Sentence, Vocab};
pub use decoder::{decode, soft_nms, DecodeOptions, Decoded, NmsParams, ScoredSpan};
pub use error::{Error, Result};
pub use metrics::{strict_f1, EvalReport, Scores};
pub use nn::{Dims, SpanModel};
pub use objective::{LossParts, LossWeights};
pub use span::{adjust, iou, Offsets, Span};
pub use synth::{generate_synthetic, split_corpus, SynthConfig};
pub use targets::{enumerate_seeds, SpanTarget, WindowSet};
pub use train::{evaluate, EpochLog, TrainState, Trainer};
