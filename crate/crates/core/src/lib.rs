//! Personalized touch decoding.
//!
//! Taps are scored against keys with a Gaussian spatial model whose key
//! centers are shifted by per-cluster offsets learned from the user's own
//! committed words. A greedy axis-aligned clustering decides which keys share
//! an offset. On top of the engine sit a synthetic-typist simulator and a
//! paired experiment harness.
//!
//! ```
//! use std::sync::Arc;
//! use tapfit::{Decoder, Engine, EngineConfig, KeyboardLayout, LanguageModel};
//!
//! let decoder = Arc::new(Decoder::new(KeyboardLayout::qwerty(), LanguageModel::english()));
//! let mut engine = Engine::new(decoder.clone(), EngineConfig::default()).unwrap();
//! let taps: Vec<_> = "thw".chars().map(|c| decoder.layout().key_for_char(c).unwrap().center()).collect();
//! let result = engine.decode(&taps);
//! assert_eq!(result.committed().word, "the");
//! engine.commit("the", &taps);
//! ```

pub mod clustering;
pub mod decoder;
pub mod engine;
pub mod error;
pub mod harness;
pub mod language_model;
pub mod layout;
pub mod par;
pub mod simulator;
pub mod spatial_model;
pub mod touch_store;

pub use clustering::{ClusterConfig, ClusterTree};
pub use decoder::{AutocorrectConfig, BeamConfig, Candidate, DecodeResult, Decoder};
pub use engine::{CommitOutcome, Engine, EngineConfig};
pub use error::{Error, Result};
pub use language_model::{LanguageModel, Lexicon};
pub use layout::{Key, KeyboardLayout, Offset, TouchPoint};
pub use spatial_model::{PersonalizedModel, SpatialParams};
pub use touch_store::{HistoryConfig, KeyStats, StatsMap, TouchHistory};
