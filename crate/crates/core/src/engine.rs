//! Per-user adaptation state: decode against the current model snapshot,
//! commit words back into the touch history, rebuild on a fixed cadence.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterConfig;
use crate::decoder::{AlignOp, AutocorrectConfig, BeamConfig, DecodeResult, Decoder, ModelScorer};
use crate::error::Result;
use crate::layout::TouchPoint;
use crate::spatial_model::{PersonalizedModel, SpatialParams};
use crate::touch_store::{HistoryConfig, TouchHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub history: HistoryConfig,
    pub clusters: ClusterConfig,
    pub params: SpatialParams,
    pub beam: BeamConfig,
    pub autocorrect: AutocorrectConfig,
    /// When false the model stays at the unpersonalized baseline.
    pub personalize: bool,
    /// Commits between scheduled rebuilds.
    pub rebuild_every: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            history: HistoryConfig::default(),
            clusters: ClusterConfig::default(),
            params: SpatialParams::default(),
            beam: BeamConfig::default(),
            autocorrect: AutocorrectConfig::default(),
            personalize: true,
            rebuild_every: 50,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.history.validate()?;
        ClusterConfig::new(self.clusters.k)?;
        self.params.validate()?;
        self.beam.validate()?;
        if self.rebuild_every == 0 {
            return Err(crate::Error::InvalidConfig(
                "rebuild_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitOutcome {
    /// Touches recorded into the history.
    pub trained: usize,
    /// Aligned characters with no key on the layout.
    pub skipped: usize,
    pub rebuilt: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineCounters {
    pub commits: u64,
    pub trained_touches: u64,
    pub skipped_chars: u64,
    pub rebuilds: u64,
}

/// One user's engine. Decoding reads an `Arc` snapshot of the model, so a
/// caller may hold on to a snapshot while the engine rebuilds.
#[derive(Debug, Clone)]
pub struct Engine {
    decoder: Arc<Decoder>,
    config: EngineConfig,
    history: TouchHistory,
    model: Arc<PersonalizedModel>,
    since_rebuild: usize,
    counters: EngineCounters,
}

impl Engine {
    pub fn new(decoder: Arc<Decoder>, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let history = TouchHistory::new(config.history)?;
        let model = Arc::new(PersonalizedModel::baseline(decoder.layout()));
        Ok(Self {
            decoder,
            config,
            history,
            model,
            since_rebuild: 0,
            counters: EngineCounters::default(),
        })
    }

    /// Resumes from a stored history; the model is rebuilt immediately.
    pub fn with_history(
        decoder: Arc<Decoder>,
        config: EngineConfig,
        history: TouchHistory,
    ) -> Result<Self> {
        let mut config = config;
        config.history = *history.config();
        let mut engine = Self::new(decoder, config)?;
        engine.history = history;
        engine.rebuild();
        Ok(engine)
    }

    pub fn decoder(&self) -> &Arc<Decoder> {
        &self.decoder
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn history(&self) -> &TouchHistory {
        &self.history
    }

    pub fn model(&self) -> Arc<PersonalizedModel> {
        Arc::clone(&self.model)
    }

    pub fn counters(&self) -> EngineCounters {
        self.counters
    }

    pub fn decode(&self, touches: &[TouchPoint]) -> DecodeResult {
        let c = &self.config;
        self.decoder
            .decode(touches, &self.model, &c.params, &c.beam, &c.autocorrect)
    }

    /// Rebuilds the model from the current history (baseline when
    /// personalization is off).
    pub fn rebuild(&mut self) {
        self.model = Arc::new(if self.config.personalize {
            PersonalizedModel::build(
                self.decoder.layout(),
                &self.history.aggregate(),
                self.config.clusters,
            )
        } else {
            PersonalizedModel::baseline(self.decoder.layout())
        });
        self.since_rebuild = 0;
        self.counters.rebuilds += 1;
    }

    /// Replaces the scoring parameters, rebuilding when the covariance flag
    /// flips. Returns whether it flipped.
    pub fn set_params(&mut self, params: SpatialParams) -> Result<bool> {
        params.validate()?;
        let toggled = params.covariance_enabled != self.config.params.covariance_enabled;
        self.config.params = params;
        if toggled {
            self.rebuild();
        }
        Ok(toggled)
    }

    /// Commits `word` typed with `touches`, aligning them with the cheapest
    /// alignment under the current model.
    pub fn commit(&mut self, word: &str, touches: &[TouchPoint]) -> CommitOutcome {
        let scorer = ModelScorer {
            model: &self.model,
            params: &self.config.params,
        };
        let alignment = self
            .decoder
            .align(
                word,
                touches,
                &scorer,
                &self.config.params,
                self.config.beam.max_edits,
            )
            .map(|(_, ops)| ops)
            .unwrap_or_default();
        self.commit_aligned(&alignment, touches)
    }

    /// Commits with a known alignment (e.g. the one the decoder produced).
    /// Only plain matches train the history.
    pub fn commit_aligned(
        &mut self,
        alignment: &[AlignOp],
        touches: &[TouchPoint],
    ) -> CommitOutcome {
        let mut out = CommitOutcome::default();
        let mut rotated = false;
        for op in alignment {
            let AlignOp::Match { touch, ch } = *op else {
                continue;
            };
            let Some(key) = self.decoder.layout().get(ch).filter(|k| k.is_letter()) else {
                out.skipped += 1;
                continue;
            };
            let Some(&t) = touches.get(touch) else {
                out.skipped += 1;
                continue;
            };
            let rec = self.history.record_touch(ch, key.normalize(t));
            rotated |= rec.expired.is_some();
            out.trained += 1;
        }
        self.since_rebuild += 1;
        self.counters.commits += 1;
        self.counters.trained_touches += out.trained as u64;
        self.counters.skipped_chars += out.skipped as u64;
        if self.config.personalize && (rotated || self.since_rebuild >= self.config.rebuild_every) {
            self.rebuild();
            out.rebuilt = true;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::language_model::LanguageModel;
    use crate::layout::KeyboardLayout;

    fn engine(config: EngineConfig) -> Engine {
        let lm = LanguageModel::from_document("hello\t5\nhelp\t3\ncat\t2\n").unwrap();
        Engine::new(Arc::new(Decoder::new(KeyboardLayout::qwerty(), lm)), config).unwrap()
    }

    fn centers(e: &Engine, w: &str) -> Vec<TouchPoint> {
        w.chars()
            .map(|c| e.decoder().layout().key_for_char(c).unwrap().center())
            .collect()
    }

    #[test]
    fn commit_trains_aligned_touches() {
        let mut e = engine(EngineConfig::default());
        let t = centers(&e, "hello");
        assert_eq!(e.commit("hello", &t).trained, 5);
        assert_eq!(e.history().total_touches(), 5);

        let mut extra = centers(&e, "cat");
        extra.insert(1, e.decoder().layout().key_for_char('m').unwrap().center());
        let out = e.commit("cat", &extra);
        assert_eq!(out.trained, 3);
    }

    #[test]
    fn rebuild_every_fiftieth_commit() {
        let mut e = engine(EngineConfig::default());
        let t = centers(&e, "cat");
        for i in 1..=100 {
            let out = e.commit("cat", &t);
            assert_eq!(out.rebuilt, i % 50 == 0, "commit {i}");
        }
    }

    #[test]
    fn no_rebuilds_without_personalization() {
        let mut e = engine(EngineConfig {
            personalize: false,
            ..EngineConfig::default()
        });
        let t = centers(&e, "cat");
        for _ in 0..60 {
            assert!(!e.commit("cat", &t).rebuilt);
        }
        assert_eq!(e.model().offset('c'), crate::layout::Offset::ZERO);
    }
}
