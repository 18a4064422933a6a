//! Paired experiments over synthetic populations.
//!
//! Every arm sees the same users, the same prompts and the same random tap
//! stream for each user; only the engine configuration differs. Per-user
//! metrics are then compared pairwise against the control arm.

pub mod plot;
pub mod report;
pub mod stats;
pub mod sweep;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decoder::Decoder;
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::language_model::{LanguageModel, Lexicon, LmConfig};
use crate::layout::KeyboardLayout;
use crate::par::{map_range, Execution};
use crate::simulator::{
    derive_seed, gen_user, rng_from, run_session, Archetype, PromptSampler, SessionMetrics,
    SyntheticUser,
};

pub use stats::{paired_delta, PairedDelta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub users: usize,
    /// Assigned to users round-robin.
    #[serde(default = "default_archetypes")]
    pub archetypes: Vec<Archetype>,
}

fn default_archetypes() -> Vec<Archetype> {
    vec![Archetype::default()]
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            users: 50,
            archetypes: default_archetypes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    #[serde(default)]
    pub engine: EngineConfig,
}

impl ArmConfig {
    pub fn new(name: impl Into<String>, engine: EngineConfig) -> Self {
        Self {
            name: name.into(),
            engine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    #[serde(default)]
    pub population: PopulationConfig,
    /// Words typed before measurement starts; they only train the engine.
    pub warmup_words: usize,
    pub measured_words: usize,
    /// Restrict the shipped lexicon to its most frequent words.
    #[serde(default)]
    pub lexicon_size: Option<usize>,
    pub control: ArmConfig,
    pub arms: Vec<ArmConfig>,
}

impl ExperimentConfig {
    pub fn from_json(doc: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(doc)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.population.users == 0 {
            return bad("population needs at least one user".into());
        }
        if self.population.archetypes.is_empty() {
            return bad("population needs at least one archetype".into());
        }
        for a in &self.population.archetypes {
            a.validate()?;
        }
        if self.measured_words == 0 {
            return bad("measured_words must be at least 1".into());
        }
        if self.arms.is_empty() {
            return bad("an experiment needs at least one arm besides the control".into());
        }
        if self.lexicon_size == Some(0) {
            return bad("lexicon_size must be positive".into());
        }
        let mut names = BTreeSet::new();
        for arm in self.all_arms() {
            if arm.name.trim().is_empty() || arm.name.contains([',', '\n']) {
                return bad(format!("invalid arm name {:?}", arm.name));
            }
            if !names.insert(arm.name.as_str()) {
                return bad(format!("duplicate arm name {:?}", arm.name));
            }
            arm.engine.validate()?;
        }
        Ok(())
    }

    /// Control first, then the arms in order.
    pub fn all_arms(&self) -> impl Iterator<Item = &ArmConfig> {
        std::iter::once(&self.control).chain(&self.arms)
    }

    pub fn decoder(&self) -> Decoder {
        let lexicon = match self.lexicon_size {
            Some(n) => Lexicon::english().top(n),
            None => Lexicon::english(),
        };
        Decoder::new(
            KeyboardLayout::qwerty(),
            LanguageModel::new(lexicon, LmConfig::default()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AvgSpatialCost,
    Top1ErrorRate,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::AvgSpatialCost, Metric::Top1ErrorRate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AvgSpatialCost => "avg_spatial_cost",
            Metric::Top1ErrorRate => "top1_error_rate",
        }
    }

    pub fn of(self, m: &SessionMetrics) -> f64 {
        match self {
            Metric::AvgSpatialCost => m.avg_spatial_cost,
            Metric::Top1ErrorRate => m.top1_error_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    pub is_control: bool,
    pub users: usize,
    pub words: u64,
    pub avg_spatial_cost: f64,
    pub top1_error_rate: f64,
    pub autocorrect_good: u64,
    pub autocorrect_bad: u64,
    /// Relative change against the control; `None` when undefined.
    pub spatial_delta: Option<PairedDelta>,
    pub error_delta: Option<PairedDelta>,
}

impl ArmReport {
    pub fn mean(&self, metric: Metric) -> f64 {
        match metric {
            Metric::AvgSpatialCost => self.avg_spatial_cost,
            Metric::Top1ErrorRate => self.top1_error_rate,
        }
    }

    pub fn delta(&self, metric: Metric) -> Option<&PairedDelta> {
        match metric {
            Metric::AvgSpatialCost => self.spatial_delta.as_ref(),
            Metric::Top1ErrorRate => self.error_delta.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub master_seed: u64,
    pub users: usize,
    pub measured_words: usize,
    /// Control first.
    pub arms: Vec<ArmReport>,
    /// Fingerprint of each user's prompt and tap stream; identical in every arm.
    pub stream_checksums: Vec<u64>,
    /// `per_user[arm][user]`, arms in report order.
    pub per_user: Vec<Vec<SessionMetrics>>,
}

impl ExperimentReport {
    pub fn arm_index(&self, name: &str) -> Option<usize> {
        self.arms.iter().position(|a| a.name == name)
    }

    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arm_index(name).map(|i| &self.arms[i])
    }

    pub fn values(&self, arm: &str, metric: Metric) -> Result<Vec<f64>> {
        let i = self
            .arm_index(arm)
            .ok_or_else(|| Error::InvalidConfig(format!("no arm named {arm:?}")))?;
        Ok(self.per_user[i].iter().map(|m| metric.of(m)).collect())
    }

    /// Paired delta of `arm` relative to `baseline`, any two arms.
    pub fn compare(&self, baseline: &str, arm: &str, metric: Metric) -> Result<PairedDelta> {
        paired_delta(&self.values(baseline, metric)?, &self.values(arm, metric)?)
    }

    /// The non-control arm with the lowest mean of `metric`, ties by order.
    pub fn best_arm(
        &self,
        metric: Metric,
        filter: impl Fn(&ArmReport) -> bool,
    ) -> Option<&ArmReport> {
        self.arms
            .iter()
            .filter(|a| filter(a))
            .min_by(|a, b| a.mean(metric).total_cmp(&b.mean(metric)))
    }
}

/// A user of the population with their prompts and tap seed.
#[derive(Debug, Clone)]
pub struct PopulationMember {
    pub user: SyntheticUser,
    pub prompts: Vec<String>,
    pub touch_seed: u64,
}

/// Users, prompts and tap seeds, all derived from the master seed. The same
/// call with the same config always yields the same population.
pub fn population(config: &ExperimentConfig, decoder: &Decoder) -> Vec<PopulationMember> {
    let sampler = PromptSampler::new(decoder.lm().lexicon());
    let words = config.warmup_words + config.measured_words;
    (0..config.population.users)
        .map(|i| {
            let seed = derive_seed(config.master_seed, i as u64);
            let arch = &config.population.archetypes[i % config.population.archetypes.len()];
            let user = gen_user(arch, decoder.layout(), derive_seed(seed, 0));
            let prompts = sampler.sample(words, &mut rng_from(derive_seed(seed, 1)));
            PopulationMember {
                user,
                prompts,
                touch_seed: derive_seed(seed, 2),
            }
        })
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentReport> {
    config.validate()?;
    run_experiment_with(&Arc::new(config.decoder()), config, exec)
}

/// Runs with a prebuilt decoder (which must match `config.lexicon_size`).
pub fn run_experiment_with(
    decoder: &Arc<Decoder>,
    config: &ExperimentConfig,
    exec: Execution,
) -> Result<ExperimentReport> {
    config.validate()?;
    let members = population(config, decoder);
    let arms: Vec<&ArmConfig> = config.all_arms().collect();
    let (n_users, n_arms) = (members.len(), arms.len());

    let runs = map_range(exec, n_users * n_arms, |idx| {
        let (u, a) = (idx / n_arms, idx % n_arms);
        let m = &members[u];
        run_session(
            decoder,
            &m.user,
            &arms[a].engine,
            &m.prompts,
            config.warmup_words,
            m.touch_seed,
        )
        .map(|out| (out.metrics, out.checksum))
    });

    let mut per_user = vec![Vec::with_capacity(n_users); n_arms];
    let mut checksums = Vec::with_capacity(n_users);
    for (idx, run) in runs.into_iter().enumerate() {
        let (u, a) = (idx / n_arms, idx % n_arms);
        let (metrics, checksum) = run?;
        if a == 0 {
            checksums.push(checksum);
        } else if checksums[u] != checksum {
            return Err(Error::PairingViolation { user: u });
        }
        per_user[a].push(metrics);
    }

    let control_cost: Vec<f64> = per_user[0].iter().map(|m| m.avg_spatial_cost).collect();
    let control_err: Vec<f64> = per_user[0].iter().map(|m| m.top1_error_rate).collect();
    let reports = arms
        .iter()
        .zip(&per_user)
        .enumerate()
        .map(|(i, (arm, users))| {
            let nf = users.len() as f64;
            let cost: Vec<f64> = users.iter().map(|m| m.avg_spatial_cost).collect();
            let err: Vec<f64> = users.iter().map(|m| m.top1_error_rate).collect();
            ArmReport {
                name: arm.name.clone(),
                is_control: i == 0,
                users: users.len(),
                words: users.iter().map(|m| m.words).sum(),
                avg_spatial_cost: cost.iter().sum::<f64>() / nf,
                top1_error_rate: err.iter().sum::<f64>() / nf,
                autocorrect_good: users.iter().map(|m| m.autocorrect_good).sum(),
                autocorrect_bad: users.iter().map(|m| m.autocorrect_bad).sum(),
                spatial_delta: paired_delta(&control_cost, &cost).ok(),
                error_delta: paired_delta(&control_err, &err).ok(),
            }
        })
        .collect();

    Ok(ExperimentReport {
        name: config.name.clone(),
        master_seed: config.master_seed,
        users: n_users,
        measured_words: config.measured_words,
        arms: reports,
        stream_checksums: checksums,
        per_user,
    })
}
