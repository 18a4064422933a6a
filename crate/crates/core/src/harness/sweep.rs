//! Canned parameter studies, run in the order: data size and decay, bucket
//! count, cluster count, sigma grid, personalization on/off, covariance.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    run_experiment_with, ArmConfig, ExperimentConfig, ExperimentReport, Metric, PopulationConfig,
};
use crate::clustering::ClusterConfig;
use crate::decoder::Decoder;
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::spatial_model::SpatialParams;
use crate::touch_store::HistoryConfig;

pub const HISTORY_SIZES: [usize; 5] = [250, 400, 500, 650, 800];
pub const DECAY_RATES: [f64; 4] = [0.0, 0.05, 0.10, 0.15];
pub const BUCKET_COUNTS: [usize; 5] = [1, 2, 4, 5, 8];
pub const CLUSTER_COUNTS: [usize; 7] = [4, 5, 6, 7, 8, 9, 10];
pub const SIGMAS: [f64; 5] = [0.40, 0.45, 0.50, 0.55, 0.60];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    HistorySize,
    Decay,
    Buckets,
    Clusters,
    Sigma,
    Personalization,
    Covariance,
}

impl Study {
    pub const ALL: [Study; 7] = [
        Study::HistorySize,
        Study::Decay,
        Study::Buckets,
        Study::Clusters,
        Study::Sigma,
        Study::Personalization,
        Study::Covariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::HistorySize => "history_size",
            Study::Decay => "decay",
            Study::Buckets => "buckets",
            Study::Clusters => "clusters",
            Study::Sigma => "sigma",
            Study::Personalization => "personalization",
            Study::Covariance => "covariance",
        }
    }

    /// Name of the swept parameter.
    pub fn parameter(self) -> &'static str {
        match self {
            Study::HistorySize => "max_points",
            Study::Decay => "decay_rate",
            Study::Buckets => "bucket_count",
            Study::Clusters => "k",
            Study::Sigma | Study::Personalization | Study::Covariance => "sigma0",
        }
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown study {s:?}")))
    }
}

/// Population and session sizes shared by all studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBase {
    pub master_seed: u64,
    pub population: PopulationConfig,
    pub warmup_words: usize,
    pub measured_words: usize,
    pub lexicon_size: Option<usize>,
}

impl Default for SweepBase {
    fn default() -> Self {
        Self {
            master_seed: 1,
            population: PopulationConfig::default(),
            warmup_words: 300,
            measured_words: 200,
            lexicon_size: None,
        }
    }
}

fn unpersonalized(sigma0: f64) -> EngineConfig {
    EngineConfig {
        personalize: false,
        params: SpatialParams::default().with_sigma(sigma0),
        ..EngineConfig::default()
    }
}

fn personalized(history: HistoryConfig, k: usize, params: SpatialParams) -> EngineConfig {
    EngineConfig {
        history,
        clusters: ClusterConfig { k },
        params,
        ..EngineConfig::default()
    }
}

fn history(max_points: usize, bucket_count: usize, decay_rate: f64) -> HistoryConfig {
    HistoryConfig {
        max_points,
        bucket_count,
        decay_rate,
    }
}

/// One swept arm: its name, the parameter value, and whether it personalizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub arm: String,
    pub value: f64,
    pub personalized: bool,
}

/// Builds the experiment for `study`, returning it with the swept points
/// (control excluded).
pub fn study_config(study: Study, base: &SweepBase) -> (ExperimentConfig, Vec<SweepPoint>) {
    let d = SpatialParams::default();
    let mut points = Vec::new();
    let mut arms = Vec::new();
    let mut push = |name: String, value: f64, engine: EngineConfig| {
        points.push(SweepPoint {
            arm: name.clone(),
            value,
            personalized: engine.personalize,
        });
        arms.push(ArmConfig::new(name, engine));
    };
    let mut control = ArmConfig::new("control", unpersonalized(d.sigma0));
    match study {
        Study::HistorySize => {
            for n in HISTORY_SIZES {
                push(
                    format!("max_points={n}"),
                    n as f64,
                    personalized(history(n, 5, 0.0), 7, d),
                );
            }
        }
        Study::Decay => {
            for r in DECAY_RATES {
                push(
                    format!("decay_rate={r:.2}"),
                    r,
                    personalized(history(500, 5, r), 7, d),
                );
            }
        }
        Study::Buckets => {
            for b in BUCKET_COUNTS {
                push(
                    format!("bucket_count={b}"),
                    b as f64,
                    personalized(history(800, b, 0.0), 7, d),
                );
            }
        }
        Study::Clusters => {
            control = ArmConfig::new("control", personalized(HistoryConfig::default(), 7, d));
            for k in CLUSTER_COUNTS {
                push(
                    format!("k={k}"),
                    k as f64,
                    personalized(HistoryConfig::default(), k, d),
                );
            }
        }
        Study::Sigma => {
            for s in SIGMAS {
                push(
                    format!("sigma0={s:.2}"),
                    s,
                    personalized(HistoryConfig::default(), 7, d.with_sigma(s)),
                );
            }
        }
        Study::Personalization => {
            for s in SIGMAS {
                push(
                    format!("on/sigma0={s:.2}"),
                    s,
                    personalized(HistoryConfig::default(), 7, d.with_sigma(s)),
                );
            }
            for s in SIGMAS.into_iter().filter(|&s| s != d.sigma0) {
                push(format!("off/sigma0={s:.2}"), s, unpersonalized(s));
            }
        }
        Study::Covariance => {
            control = ArmConfig::new("control", personalized(HistoryConfig::default(), 7, d));
            for s in SIGMAS {
                let params = SpatialParams {
                    covariance_enabled: true,
                    ..d.with_sigma(s)
                };
                push(
                    format!("cov/sigma0={s:.2}"),
                    s,
                    personalized(HistoryConfig::default(), 7, params),
                );
            }
        }
    }
    let config = ExperimentConfig {
        name: study.name().to_string(),
        master_seed: base.master_seed,
        population: base.population.clone(),
        warmup_words: base.warmup_words,
        measured_words: base.measured_words,
        lexicon_size: base.lexicon_size,
        control,
        arms,
    };
    (config, points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub study: Study,
    pub points: Vec<SweepPoint>,
    pub experiment: ExperimentReport,
    /// Swept value with the lowest mean error rate, and with the lowest cost.
    pub best_error_value: f64,
    pub best_cost_value: f64,
    /// Observations worth flagging (e.g. a significant error-rate change in
    /// the cluster study). Never fatal.
    pub notes: Vec<String>,
}

pub const SWEEP_CSV_HEADER: &str =
    "study,parameter,value,arm,personalized,metric,mean,delta_pct,ci_low_pct,ci_high_pct,p_value";

impl SweepReport {
    fn best_value(&self, metric: Metric) -> f64 {
        best_point(&self.points, &self.experiment, metric).value
    }

    /// Where the error-rate optimum sits among the swept values.
    pub fn optimum_position(&self) -> &'static str {
        let vals: Vec<f64> = self.points.iter().map(|p| p.value).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.best_error_value == lo || self.best_error_value == hi {
            "boundary"
        } else {
            "interior"
        }
    }

    /// Long format: one row per swept arm and metric, relative deltas in
    /// percent with 95% CI bounds.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{SWEEP_CSV_HEADER}").unwrap();
        for p in &self.points {
            let arm = self.experiment.arm(&p.arm).expect("point arms exist");
            for m in Metric::ALL {
                let cells = match arm.delta(m) {
                    Some(d) => format!(
                        "{:.4},{:.4},{:.4},{:.6}",
                        d.delta * 100.0,
                        d.ci_low * 100.0,
                        d.ci_high * 100.0,
                        d.p_value
                    ),
                    None => "NA,NA,NA,NA".into(),
                };
                writeln!(
                    s,
                    "{},{},{},{},{},{},{:.6},{}",
                    self.study.name(),
                    self.study.parameter(),
                    p.value,
                    p.arm,
                    p.personalized,
                    m.name(),
                    arm.mean(m),
                    cells
                )
                .unwrap();
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = self.experiment.to_text();
        writeln!(s, "\nsweep over {}", self.study.parameter()).unwrap();
        writeln!(
            s,
            "  lowest top1_error_rate at {} ({})",
            self.best_error_value,
            self.optimum_position()
        )
        .unwrap();
        writeln!(s, "  lowest avg_spatial_cost at {}", self.best_cost_value).unwrap();
        for n in &self.notes {
            writeln!(s, "  note: {n}").unwrap();
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut out = self.experiment.write_to(dir)?;
        for (suffix, body) in [("sweep.csv", self.to_csv()), ("sweep.txt", self.to_text())] {
            let p = dir.join(format!("{}_{suffix}", self.study.name()));
            fs::write(&p, body)?;
            out.push(p);
        }
        Ok(out)
    }
}

fn best_point<'a>(
    points: &'a [SweepPoint],
    r: &ExperimentReport,
    metric: Metric,
) -> &'a SweepPoint {
    points
        .iter()
        .min_by(|a, b| {
            let ma = r.arm(&a.arm).map_or(f64::INFINITY, |x| x.mean(metric));
            let mb = r.arm(&b.arm).map_or(f64::INFINITY, |x| x.mean(metric));
            ma.total_cmp(&mb)
        })
        .expect("studies have points")
}

pub fn run_sweep(study: Study, base: &SweepBase, exec: Execution) -> Result<SweepReport> {
    let (config, _) = study_config(study, base);
    run_sweep_with(&Arc::new(config.decoder()), study, base, exec)
}

pub fn run_sweep_with(
    decoder: &Arc<Decoder>,
    study: Study,
    base: &SweepBase,
    exec: Execution,
) -> Result<SweepReport> {
    let (config, points) = study_config(study, base);
    let experiment = run_experiment_with(decoder, &config, exec)?;
    let mut notes = Vec::new();
    if study == Study::Clusters {
        for p in &points {
            let arm = experiment.arm(&p.arm).expect("arm exists");
            if arm.error_delta.is_some_and(|d| d.excludes_zero()) {
                notes.push(format!(
                    "{} changes top1_error_rate significantly versus k=7",
                    p.arm
                ));
            }
        }
    }
    if study == Study::Personalization {
        let on = points
            .iter()
            .filter(|p| p.personalized)
            .cloned()
            .collect::<Vec<_>>();
        let off_best = experiment
            .best_arm(Metric::Top1ErrorRate, |a| {
                a.is_control || a.name.starts_with("off/")
            })
            .map(|a| a.name.clone());
        let on_best = best_point(&on, &experiment, Metric::Top1ErrorRate);
        if let Some(off) = off_best {
            if let Ok(d) = experiment.compare(&off, &on_best.arm, Metric::Top1ErrorRate) {
                notes.push(format!(
                    "best personalized arm {} vs best unpersonalized arm {}: top1_error_rate {:+.3}% [{:+.3}, {:+.3}] p={:.4}",
                    on_best.arm,
                    off,
                    d.delta * 100.0,
                    d.ci_low * 100.0,
                    d.ci_high * 100.0,
                    d.p_value
                ));
            }
        }
    }
    let mut report = SweepReport {
        study,
        points,
        experiment,
        best_error_value: 0.0,
        best_cost_value: 0.0,
        notes,
    };
    report.best_error_value = report.best_value(Metric::Top1ErrorRate);
    report.best_cost_value = report.best_value(Metric::AvgSpatialCost);
    Ok(report)
}
