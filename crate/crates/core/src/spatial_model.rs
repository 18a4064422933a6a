//! Per-tap spatial cost.
//!
//! A tap's cost against a key is the isotropic Gaussian exponent of its
//! normalized offset from the key's personalized center, clamped at the
//! substitution cost. With covariance enabled, clusters that have a
//! trustworthy MAP covariance use a scaled Mahalanobis exponent instead.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterConfig, ClusterTree, TreeDump};
use crate::error::{Error, Result};
use crate::layout::{Key, KeyboardLayout, Offset, Rect, TouchPoint};
use crate::touch_store::{KeyStats, StatsMap};

/// Below this pooled count a cluster covariance is not trusted.
pub const MIN_COV_POINTS: f64 = 8.0;
/// Condition-number ceiling for a usable covariance.
pub const MAX_COV_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialParams {
    pub sigma0: f64,
    pub substitution_cost: f64,
    pub insertion_cost: f64,
    pub deletion_cost: f64,
    pub transposition_cost: f64,
    pub covariance_enabled: bool,
}

impl Default for SpatialParams {
    fn default() -> Self {
        Self {
            sigma0: 0.55,
            substitution_cost: 3.0,
            insertion_cost: 3.5,
            deletion_cost: 3.5,
            transposition_cost: 3.5,
            covariance_enabled: false,
        }
    }
}

impl SpatialParams {
    pub fn with_sigma(self, sigma0: f64) -> Self {
        Self { sigma0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        let costs = [
            self.substitution_cost,
            self.insertion_cost,
            self.deletion_cost,
            self.transposition_cost,
        ];
        if costs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidConfig(
                "edit costs must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn scaled_identity(v: f64) -> Self {
        Self::new(v, 0.0, v)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues, smaller first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = half_diff.hypot(self.xy);
        (half_tr - r, half_tr + r)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx.is_finite()
            && self.yy.is_finite()
            && self.xy.is_finite()
            && self.eigenvalues().0 > 0.0
    }

    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let d = self.det();
        (d != 0.0 && d.is_finite()).then(|| Sym2::new(self.yy / d, -self.xy / d, self.xx / d))
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: Offset) -> f64 {
        self.xx * v.dx * v.dx + 2.0 * self.xy * v.dx * v.dy + self.yy * v.dy * v.dy
    }
}

/// Scatter of the offsets about their mean: `Σ zzᵀ - N·μμᵀ`, unnormalized.
pub fn scatter(stats: &KeyStats) -> Option<Sym2> {
    let mu = stats.mean()?;
    let n = stats.n;
    Some(Sym2::new(
        stats.sum_dx2 - n * mu.dx * mu.dx,
        stats.sum_dxdy - n * mu.dx * mu.dy,
        stats.sum_dy2 - n * mu.dy * mu.dy,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterGaussian {
    pub mu: Offset,
    pub n: f64,
    /// MAP covariance; present whenever more than two points were pooled.
    pub cov: Option<Sym2>,
    pub cov_valid: bool,
}

/// MAP covariance `(diag(S)/N + S) / (8 + N)` from pooled statistics.
///
/// The estimate is only marked valid with at least [`MIN_COV_POINTS`] points
/// and a positive-definite, well-conditioned result.
pub fn covariance_map_estimate(stats: &KeyStats) -> ClusterGaussian {
    let n = stats.n;
    let mu = stats.mean().unwrap_or_default();
    if n <= 2.0 {
        return ClusterGaussian {
            mu,
            n,
            cov: None,
            cov_valid: false,
        };
    }
    let s = scatter(stats).expect("n > 0");
    let denom = 8.0 + n;
    let cov = Sym2::new(
        (s.xx / n + s.xx) / denom,
        s.xy / denom,
        (s.yy / n + s.yy) / denom,
    );
    let cov_valid = n >= MIN_COV_POINTS
        && cov.is_positive_definite()
        && cov.condition_number() < MAX_COV_CONDITION;
    ClusterGaussian {
        mu,
        n,
        cov: Some(cov),
        cov_valid,
    }
}

/// `σ² = det(Σ)^½`, the geometric mean of the eigenvalues; `sigma0` when `Σ`
/// is not positive-definite.
pub fn global_isotropic_scale(global: &Sym2, sigma0: f64) -> f64 {
    if global.is_positive_definite() {
        global.det().sqrt().sqrt()
    } else {
        sigma0
    }
}

/// `(dx² + dy²) / 2σ²`.
pub fn gaussian_cost(adjusted: Offset, sigma: f64) -> f64 {
    (adjusted.dx * adjusted.dx + adjusted.dy * adjusted.dy) / (2.0 * sigma * sigma)
}

/// Scaled Mahalanobis exponent `(σ_global²/σ0²)·½(x-μ)ᵀΣ⁻¹(x-μ)` of a raw
/// key offset. Falls back to the isotropic cost about `μ` when the cluster
/// covariance is not valid.
///
/// The `σ_global²/σ0²` factor makes `Σ = σ_global²·I` score exactly like the
/// isotropic model with `σ0`.
pub fn mahalanobis_cost(raw: Offset, cg: &ClusterGaussian, sigma_global: f64, sigma0: f64) -> f64 {
    let diff = raw - cg.mu;
    match (cg.cov_valid, cg.cov) {
        (true, Some(cov)) => {
            let inv = cov
                .inverse()
                .expect("valid cluster covariance is invertible");
            let scale = (sigma_global * sigma_global) / (sigma0 * sigma0);
            scale * 0.5 * inv.quad_form(diff)
        }
        _ => gaussian_cost(diff, sigma0),
    }
}

/// Per-user spatial model: cluster offsets, optional cluster covariances, and
/// the whole-keyboard covariance used to set the Mahalanobis scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedModel {
    tree: ClusterTree,
    offsets: BTreeMap<char, Offset>,
    key_cluster: BTreeMap<char, usize>,
    clusters: Vec<ClusterGaussian>,
    global: ClusterGaussian,
}

impl PersonalizedModel {
    pub fn build(layout: &KeyboardLayout, stats: &StatsMap, config: ClusterConfig) -> Self {
        let tree = ClusterTree::build(layout, stats, config);
        let offsets = tree.offsets_for_keys();
        let mut key_cluster = BTreeMap::new();
        let mut clusters = Vec::new();
        for (i, leaf) in tree.leaves().enumerate() {
            for &c in &leaf.cluster.keys {
                key_cluster.insert(c, i);
            }
            let mut cg = covariance_map_estimate(&leaf.stats);
            cg.mu = leaf.offset;
            clusters.push(cg);
        }
        let all: KeyStats = layout
            .letter_keys()
            .filter_map(|k| stats.get(&k.label))
            .sum();
        let global = covariance_map_estimate(&all);
        Self {
            tree,
            offsets,
            key_cluster,
            clusters,
            global,
        }
    }

    /// The unpersonalized model: one cluster, zero offsets.
    pub fn baseline(layout: &KeyboardLayout) -> Self {
        Self::build(layout, &StatsMap::new(), ClusterConfig { k: 1 })
    }

    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    pub fn offsets(&self) -> &BTreeMap<char, Offset> {
        &self.offsets
    }

    /// Personalized offset of a key; zero for keys outside the clustering.
    pub fn offset(&self, c: char) -> Offset {
        self.offsets.get(&c).copied().unwrap_or_default()
    }

    pub fn clusters(&self) -> &[ClusterGaussian] {
        &self.clusters
    }

    pub fn cluster_for(&self, c: char) -> Option<&ClusterGaussian> {
        self.key_cluster.get(&c).map(|&i| &self.clusters[i])
    }

    pub fn global(&self) -> &ClusterGaussian {
        &self.global
    }

    /// Isotropic reduction of the whole-keyboard covariance, or `sigma0` when
    /// that covariance is degenerate.
    pub fn sigma_global(&self, sigma0: f64) -> f64 {
        match (self.global.cov_valid, &self.global.cov) {
            (true, Some(cov)) => global_isotropic_scale(cov, sigma0),
            _ => sigma0,
        }
    }

    /// Personalized key center in layout coordinates.
    pub fn personalized_center(&self, key: &Key) -> TouchPoint {
        key.denormalize(self.offset(key.label))
    }

    pub fn dump(&self, params: &SpatialParams) -> ModelDump {
        ModelDump {
            offsets: self.offsets.clone(),
            clusters: self
                .tree
                .leaves()
                .zip(&self.clusters)
                .map(|(leaf, cg)| ClusterDump {
                    keys: leaf.cluster.keys.iter().collect(),
                    rect: leaf.cluster.rect,
                    n: cg.n,
                    mu: cg.mu,
                    cov: cg.cov,
                    cov_valid: cg.cov_valid,
                })
                .collect(),
            global_cov: self.global.cov,
            sigma_global: self.sigma_global(params.sigma0),
            params: *params,
            tree: TreeDump::from(&self.tree),
        }
    }
}

/// Debug dump of a model, as served to the demo UI and written by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub offsets: BTreeMap<char, Offset>,
    pub clusters: Vec<ClusterDump>,
    pub global_cov: Option<Sym2>,
    pub sigma_global: f64,
    pub params: SpatialParams,
    pub tree: TreeDump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDump {
    pub keys: String,
    pub rect: Rect,
    pub n: f64,
    pub mu: Offset,
    pub cov: Option<Sym2>,
    pub cov_valid: bool,
}

/// Spatial cost of attributing `touch` to `key`.
pub fn key_cost(
    touch: TouchPoint,
    key: &Key,
    model: &PersonalizedModel,
    params: &SpatialParams,
) -> f64 {
    let raw = key.normalize(touch);
    let gaussian = match model.cluster_for(key.label) {
        Some(cg) if params.covariance_enabled && cg.cov_valid => {
            mahalanobis_cost(raw, cg, model.sigma_global(params.sigma0), params.sigma0)
        }
        _ => gaussian_cost(raw - model.offset(key.label), params.sigma0),
    };
    gaussian.min(params.substitution_cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_cost(Offset::ZERO, 0.3), 0.0);
        assert!(close(
            gaussian_cost(Offset::new(0.55, 0.0), 0.55),
            0.5,
            1e-15
        ));
        assert!(close(gaussian_cost(Offset::new(0.3, 0.4), 0.5), 0.5, 1e-15));
    }

    #[test]
    fn map_estimate_examples() {
        let two = KeyStats {
            n: 2.0,
            sum_dx: 0.2,
            sum_dy: 0.1,
            sum_dx2: 0.03,
            sum_dy2: 0.01,
            sum_dxdy: 0.0,
        };
        let cg = covariance_map_estimate(&two);
        assert!(!cg.cov_valid && cg.cov.is_none());

        let four = KeyStats {
            n: 4.0,
            sum_dx2: 4.0,
            sum_dy2: 4.0,
            ..Default::default()
        };
        let cg = covariance_map_estimate(&four);
        let cov = cg.cov.unwrap();
        assert!(close(cov.xx, 5.0 / 12.0, 1e-15) && close(cov.yy, 5.0 / 12.0, 1e-15));
        assert_eq!(cov.xy, 0.0);
        // Fewer than eight points: computed but not trusted.
        assert!(!cg.cov_valid);
    }

    #[test]
    fn isotropic_scale_examples() {
        let s = global_isotropic_scale(&Sym2::new(0.04, 0.0, 0.09), 0.55);
        assert!(close(s * s, 0.06, 1e-15));
        assert!(close(s, 0.06f64.sqrt(), 1e-15));
        assert!(close(
            global_isotropic_scale(&Sym2::scaled_identity(0.3 * 0.3), 0.55),
            0.3,
            1e-15
        ));
        assert_eq!(
            global_isotropic_scale(&Sym2::new(1.0, 1.0, 1.0), 0.55),
            0.55
        );
    }

    #[test]
    fn mahalanobis_examples() {
        let sigma0 = 0.55;
        let mu = Offset::new(0.1, -0.2);
        let cg = ClusterGaussian {
            mu,
            n: 100.0,
            cov: Some(Sym2::scaled_identity(sigma0 * sigma0)),
            cov_valid: true,
        };
        assert_eq!(mahalanobis_cost(mu, &cg, sigma0, sigma0), 0.0);

        // 4x variance along x: (2t, 0) costs the same as (0, t).
        let cg = ClusterGaussian {
            mu: Offset::ZERO,
            n: 100.0,
            cov: Some(Sym2::new(0.16, 0.0, 0.04)),
            cov_valid: true,
        };
        let t = 0.13;
        let a = mahalanobis_cost(Offset::new(2.0 * t, 0.0), &cg, 0.3, sigma0);
        let b = mahalanobis_cost(Offset::new(0.0, t), &cg, 0.3, sigma0);
        assert!(close(a, b, 1e-15));

        let invalid = ClusterGaussian {
            cov_valid: false,
            ..cg
        };
        let x = Offset::new(0.3, 0.1);
        assert_eq!(
            mahalanobis_cost(x, &invalid, 0.3, sigma0),
            gaussian_cost(x, sigma0)
        );
    }

    #[test]
    fn key_cost_clamps_and_centers() {
        let layout = KeyboardLayout::qwerty();
        let model = PersonalizedModel::baseline(&layout);
        let params = SpatialParams::default();
        let q = layout.key_for_char('q').unwrap();
        let m = layout.key_for_char('m').unwrap();
        assert_eq!(key_cost(q.center(), q, &model, &params), 0.0);
        assert_eq!(
            key_cost(m.center(), q, &model, &params),
            params.substitution_cost
        );
    }

    #[test]
    fn personalized_center_is_zero_cost() {
        let layout = KeyboardLayout::qwerty();
        let stats: StatsMap = layout
            .letter_keys()
            .map(|k| {
                (
                    k.label,
                    KeyStats::from_offset(Offset::new(0.25, -0.125)).scaled(4.0),
                )
            })
            .collect();
        let model = PersonalizedModel::build(&layout, &stats, ClusterConfig::default());
        let params = SpatialParams::default();
        for k in layout.letter_keys() {
            let c = model.personalized_center(k);
            assert!(key_cost(c, k, &model, &params) < 1e-24);
            let o = model.offset(k.label);
            assert!(close(o.dx, 0.25, 1e-12) && close(o.dy, -0.125, 1e-12));
        }
    }

    #[test]
    fn param_validation() {
        assert!(SpatialParams::default().validate().is_ok());
        assert!(SpatialParams::default().with_sigma(0.0).validate().is_err());
        let bad = SpatialParams {
            deletion_cost: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
