//! Greedy decision-tree clustering of keys.
//!
//! The keyboard starts as one cluster holding every letter key. Each step
//! splits one leaf along a vertical or horizontal line between key centers,
//! choosing the (leaf, line) pair that most reduces the within-cluster sum of
//! squared offset error. Splitting stops at `k` leaves or when no split helps.
//!
//! The squared error of a cluster `C` about its mean is
//! `Σ(dx² + dy²) - f(C)` with `f(C) = |C|·(E[dx]² + E[dy]²)`. The second-moment
//! sums cancel across a split, so the reduction is just `f(C1) + f(C2) - f(C)`,
//! where `|C|` counts touches, not keys.
//!
//! Each leaf keeps its keys sorted along both axes. Candidate lines are
//! scanned with running sums, so a leaf costs O(m) to evaluate and only the two
//! children of a split are re-evaluated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Key, KeyboardLayout, Offset, Rect};
use crate::touch_store::{KeyStats, StatsMap};

/// Reductions at or below this are treated as no improvement.
pub const MIN_REDUCTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// A vertical line `x = c`; separates keys by center x.
    Vertical,
    /// A horizontal line `y = c`; separates keys by center y.
    Horizontal,
}

impl Axis {
    fn coord(self, key: &Key) -> f64 {
        match self {
            Axis::Vertical => key.center_x,
            Axis::Horizontal => key.center_y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub axis: Axis,
    pub coordinate: f64,
}

impl Split {
    pub fn vertical(x: f64) -> Self {
        Self {
            axis: Axis::Vertical,
            coordinate: x,
        }
    }

    pub fn horizontal(y: f64) -> Self {
        Self {
            axis: Axis::Horizontal,
            coordinate: y,
        }
    }

    /// True when the key's center falls on the low (left / top) side.
    pub fn is_low(&self, key: &Key) -> bool {
        self.axis.coord(key) < self.coordinate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Key labels, sorted.
    pub keys: Vec<char>,
    pub rect: Rect,
}

impl Cluster {
    pub fn new(mut keys: Vec<char>, rect: Rect) -> Self {
        keys.sort_unstable();
        Self { keys, rect }
    }

    pub fn pooled(&self, stats: &StatsMap) -> KeyStats {
        self.keys.iter().filter_map(|c| stats.get(c)).sum()
    }

    fn split(&self, layout: &KeyboardLayout, split: Split) -> (Cluster, Cluster) {
        let (low, high): (Vec<char>, Vec<char>) = self
            .keys
            .iter()
            .partition(|&&c| split.is_low(layout.get(c).expect("cluster key on layout")));
        let (mut lr, mut hr) = (self.rect, self.rect);
        match split.axis {
            Axis::Vertical => {
                lr.x1 = split.coordinate;
                hr.x0 = split.coordinate;
            }
            Axis::Horizontal => {
                lr.y1 = split.coordinate;
                hr.y0 = split.coordinate;
            }
        }
        (Cluster::new(low, lr), Cluster::new(high, hr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { k: 7 }
    }
}

impl ClusterConfig {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig(
                "cluster count must be at least 1".into(),
            ));
        }
        Ok(Self { k })
    }
}

/// `|C|·(E[dx]² + E[dy]²)`, zero for an empty cluster.
pub fn fit_value(s: &KeyStats) -> f64 {
    if s.n > 0.0 {
        (s.sum_dx * s.sum_dx + s.sum_dy * s.sum_dy) / s.n
    } else {
        0.0
    }
}

/// Within-cluster squared error about the pooled mean.
pub fn sse(s: &KeyStats) -> f64 {
    s.sum_dx2 + s.sum_dy2 - fit_value(s)
}

/// All lines strictly between adjacent distinct key-center coordinates in the
/// cluster: vertical lines first, each axis ascending.
pub fn split_candidates(cluster: &Cluster, layout: &KeyboardLayout) -> Vec<Split> {
    let mut out = Vec::new();
    for axis in [Axis::Vertical, Axis::Horizontal] {
        let mut coords: Vec<f64> = cluster
            .keys
            .iter()
            .filter_map(|&c| layout.get(c))
            .map(|k| axis.coord(k))
            .collect();
        coords.sort_by(f64::total_cmp);
        coords.dedup();
        out.extend(coords.windows(2).map(|w| Split {
            axis,
            coordinate: (w[0] + w[1]) / 2.0,
        }));
    }
    out
}

/// Squared-error reduction from splitting `cluster` along `split`, computed by
/// pooling each side directly.
pub fn reduction(
    stats: &StatsMap,
    layout: &KeyboardLayout,
    cluster: &Cluster,
    split: Split,
) -> f64 {
    let (low, high) = cluster.split(layout, split);
    fit_value(&low.pooled(stats)) + fit_value(&high.pooled(stats))
        - fit_value(&cluster.pooled(stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub cluster: Cluster,
    pub stats: KeyStats,
    pub offset: Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Internal {
        split: Split,
        low: usize,
        high: usize,
    },
    Leaf(Leaf),
}

/// One greedy step: which cluster was split, where, and by how much it helped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStep {
    pub keys: Vec<char>,
    pub split: Split,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    nodes: Vec<Node>,
    steps: Vec<SplitStep>,
}

/// Work counters from one tree build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildCounters {
    /// Candidate lines whose reduction was evaluated.
    pub candidate_evaluations: usize,
    /// Keys visited while sorting, scanning, or partitioning.
    pub key_visits: usize,
}

/// Working state for a leaf: keys presorted along each axis.
struct LeafWork {
    node: usize,
    by_x: Vec<(f64, char)>,
    by_y: Vec<(f64, char)>,
    best: Option<(Split, f64)>,
}

fn best_split_along(
    sorted: &[(f64, char)],
    axis: Axis,
    stats: &StatsMap,
    total: &KeyStats,
    counters: &mut BuildCounters,
) -> Option<(Split, f64)> {
    let base = fit_value(total);
    // suffix[i] pools sorted[i..]
    let mut suffix = vec![KeyStats::default(); sorted.len() + 1];
    for (i, &(_, c)) in sorted.iter().enumerate().rev() {
        counters.key_visits += 1;
        suffix[i] = suffix[i + 1];
        if let Some(s) = stats.get(&c) {
            suffix[i] += *s;
        }
    }
    let mut low = KeyStats::default();
    let mut best: Option<(Split, f64)> = None;
    for (i, &(coord, c)) in sorted.iter().enumerate() {
        counters.key_visits += 1;
        if let Some(s) = stats.get(&c) {
            low += *s;
        }
        let Some(&(next, _)) = sorted.get(i + 1) else {
            break;
        };
        if next == coord {
            continue;
        }
        counters.candidate_evaluations += 1;
        let r = fit_value(&low) + fit_value(&suffix[i + 1]) - base;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((
                Split {
                    axis,
                    coordinate: (coord + next) / 2.0,
                },
                r,
            ));
        }
    }
    best
}

impl LeafWork {
    fn evaluate(&mut self, stats: &StatsMap, total: &KeyStats, counters: &mut BuildCounters) {
        let v = best_split_along(&self.by_x, Axis::Vertical, stats, total, counters);
        let h = best_split_along(&self.by_y, Axis::Horizontal, stats, total, counters);
        self.best = match (v, h) {
            (Some(v), Some(h)) => Some(if h.1 > v.1 { h } else { v }),
            (v, h) => v.or(h),
        };
    }
}

impl ClusterTree {
    /// Builds the tree over the layout's letter keys.
    ///
    /// Ties between equally good splits resolve to the earliest leaf, then
    /// vertical before horizontal, then the lower coordinate.
    pub fn build(layout: &KeyboardLayout, stats: &StatsMap, config: ClusterConfig) -> Self {
        Self::build_counted(layout, stats, config).0
    }

    pub fn build_counted(
        layout: &KeyboardLayout,
        stats: &StatsMap,
        config: ClusterConfig,
    ) -> (Self, BuildCounters) {
        let mut counters = BuildCounters::default();
        let letters: Vec<&Key> = layout.letter_keys().collect();
        let rect = letters
            .iter()
            .map(|k| k.rect())
            .reduce(|a, b| Rect {
                x0: a.x0.min(b.x0),
                y0: a.y0.min(b.y0),
                x1: a.x1.max(b.x1),
                y1: a.y1.max(b.y1),
            })
            .unwrap_or(layout.bounds());
        let root = Cluster::new(letters.iter().map(|k| k.label).collect(), rect);
        let root_stats = root.pooled(stats);

        let sorted_by = |axis: Axis, counters: &mut BuildCounters| {
            let mut v: Vec<(f64, char)> =
                letters.iter().map(|k| (axis.coord(k), k.label)).collect();
            counters.key_visits += v.len();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        };
        let mut work = vec![LeafWork {
            node: 0,
            by_x: sorted_by(Axis::Vertical, &mut counters),
            by_y: sorted_by(Axis::Horizontal, &mut counters),
            best: None,
        }];
        let mut nodes = vec![Node::Leaf(Leaf {
            offset: root_stats.mean().unwrap_or_default(),
            cluster: root,
            stats: root_stats,
        })];
        work[0].evaluate(stats, &root_stats, &mut counters);
        let mut steps = Vec::new();

        while work.len() < config.k {
            let splittable = work.iter().any(|w| match &nodes[w.node] {
                Node::Leaf(l) => l.stats.n >= 2.0,
                Node::Internal { .. } => false,
            });
            if !splittable {
                break;
            }
            // Leaves are kept in node order, so the first strict maximum wins ties.
            let mut chosen: Option<(usize, Split, f64)> = None;
            for (i, w) in work.iter().enumerate() {
                if let Some((s, r)) = w.best {
                    if r > MIN_REDUCTION && chosen.is_none_or(|(_, _, b)| r > b) {
                        chosen = Some((i, s, r));
                    }
                }
            }
            let Some((wi, split, r)) = chosen else { break };

            let parent = work.remove(wi);
            let Node::Leaf(leaf) = nodes[parent.node].clone() else {
                unreachable!()
            };
            let (low_c, high_c) = leaf.cluster.split(layout, split);
            steps.push(SplitStep {
                keys: leaf.cluster.keys.clone(),
                split,
                reduction: r,
            });

            let is_low = |c: char| split.is_low(layout.get(c).expect("cluster key on layout"));
            counters.key_visits += 2 * (parent.by_x.len());
            let (lx, hx): (Vec<_>, Vec<_>) = parent.by_x.iter().partition(|&&(_, c)| is_low(c));
            let (ly, hy): (Vec<_>, Vec<_>) = parent.by_y.iter().partition(|&&(_, c)| is_low(c));

            let low_idx = nodes.len();
            let high_idx = low_idx + 1;
            nodes[parent.node] = Node::Internal {
                split,
                low: low_idx,
                high: high_idx,
            };
            for (cluster, by_x, by_y, idx) in [(low_c, lx, ly, low_idx), (high_c, hx, hy, high_idx)]
            {
                let s = cluster.pooled(stats);
                counters.key_visits += cluster.keys.len();
                let mut w = LeafWork {
                    node: idx,
                    by_x,
                    by_y,
                    best: None,
                };
                w.evaluate(stats, &s, &mut counters);
                nodes.push(Node::Leaf(Leaf {
                    offset: s.mean().unwrap_or_default(),
                    cluster,
                    stats: s,
                }));
                work.push(w);
            }
            work.sort_by_key(|w| w.node);
        }
        (Self { nodes, steps }, counters)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Greedy steps in the order they were taken.
    pub fn steps(&self) -> &[SplitStep] {
        &self.steps
    }

    /// Leaves in node order.
    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Internal { .. } => None,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    /// Index (in [`ClusterTree::leaves`] order) of the leaf holding `c`.
    pub fn leaf_index(&self, c: char) -> Option<usize> {
        self.leaves()
            .position(|l| l.cluster.keys.binary_search(&c).is_ok())
    }

    pub fn offsets_for_keys(&self) -> BTreeMap<char, Offset> {
        self.leaves()
            .flat_map(|l| l.cluster.keys.iter().map(move |&c| (c, l.offset)))
            .collect()
    }

    pub fn offset_for(&self, c: char) -> Result<Offset> {
        self.leaves()
            .find(|l| l.cluster.keys.binary_search(&c).is_ok())
            .map(|l| l.offset)
            .ok_or(Error::KeyNotFound(c))
    }

    /// Total within-cluster squared error of the leaves.
    pub fn total_sse(&self) -> f64 {
        self.leaves().map(|l| sse(&l.stats)).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TreeDump::from(self)).expect("tree serializes")
    }
}

/// Flat debug dump of a tree: the splits taken and the resulting leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub splits: Vec<SplitStep>,
    pub leaves: Vec<LeafDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafDump {
    pub keys: String,
    pub rect: Rect,
    pub n: f64,
    pub offset: Offset,
}

impl From<&ClusterTree> for TreeDump {
    fn from(t: &ClusterTree) -> Self {
        Self {
            splits: t.steps.clone(),
            leaves: t
                .leaves()
                .map(|l| LeafDump {
                    keys: l.cluster.keys.iter().collect(),
                    rect: l.cluster.rect,
                    n: l.stats.n,
                    offset: l.offset,
                })
                .collect(),
        }
    }
}
