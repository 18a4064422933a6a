//! Bucketed touch history.
//!
//! Touches are folded into per-key Gaussian sufficient statistics as soon as
//! they arrive. Buckets hold only those aggregates, so neither the position of
//! an individual touch nor the order of touches within a bucket survives. The
//! oldest bucket expires whole once the bucket limit is exceeded.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::Offset;

pub const PROFILE_VERSION: u32 = 1;

/// Sums of 1, dx, dy, dx², dy², dx·dy over a set of touches (possibly weighted).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KeyStats {
    pub n: f64,
    pub sum_dx: f64,
    pub sum_dy: f64,
    pub sum_dx2: f64,
    pub sum_dy2: f64,
    pub sum_dxdy: f64,
}

impl KeyStats {
    pub fn from_offset(off: Offset) -> Self {
        Self {
            n: 1.0,
            sum_dx: off.dx,
            sum_dy: off.dy,
            sum_dx2: off.dx * off.dx,
            sum_dy2: off.dy * off.dy,
            sum_dxdy: off.dx * off.dy,
        }
    }

    pub fn push(&mut self, off: Offset) {
        *self += Self::from_offset(off);
    }

    pub fn scaled(&self, w: f64) -> Self {
        Self {
            n: self.n * w,
            sum_dx: self.sum_dx * w,
            sum_dy: self.sum_dy * w,
            sum_dx2: self.sum_dx2 * w,
            sum_dy2: self.sum_dy2 * w,
            sum_dxdy: self.sum_dxdy * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n <= 0.0
    }

    pub fn mean(&self) -> Option<Offset> {
        (self.n > 0.0).then(|| Offset::new(self.sum_dx / self.n, self.sum_dy / self.n))
    }
}

impl std::ops::AddAssign for KeyStats {
    fn add_assign(&mut self, o: KeyStats) {
        self.n += o.n;
        self.sum_dx += o.sum_dx;
        self.sum_dy += o.sum_dy;
        self.sum_dx2 += o.sum_dx2;
        self.sum_dy2 += o.sum_dy2;
        self.sum_dxdy += o.sum_dxdy;
    }
}

impl<'a> std::iter::Sum<&'a KeyStats> for KeyStats {
    fn sum<I: Iterator<Item = &'a KeyStats>>(iter: I) -> Self {
        iter.fold(KeyStats::default(), |mut acc, s| {
            acc += *s;
            acc
        })
    }
}

/// Per-key statistics, keyed by key label.
pub type StatsMap = BTreeMap<char, KeyStats>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistoryConfig {
    pub max_points: usize,
    pub bucket_count: usize,
    pub decay_rate: f64,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        Self {
            max_points: 800,
            bucket_count: 4,
            decay_rate: 0.0,
        }
    }
}

impl HistoryConfig {
    pub fn new(max_points: usize, bucket_count: usize, decay_rate: f64) -> Result<Self> {
        let c = Self {
            max_points,
            bucket_count,
            decay_rate,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bucket_count == 0 || self.max_points == 0 {
            return Err(Error::InvalidConfig(
                "history needs at least one bucket and one point".into(),
            ));
        }
        if !self.max_points.is_multiple_of(self.bucket_count) {
            return Err(Error::InvalidConfig(format!(
                "max_points {} is not divisible by bucket_count {}",
                self.max_points, self.bucket_count
            )));
        }
        if !(self.decay_rate >= 0.0 && self.decay_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "decay rate {} must be >= 0",
                self.decay_rate
            )));
        }
        Ok(())
    }

    pub fn bucket_capacity(&self) -> usize {
        self.max_points / self.bucket_count
    }

    /// Arithmetic decay weight of the `i`-th newest bucket (0-based).
    pub fn weight(&self, age: usize) -> f64 {
        (1.0 - age as f64 * self.decay_rate).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub seq: u64,
    pub touch_count: usize,
    pub keys: StatsMap,
}

impl Bucket {
    fn new(seq: u64) -> Self {
        Self {
            seq,
            touch_count: 0,
            keys: StatsMap::new(),
        }
    }
}

/// What a single `record_touch` did to the bucket list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecordOutcome {
    /// The newest bucket reached capacity with this touch.
    pub sealed: bool,
    /// Sequence number of a bucket that expired to make room.
    pub expired: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchHistory {
    config: HistoryConfig,
    buckets: VecDeque<Bucket>,
    next_seq: u64,
}

impl TouchHistory {
    pub fn new(config: HistoryConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            buckets: VecDeque::new(),
            next_seq: 0,
        })
    }

    pub fn config(&self) -> &HistoryConfig {
        &self.config
    }

    /// Buckets, oldest first.
    pub fn buckets(&self) -> impl DoubleEndedIterator<Item = &Bucket> + ExactSizeIterator {
        self.buckets.iter()
    }

    pub fn total_touches(&self) -> usize {
        self.buckets.iter().map(|b| b.touch_count).sum()
    }

    /// Callers are responsible for only passing touches from words that were
    /// tap-typed and survived as the final text.
    pub fn record_touch(&mut self, key: char, off: Offset) -> RecordOutcome {
        debug_assert!(off.dx.is_finite() && off.dy.is_finite());
        let cap = self.config.bucket_capacity();
        let mut outcome = RecordOutcome::default();
        if self.buckets.back().is_none_or(|b| b.touch_count >= cap) {
            self.buckets.push_back(Bucket::new(self.next_seq));
            self.next_seq += 1;
            if self.buckets.len() > self.config.bucket_count {
                outcome.expired = self.buckets.pop_front().map(|b| b.seq);
            }
        }
        let newest = self.buckets.back_mut().expect("bucket just ensured");
        newest.keys.entry(key).or_default().push(off);
        newest.touch_count += 1;
        outcome.sealed = newest.touch_count == cap;
        outcome
    }

    /// Decay-weighted per-key statistics; the newest bucket has weight 1.
    pub fn aggregate(&self) -> StatsMap {
        let mut out = StatsMap::new();
        for (age, bucket) in self.buckets.iter().rev().enumerate() {
            let w = self.config.weight(age);
            if w <= 0.0 {
                continue;
            }
            for (&k, s) in &bucket.keys {
                let entry = out.entry(k).or_default();
                if w == 1.0 {
                    *entry += *s;
                } else {
                    *entry += s.scaled(w);
                }
            }
        }
        out
    }

    pub fn to_profile(&self) -> ProfileDoc {
        ProfileDoc {
            version: PROFILE_VERSION,
            config: self.config,
            next_seq: self.next_seq,
            buckets: self.buckets.iter().cloned().collect(),
        }
    }

    pub fn save_profile(&self) -> String {
        serde_json::to_string(&self.to_profile()).expect("profile serializes")
    }

    pub fn load_profile(doc: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionProbe {
            version: u32,
        }
        let probe: VersionProbe =
            serde_json::from_str(doc).map_err(|e| Error::Malformed(e.to_string()))?;
        if probe.version != PROFILE_VERSION {
            return Err(Error::Version {
                found: probe.version,
                expected: PROFILE_VERSION,
            });
        }
        let p: ProfileDoc =
            serde_json::from_str(doc).map_err(|e| Error::Malformed(e.to_string()))?;
        Self::from_profile(p)
    }

    pub fn from_profile(p: ProfileDoc) -> Result<Self> {
        p.config.validate()?;
        let cap = p.config.bucket_capacity();
        if p.buckets.len() > p.config.bucket_count {
            return Err(Error::Malformed("more buckets than bucket_count".into()));
        }
        let last = p.buckets.len().saturating_sub(1);
        let mut prev_seq = None;
        for (i, b) in p.buckets.iter().enumerate() {
            let n: f64 = b.keys.values().map(|s| s.n).sum();
            if n != b.touch_count as f64 {
                return Err(Error::Malformed(format!("bucket {} count mismatch", b.seq)));
            }
            if b.touch_count > cap || (i < last && b.touch_count != cap) {
                return Err(Error::Malformed(format!("bucket {} has wrong fill", b.seq)));
            }
            if prev_seq.is_some_and(|s| s >= b.seq) || b.seq >= p.next_seq {
                return Err(Error::Malformed(
                    "bucket sequence numbers out of order".into(),
                ));
            }
            prev_seq = Some(b.seq);
        }
        Ok(Self {
            config: p.config,
            buckets: p.buckets.into(),
            next_seq: p.next_seq,
        })
    }
}

/// Serialized form of a [`TouchHistory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDoc {
    pub version: u32,
    pub config: HistoryConfig,
    pub next_seq: u64,
    pub buckets: Vec<Bucket>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(max: usize, buckets: usize, d: f64) -> TouchHistory {
        TouchHistory::new(HistoryConfig::new(max, buckets, d).unwrap()).unwrap()
    }

    #[test]
    fn first_touch() {
        let mut h = history(800, 4, 0.0);
        h.record_touch('a', Offset::new(0.1, -0.2));
        assert_eq!(h.buckets().len(), 1);
        let s = h.aggregate()[&'a'];
        assert_eq!((s.n, s.sum_dx, s.sum_dy), (1.0, 0.1, -0.2));
    }

    #[test]
    fn full_bucket_opens_next() {
        let mut h = history(8, 4, 0.0);
        assert!(!h.record_touch('a', Offset::ZERO).sealed);
        assert!(h.record_touch('a', Offset::ZERO).sealed);
        h.record_touch('b', Offset::ZERO);
        let seqs: Vec<u64> = h.buckets().map(|b| b.seq).collect();
        assert_eq!(seqs, vec![0, 1]);
    }

    #[test]
    fn oldest_bucket_expires_whole() {
        let mut h = history(800, 4, 0.0);
        for i in 0..800 {
            let out = h.record_touch('a', Offset::new(i as f64 * 1e-3, 0.0));
            assert_eq!(out.expired, None);
        }
        assert_eq!(h.total_touches(), 800);
        let out = h.record_touch('b', Offset::ZERO);
        assert_eq!(out.expired, Some(0));
        assert_eq!(h.total_touches(), 601);
        assert_eq!(h.buckets().len(), 4);
    }

    #[test]
    fn decay_weights() {
        let c = HistoryConfig::new(500, 5, 0.15).unwrap();
        let w: Vec<f64> = (0..5).map(|i| c.weight(i)).collect();
        let expect = [1.0, 0.85, 0.70, 0.55, 0.40];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(HistoryConfig::new(500, 5, 0.5).unwrap().weight(4), 0.0);
    }

    #[test]
    fn aggregate_applies_weights_to_all_moments() {
        let mut h = history(4, 2, 0.5);
        h.record_touch('a', Offset::new(1.0, 2.0));
        h.record_touch('a', Offset::new(1.0, 2.0));
        h.record_touch('a', Offset::new(-1.0, 0.5));
        let s = h.aggregate()[&'a'];
        assert_eq!(s.n, 2.0);
        assert_eq!(s.sum_dx, 0.0);
        assert_eq!(s.sum_dy, 2.5);
        assert_eq!(s.sum_dx2, 2.0);
        assert_eq!(s.sum_dy2, 4.0 + 0.25);
        assert_eq!(s.sum_dxdy, 2.0 - 0.5);
    }

    #[test]
    fn single_bucket_aggregate_is_identity() {
        let mut h = history(10, 1, 0.9);
        h.record_touch('q', Offset::new(0.3, 0.1));
        h.record_touch('w', Offset::new(-0.3, 0.2));
        assert_eq!(h.aggregate(), h.buckets().next().unwrap().keys);
    }

    #[test]
    fn config_validation() {
        assert!(HistoryConfig::new(250, 4, 0.0).is_err());
        assert!(HistoryConfig::new(800, 0, 0.0).is_err());
        assert!(HistoryConfig::new(800, 4, -0.1).is_err());
    }

    #[test]
    fn profile_round_trip_and_errors() {
        let mut h = history(12, 3, 0.1);
        for i in 0..17 {
            h.record_touch(
                ['a', 'b', 'c'][i % 3],
                Offset::new(0.01 * i as f64, -0.3 / (i + 1) as f64),
            );
        }
        let doc = h.save_profile();
        assert_eq!(TouchHistory::load_profile(&doc).unwrap(), h);
        assert!(matches!(
            TouchHistory::load_profile(&doc[..doc.len() / 2]),
            Err(Error::Malformed(_))
        ));
        let bumped = doc.replacen("\"version\":1", "\"version\":7", 1);
        assert!(matches!(
            TouchHistory::load_profile(&bumped),
            Err(Error::Version { found: 7, .. })
        ));
    }
}
