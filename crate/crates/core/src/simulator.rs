//! Synthetic typists and closed-loop typing sessions.
//!
//! A synthetic user has, for every letter key, a true mean offset and a 2x2
//! touch covariance in key units. A session samples taps for each prompt word,
//! decodes them with a per-user [`Engine`], commits the result, and trains the
//! engine only on words that came out as intended.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decoder::Decoder;
use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::language_model::Lexicon;
use crate::layout::{Key, KeyboardLayout, Offset, TouchPoint};
use crate::spatial_model::{PersonalizedModel, Sym2};

/// Largest true offset magnitude per axis, in key units.
pub const MAX_TRUE_OFFSET: f64 = 0.75;

/// Mixes a seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// FNV-1a, used to fingerprint random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_f64(&mut self, v: f64) {
        self.write(&v.to_bits().to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Generator parameters for synthetic users. All lengths are in key units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Archetype {
    /// Each user's global shift is uniform in `[-shift_range, shift_range]` per axis.
    pub shift_range: f64,
    /// Standard deviation of each key's deviation from the user's shift.
    pub key_jitter: f64,
    /// Range of per-key horizontal touch spread.
    pub touch_sigma: [f64; 2],
    /// Range of vertical-to-horizontal spread ratio.
    pub anisotropy: [f64; 2],
    /// Largest absolute correlation between the touch axes.
    pub max_correlation: f64,
    /// Magnitude of a left/right regional pattern: keys left of the layout
    /// midline get `-r`, keys right of it `+r`, for a per-user random `r`.
    /// Zero disables it.
    pub regional_shift: f64,
    /// Probability of an extra tap after a character.
    pub insertion_rate: f64,
    /// Probability of skipping a character.
    pub omission_rate: f64,
}

impl Default for Archetype {
    fn default() -> Self {
        Self {
            shift_range: 0.2,
            key_jitter: 0.1,
            touch_sigma: [0.15, 0.3],
            anisotropy: [0.8, 1.25],
            max_correlation: 0.3,
            regional_shift: 0.0,
            insertion_rate: 0.0,
            omission_rate: 0.0,
        }
    }
}

impl Archetype {
    /// Users whose taps sit well away from the key centers, with a regional
    /// structure a single global shift cannot capture.
    pub fn offset_heavy() -> Self {
        Self {
            shift_range: 0.4,
            key_jitter: 0.08,
            regional_shift: 0.25,
            touch_sigma: [0.15, 0.25],
            ..Self::default()
        }
    }

    /// Every tap lands exactly on the key center.
    pub fn noiseless() -> Self {
        Self {
            shift_range: 0.0,
            key_jitter: 0.0,
            touch_sigma: [0.0, 0.0],
            anisotropy: [1.0, 1.0],
            max_correlation: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("archetype: {m}")));
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.shift_range) || !nonneg(self.key_jitter) || !nonneg(self.regional_shift) {
            return bad("shift, jitter and regional magnitudes must be finite and >= 0");
        }
        for (name, [lo, hi]) in [
            ("touch_sigma", self.touch_sigma),
            ("anisotropy", self.anisotropy),
        ] {
            if !(nonneg(lo) && nonneg(hi) && lo <= hi) {
                return bad(&format!("{name} must be an ordered non-negative range"));
            }
        }
        if !(0.0..1.0).contains(&self.max_correlation) {
            return bad("max_correlation must be in [0, 1)");
        }
        for r in [self.insertion_rate, self.omission_rate] {
            if !(0.0..1.0).contains(&r) {
                return bad("edit rates must be in [0, 1)");
            }
        }
        Ok(())
    }
}

/// True touch behaviour for one key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyBehavior {
    pub offset: Offset,
    pub cov: Sym2,
}

impl KeyBehavior {
    /// Lower-triangular factor `[[l11, 0], [l21, l22]]` of the covariance.
    fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.cov.xx.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { self.cov.xy / l11 } else { 0.0 };
        let l22 = (self.cov.yy - l21 * l21).max(0.0).sqrt();
        (l11, l21, l22)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUser {
    pub seed: u64,
    pub archetype: Archetype,
    pub keys: BTreeMap<char, KeyBehavior>,
    #[serde(skip)]
    insertion_rate: f64,
    #[serde(skip)]
    omission_rate: f64,
}

impl SyntheticUser {
    /// A user with the same behaviour on every key.
    pub fn uniform(layout: &KeyboardLayout, offset: Offset, cov: Sym2) -> Self {
        let keys = layout
            .letter_keys()
            .map(|k| (k.label, KeyBehavior { offset, cov }))
            .collect();
        Self {
            seed: 0,
            archetype: Archetype::noiseless(),
            keys,
            insertion_rate: 0.0,
            omission_rate: 0.0,
        }
    }

    pub fn behavior(&self, c: char) -> Option<&KeyBehavior> {
        self.keys.get(&c)
    }

    /// The same user with every true offset negated.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for b in out.keys.values_mut() {
            b.offset = Offset::new(-b.offset.dx, -b.offset.dy);
        }
        out
    }

    /// Average true offset over all keys.
    pub fn mean_offset(&self) -> Offset {
        let n = self.keys.len().max(1) as f64;
        let s = self.keys.values().fold(Offset::ZERO, |a, b| a + b.offset);
        Offset::new(s.dx / n, s.dy / n)
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn symmetric(rng: &mut impl Rng, r: f64) -> f64 {
    uniform(rng, [-r, r])
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a user. Deterministic in `seed`.
pub fn gen_user(arch: &Archetype, layout: &KeyboardLayout, seed: u64) -> SyntheticUser {
    let mut rng = rng_from(seed);
    let shift = Offset::new(
        symmetric(&mut rng, arch.shift_range),
        symmetric(&mut rng, arch.shift_range),
    );
    let regional = Offset::new(
        symmetric(&mut rng, arch.regional_shift),
        symmetric(&mut rng, arch.regional_shift),
    );
    let mid = {
        let b = layout.bounds();
        (b.x0 + b.x1) / 2.0
    };
    let mut keys = BTreeMap::new();
    for k in layout.letter_keys() {
        let side = if k.center_x < mid { -1.0 } else { 1.0 };
        let jitter = Offset::new(
            arch.key_jitter * normal(&mut rng),
            arch.key_jitter * normal(&mut rng),
        );
        let raw = shift + Offset::new(side * regional.dx, side * regional.dy) + jitter;
        let offset = Offset::new(
            raw.dx.clamp(-MAX_TRUE_OFFSET, MAX_TRUE_OFFSET),
            raw.dy.clamp(-MAX_TRUE_OFFSET, MAX_TRUE_OFFSET),
        );
        let sx = uniform(&mut rng, arch.touch_sigma);
        let sy = sx * uniform(&mut rng, arch.anisotropy);
        let rho = symmetric(&mut rng, arch.max_correlation);
        let cov = Sym2::new(sx * sx, rho * sx * sy, sy * sy);
        keys.insert(k.label, KeyBehavior { offset, cov });
    }
    SyntheticUser {
        seed,
        archetype: *arch,
        keys,
        insertion_rate: arch.insertion_rate,
        omission_rate: arch.omission_rate,
    }
}

/// One tap aimed at `key`, clamped to the layout.
pub fn sample_touch(
    user: &SyntheticUser,
    layout: &KeyboardLayout,
    key: &Key,
    rng: &mut impl Rng,
) -> TouchPoint {
    let b = user.behavior(key.label).copied().unwrap_or(KeyBehavior {
        offset: Offset::ZERO,
        cov: Sym2::new(0.0, 0.0, 0.0),
    });
    let (l11, l21, l22) = b.cholesky();
    let (z1, z2) = (normal(rng), normal(rng));
    let off = Offset::new(b.offset.dx + l11 * z1, b.offset.dy + l21 * z1 + l22 * z2);
    layout.clamp(key.denormalize(off))
}

/// Taps for an intended word, including the user's extra and skipped taps.
/// Characters missing from the layout are skipped.
pub fn type_word(
    user: &SyntheticUser,
    layout: &KeyboardLayout,
    word: &str,
    rng: &mut impl Rng,
) -> Vec<TouchPoint> {
    let mut out = Vec::with_capacity(word.len() + 1);
    let n = word.chars().count();
    for (i, c) in word.chars().enumerate() {
        let Some(key) = layout.get(c) else { continue };
        let skip = user.omission_rate > 0.0 && rng.random::<f64>() < user.omission_rate;
        if skip && (i + 1 < n || !out.is_empty()) {
            continue;
        }
        out.push(sample_touch(user, layout, key, rng));
        if user.insertion_rate > 0.0 && rng.random::<f64>() < user.insertion_rate {
            out.push(sample_touch(user, layout, key, rng));
        }
    }
    out
}

/// Samples words proportionally to their lexicon counts.
#[derive(Debug, Clone)]
pub struct PromptSampler {
    words: Vec<String>,
    dist: WeightedIndex<u64>,
}

impl PromptSampler {
    pub fn new(lexicon: &Lexicon) -> Self {
        let (words, counts): (Vec<String>, Vec<u64>) =
            lexicon.iter().map(|(w, c)| (w.to_string(), c)).unzip();
        let dist = WeightedIndex::new(&counts).expect("lexicon counts are positive");
        Self { words, dist }
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<String> {
        (0..n)
            .map(|_| self.words[self.dist.sample(rng)].clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub words: u64,
    pub avg_spatial_cost: f64,
    pub top1_error_rate: f64,
    pub autocorrect_good: u64,
    pub autocorrect_bad: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    words: u64,
    cost: f64,
    errors: u64,
    ac_good: u64,
    ac_bad: u64,
}

impl Accumulator {
    fn metrics(&self) -> SessionMetrics {
        let n = self.words.max(1) as f64;
        SessionMetrics {
            words: self.words,
            avg_spatial_cost: self.cost / n,
            top1_error_rate: self.errors as f64 / n,
            autocorrect_good: self.ac_good,
            autocorrect_bad: self.ac_bad,
        }
    }
}

/// What happened to one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct WordOutcome {
    pub intended: String,
    pub committed: String,
    pub touches: Vec<TouchPoint>,
    /// Spatial log-score of the committed word.
    pub sm: f64,
    pub autocorrected: bool,
    pub trained: usize,
}

impl WordOutcome {
    pub fn correct(&self) -> bool {
        self.intended == self.committed
    }
}

/// A tap as recorded for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchRecord {
    pub word_index: usize,
    pub key: char,
    pub x: f64,
    pub y: f64,
    pub offset: Offset,
}

/// A single user's typing session against one engine configuration.
#[derive(Debug, Clone)]
pub struct Session {
    engine: Engine,
    rng: ChaCha8Rng,
    stream: Fnv1a,
    acc: Accumulator,
    words_typed: usize,
    record: Option<Vec<TouchRecord>>,
}

impl Session {
    pub fn new(decoder: Arc<Decoder>, config: EngineConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            engine: Engine::new(decoder, config)?,
            rng: rng_from(seed),
            stream: Fnv1a::default(),
            acc: Accumulator::default(),
            words_typed: 0,
            record: None,
        })
    }

    /// Keep every intended-key tap for plotting.
    pub fn record_touches(mut self) -> Self {
        self.record = Some(Vec::new());
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Types one prompt. `measure` controls whether it counts toward metrics.
    pub fn type_prompt(
        &mut self,
        user: &SyntheticUser,
        intended: &str,
        measure: bool,
    ) -> WordOutcome {
        let layout = self.engine.decoder().layout();
        let touches = type_word(user, layout, intended, &mut self.rng);
        self.stream.write(intended.as_bytes());
        for t in &touches {
            self.stream.write_f64(t.x);
            self.stream.write_f64(t.y);
        }
        if let Some(rec) = &mut self.record {
            if touches.len() == intended.chars().count() {
                for (c, &t) in intended.chars().zip(&touches) {
                    if let Some(k) = layout.get(c) {
                        rec.push(TouchRecord {
                            word_index: self.words_typed,
                            key: c,
                            x: t.x,
                            y: t.y,
                            offset: k.normalize(t),
                        });
                    }
                }
            }
        }
        self.words_typed += 1;

        let result = self.engine.decode(&touches);
        let committed = result.committed().clone();
        let mut outcome = WordOutcome {
            intended: intended.to_string(),
            committed: committed.word.clone(),
            touches,
            sm: committed.sm,
            autocorrected: result.autocorrected,
            trained: 0,
        };
        if outcome.correct() {
            outcome.trained = self
                .engine
                .commit_aligned(&committed.alignment, &outcome.touches)
                .trained;
        }
        if measure {
            self.acc.words += 1;
            self.acc.cost += -outcome.sm;
            if !outcome.correct() {
                self.acc.errors += 1;
            }
            if outcome.autocorrected {
                if outcome.correct() {
                    self.acc.ac_good += 1;
                } else {
                    self.acc.ac_bad += 1;
                }
            }
        }
        outcome
    }

    pub fn metrics(&self) -> SessionMetrics {
        self.acc.metrics()
    }

    /// Fingerprint of every prompt and tap sampled so far.
    pub fn stream_checksum(&self) -> u64 {
        self.stream.finish()
    }

    pub fn finish(self) -> SessionOutput {
        SessionOutput {
            metrics: self.acc.metrics(),
            checksum: self.stream.finish(),
            model: self.engine.model(),
            touches: self.record.unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub metrics: SessionMetrics,
    pub checksum: u64,
    pub model: Arc<PersonalizedModel>,
    pub touches: Vec<TouchRecord>,
}

/// Types `prompts` in order; the first `warmup` only train. Deterministic in
/// `seed`.
pub fn run_session(
    decoder: &Arc<Decoder>,
    user: &SyntheticUser,
    config: &EngineConfig,
    prompts: &[String],
    warmup: usize,
    seed: u64,
) -> Result<SessionOutput> {
    let mut s = Session::new(Arc::clone(decoder), config.clone(), seed)?;
    for (i, p) in prompts.iter().enumerate() {
        s.type_prompt(user, p, i >= warmup);
    }
    Ok(s.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_jitter_shares_the_shift() {
        let arch = Archetype {
            key_jitter: 0.0,
            ..Archetype::default()
        };
        let u = gen_user(&arch, &KeyboardLayout::qwerty(), 7);
        let first = u.keys.values().next().unwrap().offset;
        assert!(u.keys.values().all(|b| b.offset == first));
        assert!(first.dx.abs() <= 0.2 && first.dy.abs() <= 0.2);
    }

    #[test]
    fn same_seed_same_user() {
        let l = KeyboardLayout::qwerty();
        let a = gen_user(&Archetype::offset_heavy(), &l, 99);
        assert_eq!(a, gen_user(&Archetype::offset_heavy(), &l, 99));
        assert_ne!(a, gen_user(&Archetype::offset_heavy(), &l, 100));
    }

    #[test]
    fn zero_covariance_is_deterministic() {
        let l = KeyboardLayout::qwerty();
        let u = SyntheticUser::uniform(&l, Offset::new(0.25, -0.1), Sym2::new(0.0, 0.0, 0.0));
        let k = l.key_for_char('g').unwrap();
        let mut rng = rng_from(1);
        let t = sample_touch(&u, &l, k, &mut rng);
        assert_eq!(t, k.denormalize(Offset::new(0.25, -0.1)));
    }

    #[test]
    fn edge_samples_stay_in_bounds() {
        let l = KeyboardLayout::qwerty();
        let u = SyntheticUser::uniform(&l, Offset::new(-0.75, -0.75), Sym2::new(0.3, 0.0, 0.3));
        let k = l.key_for_char('q').unwrap();
        let mut rng = rng_from(3);
        for _ in 0..2000 {
            assert!(l.bounds().contains(sample_touch(&u, &l, k, &mut rng)));
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
