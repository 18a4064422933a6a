//! Independent reference implementations used by the integration tests.
//! Nothing here calls the code under test except for plain data accessors.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use tapfit::layout::{Key, KeyboardLayout, TouchPoint};
use tapfit::touch_store::{KeyStats, StatsMap};
use tapfit::{LanguageModel, Offset, SpatialParams};

/// Unpersonalized per-tap cost written out longhand.
pub fn direct_tap_cost(touch: TouchPoint, key: &Key, params: &SpatialParams) -> f64 {
    let dx = (touch.x - key.center_x) / key.width;
    let dy = (touch.y - key.center_y) / key.height;
    let g = (dx * dx + dy * dy) / (2.0 * params.sigma0 * params.sigma0);
    if g < params.substitution_cost {
        g
    } else {
        params.substitution_cost
    }
}

/// Brute-force literal: the containing key if any, otherwise the closest in
/// normalized distance; ties go to the smaller label.
pub fn brute_nearest(layout: &KeyboardLayout, t: TouchPoint) -> char {
    let mut best: Option<(u8, f64, char)> = None;
    for k in layout.keys() {
        let inside = t.x >= k.center_x - k.width / 2.0
            && t.x <= k.center_x + k.width / 2.0
            && t.y >= k.center_y - k.height / 2.0
            && t.y <= k.center_y + k.height / 2.0;
        let dx = (t.x - k.center_x) / k.width;
        let dy = (t.y - k.center_y) / k.height;
        let cand = (u8::from(!inside), dx * dx + dy * dy, k.label);
        if best.is_none_or(|b| cand.partial_cmp(&b).unwrap().is_lt()) {
            best = Some(cand);
        }
    }
    best.unwrap().2
}

// ---- clustering ----

/// Squared error of a set of keys about their pooled mean, summed from the
/// per-key second moments.
pub fn direct_sse(stats: &StatsMap, keys: &[char]) -> f64 {
    let (mut n, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for c in keys {
        if let Some(s) = stats.get(c) {
            n += s.n;
            sx += s.sum_dx;
            sy += s.sum_dy;
            sxx += s.sum_dx2;
            syy += s.sum_dy2;
        }
    }
    if n == 0.0 {
        return 0.0;
    }
    let (mx, my) = (sx / n, sy / n);
    (sxx - n * mx * mx) + (syy - n * my * my)
}

pub fn pooled_n(stats: &StatsMap, keys: &[char]) -> f64 {
    keys.iter().filter_map(|c| stats.get(c)).map(|s| s.n).sum()
}

/// Every (vertical?, coordinate) line between adjacent distinct key centers.
pub fn brute_candidates(layout: &KeyboardLayout, keys: &[char]) -> Vec<(bool, f64)> {
    let mut out = Vec::new();
    for vertical in [true, false] {
        let mut cs: Vec<f64> = keys
            .iter()
            .map(|&c| {
                let k = layout.get(c).unwrap();
                if vertical {
                    k.center_x
                } else {
                    k.center_y
                }
            })
            .collect();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        for w in cs.windows(2) {
            out.push((vertical, (w[0] + w[1]) / 2.0));
        }
    }
    out
}

pub fn split_keys(
    layout: &KeyboardLayout,
    keys: &[char],
    vertical: bool,
    at: f64,
) -> (Vec<char>, Vec<char>) {
    keys.iter().partition(|&&c| {
        let k = layout.get(c).unwrap();
        (if vertical { k.center_x } else { k.center_y }) < at
    })
}

/// SSE decrease from a split, via direct SSE of parent and children.
pub fn direct_reduction(
    stats: &StatsMap,
    layout: &KeyboardLayout,
    keys: &[char],
    vertical: bool,
    at: f64,
) -> f64 {
    let (lo, hi) = split_keys(layout, keys, vertical, at);
    direct_sse(stats, keys) - direct_sse(stats, &lo) - direct_sse(stats, &hi)
}

/// Best reduction over every candidate line of every leaf.
pub fn exhaustive_best(stats: &StatsMap, layout: &KeyboardLayout, leaves: &[Vec<char>]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for keys in leaves {
        for (v, at) in brute_candidates(layout, keys) {
            best = best.max(direct_reduction(stats, layout, keys, v, at));
        }
    }
    best
}

pub fn random_stats(rng: &mut impl Rng, layout: &KeyboardLayout, max_per_key: usize) -> StatsMap {
    let mut m = StatsMap::new();
    let spread = rng.random_range(0.05..0.5);
    let shift = (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
    for k in layout.letter_keys() {
        let n = rng.random_range(0..=max_per_key);
        if n == 0 {
            continue;
        }
        let local = (
            shift.0 + rng.random_range(-0.3..0.3),
            shift.1 + rng.random_range(-0.3..0.3),
        );
        let mut s = KeyStats::default();
        for _ in 0..n {
            s.push(Offset::new(
                local.0 + spread * rng.random_range(-1.0..1.0),
                local.1 + spread * rng.random_range(-1.0..1.0),
            ));
        }
        m.insert(k.label, s);
    }
    m
}

// ---- decoding ----

/// Minimum spatial cost of explaining `touches` as `word` with at most
/// `max_edits` insertions, deletions or adjacent transpositions, by plain
/// recursion with memoization.
pub fn oracle_cost(
    layout: &KeyboardLayout,
    params: &SpatialParams,
    cost: &dyn Fn(TouchPoint, &Key) -> f64,
    word: &[char],
    touches: &[TouchPoint],
    max_edits: usize,
) -> Option<f64> {
    let tap = |t: TouchPoint, c: char| match layout.get(c) {
        Some(k) => cost(t, k),
        None => params.substitution_cost,
    };
    let mut memo: BTreeMap<(usize, usize, usize), Option<f64>> = BTreeMap::new();
    #[allow(clippy::too_many_arguments)]
    fn go(
        i: usize,
        j: usize,
        e: usize,
        word: &[char],
        touches: &[TouchPoint],
        params: &SpatialParams,
        tap: &dyn Fn(TouchPoint, char) -> f64,
        memo: &mut BTreeMap<(usize, usize, usize), Option<f64>>,
    ) -> Option<f64> {
        if i == touches.len() && j == word.len() {
            return Some(0.0);
        }
        if let Some(v) = memo.get(&(i, j, e)) {
            return *v;
        }
        let mut best: Option<f64> = None;
        let mut take = |c: Option<f64>| {
            if let Some(c) = c {
                if best.is_none_or(|b| c < b) {
                    best = Some(c);
                }
            }
        };
        if i < touches.len() && j < word.len() {
            let here = tap(touches[i], word[j]);
            take(go(i + 1, j + 1, e, word, touches, params, tap, memo).map(|r| here + r));
        }
        if e > 0 {
            if i < touches.len() {
                take(
                    go(i + 1, j, e - 1, word, touches, params, tap, memo)
                        .map(|r| params.insertion_cost + r),
                );
            }
            if j < word.len() {
                take(
                    go(i, j + 1, e - 1, word, touches, params, tap, memo)
                        .map(|r| params.deletion_cost + r),
                );
            }
            if i + 1 < touches.len() && j + 1 < word.len() && word[j] != word[j + 1] {
                let here = params.transposition_cost
                    + tap(touches[i], word[j + 1])
                    + tap(touches[i + 1], word[j]);
                take(go(i + 2, j + 2, e - 1, word, touches, params, tap, memo).map(|r| here + r));
            }
        }
        memo.insert((i, j, e), best);
        best
    }
    go(0, 0, max_edits, word, touches, params, &tap, &mut memo)
}

/// Highest `(total, word)` over every lexicon word reachable within the edit
/// budget; ties go to the lexicographically smaller word.
pub fn exhaustive_top(
    layout: &KeyboardLayout,
    lm: &LanguageModel,
    params: &SpatialParams,
    cost: &dyn Fn(TouchPoint, &Key) -> f64,
    touches: &[TouchPoint],
    max_edits: usize,
) -> Option<(f64, String)> {
    let mut best: Option<(f64, String)> = None;
    for (w, _) in lm.lexicon().iter() {
        let chars: Vec<char> = w.chars().collect();
        if let Some(c) = oracle_cost(layout, params, cost, &chars, touches, max_edits) {
            let total = -c + lm.word_logp(w);
            if best
                .as_ref()
                .is_none_or(|b| total > b.0 || (total == b.0 && w < b.1.as_str()))
            {
                best = Some((total, w.to_string()));
            }
        }
    }
    best
}

/// Oracle total for one word, if reachable.
pub fn oracle_total(
    layout: &KeyboardLayout,
    lm: &LanguageModel,
    params: &SpatialParams,
    cost: &dyn Fn(TouchPoint, &Key) -> f64,
    word: &str,
    touches: &[TouchPoint],
    max_edits: usize,
) -> Option<f64> {
    let chars: Vec<char> = word.chars().collect();
    oracle_cost(layout, params, cost, &chars, touches, max_edits).map(|c| -c + lm.word_logp(word))
}

/// Taps for `word` with Gaussian noise (in key units) around each key center.
pub fn noisy_taps(
    layout: &KeyboardLayout,
    word: &str,
    noise: f64,
    rng: &mut impl Rng,
) -> Vec<TouchPoint> {
    word.chars()
        .map(|c| {
            let k = layout.get(c).unwrap();
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let w: f64 = rng.sample(rand_distr::StandardNormal);
            layout.clamp(k.denormalize(Offset::new(noise * z, noise * w)))
        })
        .collect()
}
