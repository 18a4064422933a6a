//! Property tests for geometry, clustering, scoring, the language model, the
//! touch store and the decoder.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tapfit::clustering::{reduction, split_candidates, Axis, Cluster, ClusterConfig, ClusterTree};
use tapfit::decoder::{rank_order, AutocorrectConfig, BeamConfig, Decoder, TapScorer};
use tapfit::language_model::{Lexicon, LmConfig};
use tapfit::layout::{Key, KeyboardLayout, Offset, TouchPoint};
use tapfit::spatial_model::{
    covariance_map_estimate, PersonalizedModel, SpatialParams, MIN_COV_POINTS,
};
use tapfit::touch_store::{HistoryConfig, KeyStats, TouchHistory};
use tapfit::LanguageModel;

fn qwerty() -> KeyboardLayout {
    KeyboardLayout::qwerty()
}

fn letters() -> Vec<char> {
    qwerty().letter_keys().map(|k| k.label).collect()
}

fn point_strategy() -> impl Strategy<Value = TouchPoint> {
    (-40.0f64..440.0, -40.0f64..220.0).prop_map(|(x, y)| TouchPoint::new(x, y))
}

fn small_decoder() -> Decoder {
    Decoder::new(
        qwerty(),
        LanguageModel::new(Lexicon::english().top(300), LmConfig::default()),
    )
}

/// The unpersonalized per-tap cost, implemented independently.
struct PlainScorer(SpatialParams);

impl TapScorer for PlainScorer {
    fn tap_cost(&self, touch: TouchPoint, key: &Key) -> f64 {
        common::direct_tap_cost(touch, key, &self.0)
    }
}

// ---- layout ----

proptest! {
    #[test]
    fn normalize_round_trips(key_i in 0usize..26, dx in -3.0f64..3.0, dy in -3.0f64..3.0) {
        let layout = qwerty();
        let key = &layout.keys()[key_i];
        let off = key.normalize(key.denormalize(Offset::new(dx, dy)));
        prop_assert!((off.dx - dx).abs() < 1e-12 && (off.dy - dy).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_translation_equivariant(key_i in 0usize..26, p in point_strategy(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let layout = qwerty();
        let key = &layout.keys()[key_i];
        let moved = TouchPoint::new(p.x + a * key.width, p.y + b * key.height);
        let (o1, o2) = (key.normalize(p), key.normalize(moved));
        prop_assert!((o2.dx - o1.dx - a).abs() < 1e-9 && (o2.dy - o1.dy - b).abs() < 1e-9);
    }

    #[test]
    fn nearest_key_matches_scan(p in point_strategy()) {
        let layout = qwerty();
        prop_assert_eq!(layout.nearest_key(p).label, common::brute_nearest(&layout, p));
    }

    #[test]
    fn clamp_stays_in_bounds(p in (-1e4f64..1e4, -1e4f64..1e4)) {
        let layout = qwerty();
        let b = layout.bounds();
        let q = layout.clamp(TouchPoint::new(p.0, p.1));
        prop_assert!(b.contains(q));
        prop_assert_eq!(layout.clamp(q), q);
        if b.contains(TouchPoint::new(p.0, p.1)) {
            prop_assert_eq!(q, TouchPoint::new(p.0, p.1));
        }
    }
}

#[test]
fn key_rectangles_do_not_overlap() {
    let layout = qwerty();
    let keys = layout.keys();
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            let (ra, rb) = (a.rect(), b.rect());
            let overlap = ra.x0 < rb.x1 && rb.x0 < ra.x1 && ra.y0 < rb.y1 && rb.y0 < ra.y1;
            assert!(!overlap, "{} and {} overlap", a.label, b.label);
        }
    }
}

// ---- clustering ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn reduction_matches_direct_sse(seed in any::<u64>()) {
        let layout = qwerty();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats = common::random_stats(&mut rng, &layout, 20);
        let all = letters();
        let rect = layout.bounds();
        let cluster = Cluster::new(all.clone(), rect);
        let cands = split_candidates(&cluster, &layout);
        let brute = common::brute_candidates(&layout, &all);
        prop_assert_eq!(cands.len(), brute.len());
        for (s, (v, at)) in cands.iter().zip(&brute) {
            prop_assert_eq!(s.axis == Axis::Vertical, *v);
            prop_assert!((s.coordinate - at).abs() < 1e-12);
            let direct = common::direct_reduction(&stats, &layout, &all, *v, *at);
            prop_assert!((reduction(&stats, &layout, &cluster, *s) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_trees_nest_and_sse_falls(seed in any::<u64>()) {
        let layout = qwerty();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats = common::random_stats(&mut rng, &layout, 20);
        let mut prev: Option<ClusterTree> = None;
        for k in 1..=10 {
            let tree = ClusterTree::build(&layout, &stats, ClusterConfig { k });
            prop_assert!(tree.leaf_count() <= k);
            let keys: Vec<char> = tree.leaves().flat_map(|l| l.cluster.keys.iter().copied()).collect();
            prop_assert_eq!(keys.len(), 26);
            prop_assert_eq!(keys.iter().collect::<BTreeSet<_>>().len(), 26);
            for leaf in tree.leaves() {
                for c in &leaf.cluster.keys {
                    prop_assert!(leaf.cluster.rect.contains(layout.get(*c).unwrap().center()));
                }
                let sse = common::direct_sse(&stats, &leaf.cluster.keys);
                prop_assert!((tapfit::clustering::sse(&leaf.stats) - sse).abs() < 1e-9);
            }
            if let Some(p) = &prev {
                prop_assert!(tree.total_sse() <= p.total_sse() + 1e-9);
                prop_assert_eq!(&tree.steps()[..p.steps().len()], p.steps());
                for leaf in tree.leaves() {
                    let parent = p.leaf_index(leaf.cluster.keys[0]).unwrap();
                    prop_assert!(leaf.cluster.keys.iter().all(|c| p.leaf_index(*c) == Some(parent)));
                }
            }
            prev = Some(tree);
        }
    }

    #[test]
    fn build_work_is_linear_in_keys_per_split(seed in any::<u64>(), k in 1usize..=10) {
        let layout = qwerty();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats = common::random_stats(&mut rng, &layout, 20);
        let (tree, counters) = ClusterTree::build_counted(&layout, &stats, ClusterConfig { k });
        let splits = tree.steps().len();
        // Each split re-evaluates two children over both axes.
        prop_assert!(counters.candidate_evaluations <= 2 * 25 * (2 * splits + 1));
        prop_assert!(counters.key_visits <= 26 * (6 + 8 * splits));
    }
}

#[test]
fn one_cluster_uses_the_global_mean() {
    let layout = qwerty();
    let mut stats = tapfit::StatsMap::new();
    stats.insert('a', KeyStats::from_offset(Offset::new(0.3, 0.0)));
    stats.insert('p', KeyStats::from_offset(Offset::new(-0.1, -0.1)));
    let tree = ClusterTree::build(&layout, &stats, ClusterConfig { k: 1 });
    for c in letters() {
        let o = tree.offset_for(c).unwrap();
        assert!((o.dx - 0.1).abs() < 1e-15 && (o.dy + 0.05).abs() < 1e-15);
    }
}

// ---- spatial model ----

proptest! {
    #[test]
    fn covariance_needs_enough_points(seed in any::<u64>(), n in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = KeyStats::default();
        for _ in 0..n {
            s.push(Offset::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        }
        let cg = covariance_map_estimate(&s);
        if n <= 2 {
            prop_assert!(cg.cov.is_none());
        }
        if (n as f64) < MIN_COV_POINTS {
            prop_assert!(!cg.cov_valid);
        } else {
            // Continuous random draws are never degenerate.
            prop_assert!(cg.cov_valid);
        }
        if cg.cov_valid {
            let c = cg.cov.unwrap();
            prop_assert!(c.xx > 0.0 && c.yy > 0.0 && c.xx * c.yy - c.xy * c.xy > 0.0);
        }
    }

    #[test]
    fn collinear_points_are_not_trusted(seed in any::<u64>(), n in 8usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = KeyStats::default();
        for _ in 0..n {
            let t: f64 = rng.random_range(-1.0..1.0);
            s.push(Offset::new(t, 2.0 * t));
        }
        let cg = covariance_map_estimate(&s);
        // The diagonal prior term keeps the estimate invertible; anything marked
        // valid must also be well conditioned.
        if cg.cov_valid {
            prop_assert!(cg.cov.unwrap().condition_number() < 1e6);
        }
    }

    #[test]
    fn empty_model_decodes_like_plain_scoring(seed in any::<u64>(), sigma in 0.3f64..0.8) {
        let d = small_decoder();
        let layout = d.layout().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<String> = d.lm().lexicon().iter().map(|(w, _)| w.to_string()).collect();
        let word = &words[rng.random_range(0..words.len())];
        let touches = common::noisy_taps(&layout, word, 0.4, &mut rng);
        let params = SpatialParams::default().with_sigma(sigma);
        let model = PersonalizedModel::build(&layout, &tapfit::StatsMap::new(), ClusterConfig { k: 7 });
        let beam = BeamConfig::default();
        let ac = AutocorrectConfig::default();
        let personalized = d.decode(&touches, &model, &params, &beam, &ac);
        let plain = d.decode_with(&touches, &PlainScorer(params), &params, &beam, &ac);
        prop_assert_eq!(personalized, plain);
    }
}

// ---- language model ----

#[test]
fn word_log_probs_follow_counts() {
    let lm = LanguageModel::english();
    let mut by_count: Vec<(u64, f64)> = lm
        .lexicon()
        .iter()
        .map(|(w, c)| (c, lm.word_logp(w)))
        .collect();
    by_count.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    for w in by_count.windows(2) {
        assert!(w[0].1 <= w[1].1);
    }
    let total: f64 = lm
        .lexicon()
        .iter()
        .map(|(w, _)| lm.word_logp(w).exp())
        .sum::<f64>()
        + lm.unseen_mass();
    assert!((total - 1.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn unknown_words_score_below_zero(w in "[a-z]{1,12}") {
        let lm = LanguageModel::english();
        let lp = lm.word_logp(&w);
        prop_assert!(lp.is_finite() && lp < 0.0);
        if !lm.contains(&w) {
            prop_assert!(lp <= lm.char_backoff_logp(&w));
        }
    }
}

// ---- touch store ----

proptest! {
    #[test]
    fn history_respects_capacity_and_weights(
        seed in any::<u64>(),
        buckets in 1usize..6,
        per_bucket in 1usize..40,
        decay in 0.0f64..0.3,
        touches in 0usize..400,
    ) {
        let config = HistoryConfig::new(buckets * per_bucket, buckets, decay).unwrap();
        let mut h = TouchHistory::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..touches {
            let c = (b'a' + rng.random_range(0..26u8)) as char;
            h.record_touch(c, Offset::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            prop_assert!(h.total_touches() <= buckets * per_bucket);
            prop_assert!(h.buckets().len() <= buckets);
        }
        let expected: f64 = h
            .buckets()
            .rev()
            .enumerate()
            .map(|(age, b)| config.weight(age) * b.touch_count as f64)
            .sum();
        let got: f64 = h.aggregate().values().map(|s| s.n).sum();
        prop_assert!((got - expected).abs() < 1e-9);
        prop_assert_eq!(TouchHistory::load_profile(&h.save_profile()).unwrap(), h);
    }
}

// ---- decoder ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn candidate_scores_decompose(seed in any::<u64>(), max_edits in 0usize..=2, noise in 0.1f64..0.7) {
        let d = small_decoder();
        let layout = d.layout().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<String> = d.lm().lexicon().iter().map(|(w, _)| w.to_string()).collect();
        let word = &words[rng.random_range(0..words.len())];
        let touches = common::noisy_taps(&layout, word, noise, &mut rng);
        let params = SpatialParams::default();
        let scorer = PlainScorer(params);
        let beam = BeamConfig { beam_width: 16, max_edits };
        let r = d.decode_with(&touches, &scorer, &params, &beam, &AutocorrectConfig::default());

        let literal: String = touches.iter().map(|&t| common::brute_nearest(&layout, t)).collect();
        prop_assert_eq!(&r.literal.word, &literal);
        prop_assert!(r.ranked.len() <= beam.beam_width);
        for w in r.ranked.windows(2) {
            prop_assert!(rank_order(&w[0], &w[1]).is_lt());
        }
        for c in std::iter::once(&r.literal).chain(&r.ranked) {
            prop_assert!(c.sm <= 0.0);
            prop_assert!((c.total - (c.sm + c.lm)).abs() < 1e-12);
            prop_assert_eq!(c.lm, d.lm().word_logp(&c.word));
            let recomputed = d.alignment_cost(&c.alignment, &touches, &scorer, &params);
            prop_assert!((recomputed + c.sm).abs() < 1e-9);
            prop_assert!(c.edit_count <= max_edits);
            // A kept alignment is a real alignment, so it can be no cheaper
            // than the best one.
            if !std::ptr::eq(c, &r.literal) {
                let cost = |t: TouchPoint, k: &Key| scorer.tap_cost(t, k);
                let oracle = common::oracle_total(&layout, d.lm(), &params, &cost, &c.word, &touches, max_edits).unwrap();
                prop_assert!(c.total <= oracle + 1e-9);
            }
        }
        if r.autocorrected {
            let top = r.top_non_literal().unwrap();
            prop_assert!(top.total > r.literal.total);
            prop_assert!(r.literal.word.len() >= 2);
        }
    }
}
