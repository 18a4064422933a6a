//! Noisy-channel word decoding.
//!
//! A word's total score is its spatial log-score (the negated sum of per-tap
//! costs and edit costs) plus its language-model log-probability. The search
//! walks a lexicon trie in lock-step with the taps, keeping the `beam_width`
//! most promising hypotheses per tap position. Hypotheses are ranked by an
//! upper bound on any completion's total: the best log-prob among subtree
//! words of a reachable length, minus the cost so far and a lower bound on
//! the cost of the remaining taps.
//!
//! Edits, each counting toward `max_edits`:
//! - insertion: an extra tap that belongs to no character,
//! - deletion: a character with no tap,
//! - transposition: two adjacent characters tapped in swapped order.
//!
//! Insertions and deletions cost their fixed amount. A transposition costs its
//! fixed amount plus the spatial costs of the two taps against the swapped keys.

use std::collections::hash_map::Entry;

use rustc_hash::FxHashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language_model::LanguageModel;
use crate::layout::{Key, KeyboardLayout, TouchPoint};
use crate::spatial_model::{key_cost, PersonalizedModel, SpatialParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub max_edits: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_width: 16,
            max_edits: 1,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam width must be at least 1".into()));
        }
        if self.max_edits > u8::MAX as usize {
            return Err(Error::InvalidConfig("max_edits too large".into()));
        }
        Ok(())
    }
}

/// Exogenous conditions under which the literal is never replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutocorrectConfig {
    /// Literals shorter than this are left alone.
    pub min_literal_len: usize,
}

impl Default for AutocorrectConfig {
    fn default() -> Self {
        Self { min_literal_len: 2 }
    }
}

/// How one tap (or character) of a candidate was explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum AlignOp {
    Match {
        touch: usize,
        ch: char,
    },
    Insert {
        touch: usize,
    },
    Delete {
        ch: char,
    },
    /// Taps `touch` and `touch + 1` hit `second` then `first`.
    Transpose {
        touch: usize,
        first: char,
        second: char,
    },
}

impl AlignOp {
    pub fn is_edit(&self) -> bool {
        !matches!(self, AlignOp::Match { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub word: String,
    /// Spatial log-score, `<= 0`.
    pub sm: f64,
    pub lm: f64,
    pub total: f64,
    pub edit_count: usize,
    pub alignment: Vec<AlignOp>,
}

impl Candidate {
    fn new(word: String, cost: f64, lm: f64, alignment: Vec<AlignOp>) -> Self {
        let sm = -cost;
        let edit_count = alignment.iter().filter(|o| o.is_edit()).count();
        Self {
            word,
            sm,
            lm,
            total: sm + lm,
            edit_count,
            alignment,
        }
    }

    /// Touch/character pairs explained by plain substitution.
    pub fn matched_pairs(&self) -> impl Iterator<Item = (usize, char)> + '_ {
        self.alignment.iter().filter_map(|op| match *op {
            AlignOp::Match { touch, ch } => Some((touch, ch)),
            _ => None,
        })
    }
}

/// Total order used for ranking: higher total first, then word.
pub fn rank_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.total
        .total_cmp(&a.total)
        .then_with(|| a.word.cmp(&b.word))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub literal: Candidate,
    pub ranked: Vec<Candidate>,
    pub autocorrected: bool,
}

impl DecodeResult {
    /// Best lexicon candidate whose word differs from the literal.
    pub fn top_non_literal(&self) -> Option<&Candidate> {
        self.ranked.iter().find(|c| c.word != self.literal.word)
    }

    /// Highest-scoring candidate overall, literal included.
    pub fn best(&self) -> &Candidate {
        match self.ranked.first() {
            Some(top) if rank_order(top, &self.literal).is_le() => top,
            _ => &self.literal,
        }
    }

    /// What gets committed: the correction when autocorrect fires, else the literal.
    pub fn committed(&self) -> &Candidate {
        if self.autocorrected {
            self.top_non_literal()
                .expect("autocorrect implies a candidate")
        } else {
            &self.literal
        }
    }
}

/// Replace the literal iff the candidate scores strictly higher. Literals shorter
/// than the configured minimum are never replaced.
pub fn autocorrect_decision(
    literal: &Candidate,
    top: &Candidate,
    config: &AutocorrectConfig,
) -> bool {
    if literal.word.chars().count() < config.min_literal_len {
        return false;
    }
    top.word != literal.word && top.total > literal.total
}

/// Per-tap spatial cost against a key.
pub trait TapScorer {
    fn tap_cost(&self, touch: TouchPoint, key: &Key) -> f64;
}

/// The personalized scorer: [`key_cost`] under a model snapshot.
#[derive(Debug, Clone, Copy)]
pub struct ModelScorer<'a> {
    pub model: &'a PersonalizedModel,
    pub params: &'a SpatialParams,
}

impl TapScorer for ModelScorer<'_> {
    fn tap_cost(&self, touch: TouchPoint, key: &Key) -> f64 {
        key_cost(touch, key, self.model, self.params)
    }
}

#[derive(Debug, Clone)]
struct TrieNode {
    children: Vec<(u8, u32)>,
    word: Option<u32>,
    /// `len_logp[L]`: best log-prob of a word in this subtree with `L` more
    /// characters after this node.
    len_logp: Vec<f64>,
    /// `masks[d]`: letters occurring `d + 1` characters below this node.
    masks: Vec<u32>,
    /// Maximum of `len_logp`.
    best_logp: f64,
}

impl TrieNode {
    fn new() -> Self {
        Self {
            children: Vec::new(),
            word: None,
            len_logp: Vec::new(),
            masks: Vec::new(),
            best_logp: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
struct Trie {
    nodes: Vec<TrieNode>,
    words: Vec<(String, f64)>,
}

impl Trie {
    fn build(lm: &LanguageModel) -> Self {
        let mut nodes = vec![TrieNode::new()];
        let mut words = Vec::with_capacity(lm.lexicon().len());
        for (w, count) in lm.lexicon().iter() {
            let logp = lm.count_logp(count);
            let mut cur = 0usize;
            for b in w.bytes() {
                let l = b - b'a';
                cur = match nodes[cur].children.iter().find(|(c, _)| *c == l) {
                    Some(&(_, n)) => n as usize,
                    None => {
                        nodes.push(TrieNode::new());
                        let n = nodes.len() - 1;
                        nodes[cur].children.push((l, n as u32));
                        n
                    }
                };
            }
            nodes[cur].word = Some(words.len() as u32);
            words.push((w.to_string(), logp));
        }
        // Children always have larger indices than their parent.
        for i in (0..nodes.len()).rev() {
            nodes[i].children.sort_unstable();
            let mut len_logp = vec![nodes[i]
                .word
                .map_or(f64::NEG_INFINITY, |w| words[w as usize].1)];
            let mut masks: Vec<u32> = Vec::new();
            for &(l, c) in &nodes[i].children {
                let child = &nodes[c as usize];
                if len_logp.len() < child.len_logp.len() + 1 {
                    len_logp.resize(child.len_logp.len() + 1, f64::NEG_INFINITY);
                    masks.resize(child.len_logp.len(), 0);
                }
                for (k, &lp) in child.len_logp.iter().enumerate() {
                    len_logp[k + 1] = len_logp[k + 1].max(lp);
                }
                masks[0] |= 1 << l;
                for (d, &m) in child.masks.iter().enumerate() {
                    masks[d + 1] |= m;
                }
            }
            nodes[i].best_logp = len_logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            nodes[i].len_logp = len_logp;
            nodes[i].masks = masks;
        }
        Self { nodes, words }
    }
}

/// Per-decode data for bounding what a hypothesis can still score.
struct Bound<'a> {
    costs: &'a [[f64; 26]],
    /// Letters of each tap ordered by cost, cheapest first.
    by_cost: Vec<[u8; 26]>,
    /// `floor[t]`: sum over taps `t..` of the cheapest letter or insertion.
    floor: Vec<f64>,
    max_edits: u8,
    insertion_cost: f64,
    deletion_cost: f64,
}

impl<'a> Bound<'a> {
    fn new(costs: &'a [[f64; 26]], max_edits: u8, params: &SpatialParams) -> Self {
        let by_cost = costs
            .iter()
            .map(|row| {
                let mut ls: [u8; 26] = std::array::from_fn(|l| l as u8);
                ls.sort_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]));
                ls
            })
            .collect::<Vec<[u8; 26]>>();
        let mut floor = vec![0.0; costs.len() + 1];
        for t in (0..costs.len()).rev() {
            let cheapest = costs[t][by_cost[t][0] as usize];
            let cheapest = if max_edits > 0 {
                cheapest.min(params.insertion_cost)
            } else {
                cheapest
            };
            floor[t] = floor[t + 1] + cheapest;
        }
        Self {
            costs,
            by_cost,
            floor,
            max_edits,
            insertion_cost: params.insertion_cost,
            deletion_cost: params.deletion_cost,
        }
    }

    /// A looser, cheaper bound: `priority <= quick_priority` always.
    fn quick_priority(&self, trie: &Trie, h: &Hyp, t: usize) -> f64 {
        trie.nodes[h.node as usize].best_logp - h.cost - self.floor[t]
    }

    /// An upper bound on `-(final cost) + logp` over every completion of `h`,
    /// which has consumed `t` taps. `-inf` when no completion is possible.
    ///
    /// Each remaining tap either matches a character within `r` positions of
    /// its edit-free depth, or is an insertion; a word longer than the taps
    /// left needs at least that many deletions.
    fn priority(&self, trie: &Trie, h: &Hyp, t: usize) -> f64 {
        let node = &trie.nodes[h.node as usize];
        let r = (self.max_edits - h.edits) as usize;
        let m = self.costs.len() - t;
        let mut lm = f64::NEG_INFINITY;
        let lo = m.saturating_sub(r);
        for l in lo..=(m + r).min(node.len_logp.len().saturating_sub(1)) {
            let lp = node.len_logp[l];
            let extra = if l > m {
                (l - m) as f64 * self.deletion_cost
            } else {
                0.0
            };
            lm = lm.max(lp - extra);
        }
        if lm == f64::NEG_INFINITY {
            return lm;
        }
        let mut future = 0.0;
        for k in 0..m {
            let lo = k.saturating_sub(r);
            let hi = (k + r).min(node.masks.len().saturating_sub(1));
            let mut mask = 0u32;
            if lo < node.masks.len() {
                for d in lo..=hi {
                    mask |= node.masks[d];
                }
            }
            let j = t + k;
            let mut best = if r > 0 {
                self.insertion_cost
            } else {
                f64::INFINITY
            };
            if let Some(&l) = self.by_cost[j].iter().find(|&&l| mask & (1 << l) != 0) {
                best = best.min(self.costs[j][l as usize]);
            }
            if best == f64::INFINITY {
                return f64::NEG_INFINITY;
            }
            future += best;
        }
        lm - h.cost - future
    }
}

#[derive(Debug, Clone, Copy)]
struct Hyp {
    node: u32,
    cost: f64,
    edits: u8,
    trace: u32,
}

const NO_TRACE: u32 = u32::MAX;

struct Step {
    hyps: Vec<Hyp>,
    index: FxHashMap<(u32, u8), usize>,
}

impl Step {
    fn with_capacity(cap: usize) -> Self {
        Self {
            hyps: Vec::with_capacity(cap),
            index: FxHashMap::with_capacity_and_hasher(cap, Default::default()),
        }
    }

    /// Keeps the cheaper of `h` and any hypothesis already at the same
    /// (node, edits). The trace is only materialized when `h` is kept.
    fn offer(&mut self, node: u32, cost: f64, edits: u8, trace: impl FnOnce() -> u32) {
        match self.index.entry((node, edits)) {
            Entry::Occupied(e) => {
                let slot = &mut self.hyps[*e.get()];
                if cost < slot.cost {
                    *slot = Hyp {
                        node,
                        cost,
                        edits,
                        trace: trace(),
                    };
                }
            }
            Entry::Vacant(e) => {
                e.insert(self.hyps.len());
                self.hyps.push(Hyp {
                    node,
                    cost,
                    edits,
                    trace: trace(),
                });
            }
        }
    }

    /// Drops hypotheses that cannot complete and keeps the `width` best by
    /// [`Bound::priority`].
    ///
    /// Exact priorities are first computed for the best `2 * width` by the
    /// quick bound; the rest only need them when their quick bound reaches
    /// the `width`-th exact priority found so far.
    fn prune(&mut self, trie: &Trie, bound: &Bound, t: usize, width: usize) {
        let order = |a: &(f64, Hyp), b: &(f64, Hyp)| {
            b.0.total_cmp(&a.0)
                .then(a.1.node.cmp(&b.1.node))
                .then(a.1.edits.cmp(&b.1.edits))
        };
        let mut quick: Vec<(f64, Hyp)> = self
            .hyps
            .iter()
            .map(|h| (bound.quick_priority(trie, h, t), *h))
            .collect();
        let head = (2 * width).min(quick.len());
        if quick.len() > head {
            quick.select_nth_unstable_by(head - 1, order);
        }
        let mut kept: Vec<(f64, Hyp)> = quick[..head]
            .iter()
            .map(|&(_, h)| (bound.priority(trie, &h, t), h))
            .filter(|(p, _)| *p > f64::NEG_INFINITY)
            .collect();
        let threshold = if kept.len() >= width {
            let mut ps: Vec<f64> = kept.iter().map(|k| k.0).collect();
            ps.select_nth_unstable_by(width - 1, |a, b| b.total_cmp(a));
            ps[width - 1]
        } else {
            f64::NEG_INFINITY
        };
        for &(q, h) in &quick[head..] {
            if q >= threshold {
                let p = bound.priority(trie, &h, t);
                if p > f64::NEG_INFINITY && p >= threshold {
                    kept.push((p, h));
                }
            }
        }
        if kept.len() > width {
            kept.select_nth_unstable_by(width - 1, order);
            kept.truncate(width);
        }
        kept.sort_unstable_by(order);
        self.hyps = kept.into_iter().map(|(_, h)| h).collect();
        self.index = self
            .hyps
            .iter()
            .enumerate()
            .map(|(i, h)| ((h.node, h.edits), i))
            .collect();
    }
}

/// Decoder over a fixed layout and language model. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct Decoder {
    layout: KeyboardLayout,
    lm: LanguageModel,
    trie: Trie,
    letter_keys: [Option<usize>; 26],
}

impl Decoder {
    pub fn new(layout: KeyboardLayout, lm: LanguageModel) -> Self {
        let trie = Trie::build(&lm);
        let mut letter_keys = [None; 26];
        for (i, k) in layout.keys().iter().enumerate() {
            if k.is_letter() {
                letter_keys[(k.label as u8 - b'a') as usize] = Some(i);
            }
        }
        Self {
            layout,
            lm,
            trie,
            letter_keys,
        }
    }

    pub fn layout(&self) -> &KeyboardLayout {
        &self.layout
    }

    pub fn lm(&self) -> &LanguageModel {
        &self.lm
    }

    fn letter_key(&self, l: u8) -> Option<&Key> {
        self.letter_keys[l as usize].map(|i| &self.layout.keys()[i])
    }

    /// `costs[t][l]`: cost of tap `t` against letter `l`.
    fn cost_table<S: TapScorer>(
        &self,
        touches: &[TouchPoint],
        scorer: &S,
        params: &SpatialParams,
    ) -> Vec<[f64; 26]> {
        touches
            .iter()
            .map(|&t| {
                let mut row = [params.substitution_cost; 26];
                for (l, slot) in row.iter_mut().enumerate() {
                    if let Some(k) = self.letter_key(l as u8) {
                        *slot = scorer.tap_cost(t, k);
                    }
                }
                row
            })
            .collect()
    }

    /// Tap cost for an arbitrary character; off-layout characters cost the
    /// substitution maximum.
    fn char_cost<S: TapScorer>(
        &self,
        scorer: &S,
        params: &SpatialParams,
        t: TouchPoint,
        c: char,
    ) -> f64 {
        match self.layout.get(c) {
            Some(k) => scorer.tap_cost(t, k),
            None => params.substitution_cost,
        }
    }

    /// The string of nearest keys, scored as plain substitutions.
    pub fn literal<S: TapScorer>(
        &self,
        touches: &[TouchPoint],
        scorer: &S,
        params: &SpatialParams,
    ) -> Candidate {
        let mut word = String::with_capacity(touches.len());
        let mut cost = 0.0;
        let mut alignment = Vec::with_capacity(touches.len());
        for (i, &t) in touches.iter().enumerate() {
            let k = self.layout.nearest_key(t);
            word.push(k.label);
            cost += self.char_cost(scorer, params, t, k.label);
            alignment.push(AlignOp::Match {
                touch: i,
                ch: k.label,
            });
        }
        let lm = self.lm.word_logp(&word);
        Candidate::new(word, cost, lm, alignment)
    }

    pub fn decode(
        &self,
        touches: &[TouchPoint],
        model: &PersonalizedModel,
        params: &SpatialParams,
        beam: &BeamConfig,
        autocorrect: &AutocorrectConfig,
    ) -> DecodeResult {
        self.decode_with(
            touches,
            &ModelScorer { model, params },
            params,
            beam,
            autocorrect,
        )
    }

    pub fn decode_with<S: TapScorer>(
        &self,
        touches: &[TouchPoint],
        scorer: &S,
        params: &SpatialParams,
        beam: &BeamConfig,
        autocorrect: &AutocorrectConfig,
    ) -> DecodeResult {
        let literal = self.literal(touches, scorer, params);
        let ranked = self.search(touches, scorer, params, beam);
        let mut result = DecodeResult {
            literal,
            ranked,
            autocorrected: false,
        };
        result.autocorrected = result
            .top_non_literal()
            .is_some_and(|top| autocorrect_decision(&result.literal, top, autocorrect));
        result
    }

    fn search<S: TapScorer>(
        &self,
        touches: &[TouchPoint],
        scorer: &S,
        params: &SpatialParams,
        beam: &BeamConfig,
    ) -> Vec<Candidate> {
        let n = touches.len();
        let max_edits = beam.max_edits.min(u8::MAX as usize) as u8;
        let costs = self.cost_table(touches, scorer, params);
        let bound = Bound::new(&costs, max_edits, params);
        let nodes = &self.trie.nodes;
        let mut arena: Vec<(u32, AlignOp)> = Vec::with_capacity(beam.beam_width * 64 * (n + 1));
        let push = |arena: &mut Vec<(u32, AlignOp)>, parent: u32, op: AlignOp| {
            arena.push((parent, op));
            (arena.len() - 1) as u32
        };

        let cap = beam.beam_width * 32;
        let mut steps: Vec<Step> = (0..=n).map(|_| Step::with_capacity(cap)).collect();
        steps[0].offer(0, 0.0, 0, || NO_TRACE);

        for t in 0..=n {
            // A deletion never raises priority, so pruning before the closure
            // loses nothing that pruning after it would keep.
            if t < n {
                steps[t].prune(&self.trie, &bound, t, beam.beam_width);
            }
            // Deletions stay at this tap position; expand one edit level at a time.
            for level in 0..max_edits {
                let snapshot: Vec<Hyp> = steps[t]
                    .hyps
                    .iter()
                    .copied()
                    .filter(|h| h.edits == level)
                    .collect();
                for h in snapshot {
                    for &(l, child) in &nodes[h.node as usize].children {
                        let op = AlignOp::Delete {
                            ch: (b'a' + l) as char,
                        };
                        steps[t].offer(child, h.cost + params.deletion_cost, h.edits + 1, || {
                            push(&mut arena, h.trace, op)
                        });
                    }
                }
            }
            if t == n {
                break;
            }
            steps[t].prune(&self.trie, &bound, t, beam.beam_width);
            let current = std::mem::take(&mut steps[t].hyps);
            let tail = &mut steps[t + 1..];
            for h in &current {
                let node = &nodes[h.node as usize];
                for &(l, child) in &node.children {
                    let op = AlignOp::Match {
                        touch: t,
                        ch: (b'a' + l) as char,
                    };
                    tail[0].offer(child, h.cost + costs[t][l as usize], h.edits, || {
                        push(&mut arena, h.trace, op)
                    });
                }
                if h.edits >= max_edits {
                    continue;
                }
                let op = AlignOp::Insert { touch: t };
                tail[0].offer(h.node, h.cost + params.insertion_cost, h.edits + 1, || {
                    push(&mut arena, h.trace, op)
                });
                if t + 1 < n {
                    for &(l1, c1) in &node.children {
                        for &(l2, c2) in &nodes[c1 as usize].children {
                            if l1 == l2 {
                                continue;
                            }
                            let op = AlignOp::Transpose {
                                touch: t,
                                first: (b'a' + l1) as char,
                                second: (b'a' + l2) as char,
                            };
                            let c = params.transposition_cost
                                + costs[t][l2 as usize]
                                + costs[t + 1][l1 as usize];
                            // Typing the two characters in order reaches the same node with
                            // one edit fewer; skip swaps that are no cheaper than that.
                            if c >= costs[t][l1 as usize] + costs[t + 1][l2 as usize] {
                                continue;
                            }
                            tail[1].offer(c2, h.cost + c, h.edits + 1, || {
                                push(&mut arena, h.trace, op)
                            });
                        }
                    }
                }
            }
            steps[t].hyps = current;
        }

        let mut best: FxHashMap<u32, Hyp> = FxHashMap::default();
        for h in &steps[n].hyps {
            if let Some(w) = nodes[h.node as usize].word {
                let e = best.entry(w).or_insert(*h);
                if h.cost < e.cost {
                    *e = *h;
                }
            }
        }
        // Word ids follow lexicographic order, so (total desc, id asc) is the
        // ranking order.
        let total = |(w, h): &(u32, Hyp)| -h.cost + self.trie.words[*w as usize].1;
        let mut finals: Vec<(u32, Hyp)> = best.into_iter().collect();
        let order =
            |a: &(u32, Hyp), b: &(u32, Hyp)| total(b).total_cmp(&total(a)).then(a.0.cmp(&b.0));
        if finals.len() > beam.beam_width {
            finals.select_nth_unstable_by(beam.beam_width - 1, order);
            finals.truncate(beam.beam_width);
        }
        finals.sort_unstable_by(order);
        finals
            .into_iter()
            .map(|(w, h)| {
                let mut ops = Vec::new();
                let mut tr = h.trace;
                while tr != NO_TRACE {
                    let (parent, op) = arena[tr as usize];
                    ops.push(op);
                    tr = parent;
                }
                ops.reverse();
                let (word, logp) = &self.trie.words[w as usize];
                Candidate::new(word.clone(), h.cost, *logp, ops)
            })
            .collect()
    }

    /// Recomputes the spatial cost of an alignment from scratch.
    pub fn alignment_cost<S: TapScorer>(
        &self,
        alignment: &[AlignOp],
        touches: &[TouchPoint],
        scorer: &S,
        params: &SpatialParams,
    ) -> f64 {
        alignment
            .iter()
            .map(|op| match *op {
                AlignOp::Match { touch, ch } => self.char_cost(scorer, params, touches[touch], ch),
                AlignOp::Insert { .. } => params.insertion_cost,
                AlignOp::Delete { .. } => params.deletion_cost,
                AlignOp::Transpose {
                    touch,
                    first,
                    second,
                } => {
                    params.transposition_cost
                        + self.char_cost(scorer, params, touches[touch], second)
                        + self.char_cost(scorer, params, touches[touch + 1], first)
                }
            })
            .sum()
    }

    /// Cheapest alignment of `touches` to `word` using at most `max_edits`
    /// edits, by dynamic programming over (taps used, characters used, edits).
    pub fn align<S: TapScorer>(
        &self,
        word: &str,
        touches: &[TouchPoint],
        scorer: &S,
        params: &SpatialParams,
        max_edits: usize,
    ) -> Option<(f64, Vec<AlignOp>)> {
        let chars: Vec<char> = word.chars().collect();
        let (n, m) = (touches.len(), chars.len());
        let e_max = max_edits;
        let idx = |i: usize, j: usize, e: usize| (i * (m + 1) + j) * (e_max + 1) + e;
        let mut best = vec![f64::INFINITY; (n + 1) * (m + 1) * (e_max + 1)];
        let mut back: Vec<Option<(usize, usize, usize, AlignOp)>> = vec![None; best.len()];
        best[idx(0, 0, 0)] = 0.0;
        for i in 0..=n {
            for j in 0..=m {
                for e in 0..=e_max {
                    let cur = best[idx(i, j, e)];
                    if !cur.is_finite() {
                        continue;
                    }
                    let mut relax = |ni: usize, nj: usize, ne: usize, c: f64, op: AlignOp| {
                        let k = idx(ni, nj, ne);
                        if cur + c < best[k] {
                            best[k] = cur + c;
                            back[k] = Some((i, j, e, op));
                        }
                    };
                    if i < n && j < m {
                        let c = self.char_cost(scorer, params, touches[i], chars[j]);
                        relax(
                            i + 1,
                            j + 1,
                            e,
                            c,
                            AlignOp::Match {
                                touch: i,
                                ch: chars[j],
                            },
                        );
                    }
                    if e < e_max {
                        if i < n {
                            relax(
                                i + 1,
                                j,
                                e + 1,
                                params.insertion_cost,
                                AlignOp::Insert { touch: i },
                            );
                        }
                        if j < m {
                            relax(
                                i,
                                j + 1,
                                e + 1,
                                params.deletion_cost,
                                AlignOp::Delete { ch: chars[j] },
                            );
                        }
                        if i + 1 < n && j + 1 < m && chars[j] != chars[j + 1] {
                            let c = params.transposition_cost
                                + self.char_cost(scorer, params, touches[i], chars[j + 1])
                                + self.char_cost(scorer, params, touches[i + 1], chars[j]);
                            let op = AlignOp::Transpose {
                                touch: i,
                                first: chars[j],
                                second: chars[j + 1],
                            };
                            relax(i + 2, j + 2, e + 1, c, op);
                        }
                    }
                }
            }
        }
        let (e_best, cost) = (0..=e_max)
            .map(|e| (e, best[idx(n, m, e)]))
            .filter(|(_, c)| c.is_finite())
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        let mut ops = Vec::new();
        let (mut i, mut j, mut e) = (n, m, e_best);
        while let Some((pi, pj, pe, op)) = back[idx(i, j, e)] {
            ops.push(op);
            (i, j, e) = (pi, pj, pe);
        }
        ops.reverse();
        Some((cost, ops))
    }

    /// Scores a specific word against the taps (best alignment within the edit
    /// budget).
    pub fn score_word<S: TapScorer>(
        &self,
        word: &str,
        touches: &[TouchPoint],
        scorer: &S,
        params: &SpatialParams,
        max_edits: usize,
    ) -> Option<Candidate> {
        let (cost, ops) = self.align(word, touches, scorer, params, max_edits)?;
        Some(Candidate::new(
            word.to_string(),
            cost,
            self.lm.word_logp(word),
            ops,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::language_model::LanguageModel;

    fn decoder(doc: &str) -> Decoder {
        Decoder::new(
            KeyboardLayout::qwerty(),
            LanguageModel::from_document(doc).unwrap(),
        )
    }

    fn centers(d: &Decoder, word: &str) -> Vec<TouchPoint> {
        word.chars()
            .map(|c| d.layout().key_for_char(c).unwrap().center())
            .collect()
    }

    fn run(d: &Decoder, touches: &[TouchPoint], beam: BeamConfig) -> DecodeResult {
        let model = PersonalizedModel::baseline(d.layout());
        d.decode(
            touches,
            &model,
            &SpatialParams::default(),
            &beam,
            &AutocorrectConfig::default(),
        )
    }

    #[test]
    fn exact_centers_pick_the_word() {
        let d = decoder("cat\t1\ncar\t1\nbat\t1\n");
        let r = run(&d, &centers(&d, "cat"), BeamConfig::default());
        assert_eq!(r.ranked[0].word, "cat");
        assert_eq!(r.ranked[0].sm, 0.0);
        assert_eq!(r.literal.word, "cat");
        assert!(!r.autocorrected);
    }

    #[test]
    fn insertion_needs_edit_budget() {
        let d = decoder("cats\t1\n");
        let mut touches = centers(&d, "cats");
        touches.remove(2);
        let r = run(
            &d,
            &touches,
            BeamConfig {
                beam_width: 16,
                max_edits: 1,
            },
        );
        assert_eq!(r.ranked.first().map(|c| c.word.as_str()), Some("cats"));
        assert_eq!(r.ranked[0].edit_count, 1);
        let r = run(
            &d,
            &touches,
            BeamConfig {
                beam_width: 16,
                max_edits: 0,
            },
        );
        assert!(r.ranked.is_empty());
        assert_eq!(r.best().word, "cas");
    }

    #[test]
    fn extra_tap_and_transposition() {
        let d = decoder("cats\t1\ncat\t1\n");
        let mut touches = centers(&d, "cats");
        touches.insert(1, d.layout().key_for_char('p').unwrap().center());
        let r = run(&d, &touches, BeamConfig::default());
        assert_eq!(r.ranked[0].word, "cats");
        assert!(r.ranked[0]
            .alignment
            .contains(&AlignOp::Insert { touch: 1 }));

        let r = run(&d, &centers(&d, "cta"), BeamConfig::default());
        assert_eq!(r.ranked[0].word, "cat");
        assert_eq!(r.ranked[0].sm, -SpatialParams::default().transposition_cost);
    }

    #[test]
    fn autocorrect_boundaries() {
        let cfg = AutocorrectConfig::default();
        let lit = Candidate::new("cst".into(), 0.0, -10.0, vec![]);
        let same = Candidate::new("cat".into(), 1.0, -9.0, vec![]);
        assert_eq!(same.total, lit.total);
        assert!(!autocorrect_decision(&lit, &same, &cfg));
        let better = Candidate::new("cat".into(), 0.5, -5.0, vec![]);
        assert!(autocorrect_decision(&lit, &better, &cfg));
        let lit_again = Candidate::new("cat".into(), 0.0, -1.0, vec![]);
        assert!(!autocorrect_decision(
            &lit_again,
            &Candidate {
                word: "cat".into(),
                total: 5.0,
                ..better.clone()
            },
            &cfg
        ));
        let short = Candidate::new("x".into(), 0.0, -30.0, vec![]);
        assert!(!autocorrect_decision(&short, &better, &cfg));
    }

    #[test]
    fn alignment_rescoring_matches() {
        let d = decoder("hello\t3\nhelp\t2\nhell\t1\nshell\t1\n");
        let model = PersonalizedModel::baseline(d.layout());
        let params = SpatialParams::default();
        let scorer = ModelScorer {
            model: &model,
            params: &params,
        };
        let mut touches = centers(&d, "hrllo");
        touches[0].x += 9.0;
        let r = run(&d, &touches, BeamConfig::default());
        for c in &r.ranked {
            let cost = d.alignment_cost(&c.alignment, &touches, &scorer, &params);
            assert!((cost + c.sm).abs() < 1e-12, "{}", c.word);
            assert_eq!(c.total, c.sm + c.lm);
            let (dp, _) = d.align(&c.word, &touches, &scorer, &params, 1).unwrap();
            assert!((dp + c.sm).abs() < 1e-12);
        }
    }
}
