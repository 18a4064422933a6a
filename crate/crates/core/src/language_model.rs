//! Unigram word model with a character-bigram backup for literals that are
//! not in the lexicon.
//!
//! The word model ignores left context. Every comparison this crate runs holds
//! the language model fixed and varies only the spatial model, so a unigram
//! is enough for that purpose.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency list shipped with the crate (~10k English words).
pub const ENGLISH_10K: &str = include_str!("../assets/lexicon_en_10k.tsv");

/// Log-probability assigned to a transition involving a character outside a-z.
pub const CHAR_FLOOR_LOGP: f64 = -12.0;

const ALPHABET: usize = 26;
const BEGIN: usize = ALPHABET;
const END: usize = ALPHABET;

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, u64>,
    total: u64,
}

/// Lowercases and drops everything that is not a-z.
pub fn normalize_word(raw: &str) -> String {
    raw.chars()
        .flat_map(char::to_lowercase)
        .filter(char::is_ascii_lowercase)
        .collect()
}

impl Lexicon {
    /// Parses `word<TAB>count` lines. Blank lines are skipped; duplicate words
    /// (after normalization) have their counts summed.
    pub fn parse(doc: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, u64> = BTreeMap::new();
        for (i, line) in doc.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::LexiconLine {
                line: line_no,
                reason: reason.to_string(),
            };
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected word<TAB>count"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| bad("count is not a positive integer"))?;
            if count == 0 {
                return Err(bad("count must be positive"));
            }
            let word = normalize_word(word);
            if word.is_empty() {
                return Err(bad("word has no letters"));
            }
            *entries.entry(word).or_default() += count;
        }
        Self::from_counts(entries)
    }

    pub fn from_counts(entries: BTreeMap<String, u64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        let total = entries.values().sum();
        Ok(Self { entries, total })
    }

    pub fn english() -> Self {
        Self::parse(ENGLISH_10K).expect("shipped lexicon parses")
    }

    /// The `n` most frequent words (ties by word), as a new lexicon.
    pub fn top(&self, n: usize) -> Self {
        let mut v: Vec<(&String, &u64)> = self.entries.iter().collect();
        v.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let entries = v
            .into_iter()
            .take(n.max(1))
            .map(|(w, c)| (w.clone(), *c))
            .collect();
        Self::from_counts(entries).expect("non-empty")
    }

    pub fn count(&self, w: &str) -> Option<u64> {
        self.entries.get(w).copied()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(w, &c)| (w.as_str(), c))
    }
}

/// Add-one smoothed character bigrams over a-z with begin/end markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharBackoffLm {
    /// `logp[context][next]`; context 26 is BEGIN, next 26 is END.
    logp: Vec<[f64; ALPHABET + 1]>,
}

fn letter_index(c: char) -> Option<usize> {
    c.is_ascii_lowercase().then(|| (c as u8 - b'a') as usize)
}

impl CharBackoffLm {
    /// Trains on word types: each distinct lexicon word counts once.
    pub fn train(lexicon: &Lexicon) -> Self {
        let mut counts = vec![[0u64; ALPHABET + 1]; ALPHABET + 1];
        for (w, _) in lexicon.iter() {
            let mut prev = BEGIN;
            for c in w.chars() {
                let i = letter_index(c).expect("lexicon words are a-z");
                counts[prev][i] += 1;
                prev = i;
            }
            counts[prev][END] += 1;
        }
        let logp = counts
            .iter()
            .map(|row| {
                let denom = (row.iter().sum::<u64>() + (ALPHABET as u64 + 1)) as f64;
                let mut out = [0.0; ALPHABET + 1];
                for (o, &c) in out.iter_mut().zip(row) {
                    *o = ((c + 1) as f64 / denom).ln();
                }
                out
            })
            .collect();
        Self { logp }
    }

    /// Distribution over next characters (a-z then END) after `context`
    /// (`None` for the word start).
    pub fn next_logps(&self, context: Option<char>) -> Option<&[f64; ALPHABET + 1]> {
        match context {
            None => Some(&self.logp[BEGIN]),
            Some(c) => letter_index(c).map(|i| &self.logp[i]),
        }
    }

    pub fn logp(&self, s: &str) -> f64 {
        let mut total = 0.0;
        let mut prev = Some(BEGIN);
        for c in s.chars() {
            let next = letter_index(c);
            total += match (prev, next) {
                (Some(p), Some(n)) => self.logp[p][n],
                _ => CHAR_FLOOR_LOGP,
            };
            prev = next;
        }
        total += match prev {
            Some(p) => self.logp[p][END],
            None => CHAR_FLOOR_LOGP,
        };
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    /// Added to the character-model score of out-of-vocabulary strings.
    pub oov_penalty: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { oov_penalty: -3.0 }
    }
}

/// Word model plus character backup. Vocabulary words get `count / (total+1)`,
/// leaving `1 / (total+1)` for unseen words.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    lexicon: Lexicon,
    log_denom: f64,
    chars: CharBackoffLm,
    config: LmConfig,
}

impl LanguageModel {
    pub fn new(lexicon: Lexicon, config: LmConfig) -> Self {
        let chars = CharBackoffLm::train(&lexicon);
        let log_denom = ((lexicon.total() + 1) as f64).ln();
        Self {
            lexicon,
            log_denom,
            chars,
            config,
        }
    }

    pub fn from_document(doc: &str) -> Result<Self> {
        Ok(Self::new(Lexicon::parse(doc)?, LmConfig::default()))
    }

    pub fn english() -> Self {
        Self::new(Lexicon::english(), LmConfig::default())
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn chars(&self) -> &CharBackoffLm {
        &self.chars
    }

    pub fn contains(&self, w: &str) -> bool {
        self.lexicon.count(w).is_some()
    }

    /// Log-probability of an in-vocabulary word from its count.
    pub fn count_logp(&self, count: u64) -> f64 {
        (count as f64).ln() - self.log_denom
    }

    pub fn unseen_mass(&self) -> f64 {
        1.0 / (self.lexicon.total() + 1) as f64
    }

    pub fn char_backoff_logp(&self, s: &str) -> f64 {
        self.chars.logp(s)
    }

    pub fn word_logp(&self, w: &str) -> f64 {
        match self.lexicon.count(w) {
            Some(c) => self.count_logp(c),
            None => self.chars.logp(w) + self.config.oov_penalty,
        }
    }
}
