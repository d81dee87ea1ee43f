//! Online lexicon-constrained CTC beam search with n-gram shallow fusion.
//!
//! A hypothesis is a CTC alignment prefix summarized by its trie position,
//! last emitted token and LM state. Entering a trie node that ends a word
//! forks the hypothesis: one copy emits the word and returns to the root,
//! another (if the node has children) keeps spelling. Hypotheses with equal
//! `(node, last token, LM state)` score every continuation identically and
//! are merged.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::lexicon::{Lexicon, ROOT};
use super::lm::{LmState, LmWord, NgramLm};
use super::tokens::TokenSet;
use crate::error::{Error, Result};
use crate::model::EmissionMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRule {
    /// Keep the better of two equivalent hypotheses (Viterbi).
    #[default]
    Max,
    /// Sum the probabilities of equivalent hypotheses.
    LogSumExp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub beam_size: usize,
    /// Tokens expanded per frame, by acoustic score; blank is always added.
    pub top_k: usize,
    /// A frame whose blank posterior exceeds this only extends with blank.
    /// 1.0 disables the rule.
    pub blank_threshold: f64,
    pub lm_weight: f64,
    /// Added once per emitted word.
    pub word_score: f64,
    /// Finalize the common word prefix every this many chunks; 0 disables.
    pub history_prune_interval: usize,
    pub merge: MergeRule,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            beam_size: 100,
            top_k: 50,
            blank_threshold: 0.95,
            lm_weight: 0.5,
            word_score: 0.0,
            history_prune_interval: 16,
            merge: MergeRule::Max,
        }
    }
}

impl DecoderConfig {
    /// Every pruning rule off.
    pub fn exhaustive(beam_size: usize, token_count: usize) -> Self {
        Self {
            beam_size,
            top_k: token_count,
            blank_threshold: 1.0,
            history_prune_interval: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.top_k == 0 {
            return Err(Error::Config("beam_size and top_k must be at least 1".into()));
        }
        if !(self.blank_threshold > 0.0 && self.blank_threshold <= 1.0) {
            return Err(Error::Config("blank_threshold must be in (0, 1]".into()));
        }
        if !self.lm_weight.is_finite() || !self.word_score.is_finite() {
            return Err(Error::Config("lm_weight and word_score must be finite".into()));
        }
        Ok(())
    }
}

/// A recognized word and the emission frame at which it was completed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub frame: usize,
}

/// What a consumer sees after a chunk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialTranscript {
    /// Words finalized by this chunk; never revised later.
    pub newly_finalized: Vec<Word>,
    pub finalized_count: usize,
    /// Current best continuation after the finalized prefix; may change.
    pub tentative: Vec<Word>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub words: Vec<Word>,
    pub score: f64,
    pub acoustic: f64,
    pub lm: f64,
}

impl Transcript {
    pub fn text(&self) -> String {
        let words: Vec<&str> = self.words.iter().map(|w| w.text.as_str()).collect();
        words.join(" ")
    }
}

/// Score components of one hypothesis, for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypScore {
    pub acoustic: f64,
    pub lm: f64,
    pub words: usize,
    pub total: f64,
}

#[derive(Debug)]
struct WordNode {
    word: u32,
    frame: usize,
    prev: Option<Arc<WordNode>>,
}

impl Drop for WordNode {
    // iterative, so dropping a long history cannot overflow the stack
    fn drop(&mut self) {
        let mut prev = self.prev.take();
        while let Some(node) = prev {
            match Arc::try_unwrap(node) {
                Ok(mut inner) => prev = inner.prev.take(),
                Err(_) => break,
            }
        }
    }
}

/// Oldest first.
fn history_vec(mut node: &Option<Arc<WordNode>>) -> Vec<(u32, usize)> {
    let mut out = Vec::new();
    while let Some(n) = node {
        out.push((n.word, n.frame));
        node = &n.prev;
    }
    out.reverse();
    out
}

#[derive(Debug, Clone)]
struct Hyp {
    node: u32,
    last: u32,
    lm_state: LmState,
    acoustic: f64,
    lm: f64,
    words: usize,
    total: f64,
    history: Option<Arc<WordNode>>,
}

type Key = (u32, u32, LmState);

impl Hyp {
    fn key(&self) -> Key {
        (self.node, self.last, self.lm_state)
    }

    fn rescore(&mut self, cfg: &DecoderConfig) {
        self.total = self.acoustic + cfg.lm_weight * self.lm + cfg.word_score * self.words as f64;
    }
}

/// Higher total first; ties go to the shorter word history, then the
/// lexicographically smaller one.
fn rank(a: &Hyp, a_total: f64, b: &Hyp, b_total: f64) -> Ordering {
    b_total
        .total_cmp(&a_total)
        .then(a.words.cmp(&b.words))
        .then_with(|| {
            let ha: Vec<u32> = history_vec(&a.history).iter().map(|w| w.0).collect();
            let hb: Vec<u32> = history_vec(&b.history).iter().map(|w| w.0).collect();
            ha.cmp(&hb)
        })
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Per-stream search state.
#[derive(Debug, Clone)]
pub struct DecoderState {
    config: DecoderConfig,
    beam: Vec<Hyp>,
    finalized: Vec<Word>,
    frame: usize,
    chunks: usize,
}

impl DecoderState {
    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    /// Emission frames consumed so far.
    pub fn frame(&self) -> usize {
        self.frame
    }

    /// Non-empty chunks consumed so far.
    pub fn chunks(&self) -> usize {
        self.chunks
    }

    pub fn finalized(&self) -> &[Word] {
        &self.finalized
    }

    pub fn beam_len(&self) -> usize {
        self.beam.len()
    }

    pub fn scores(&self) -> Vec<HypScore> {
        self.beam
            .iter()
            .map(|h| HypScore {
                acoustic: h.acoustic,
                lm: h.lm,
                words: h.words,
                total: h.total,
            })
            .collect()
    }

    /// Longest word history held by any hypothesis.
    pub fn max_history_len(&self) -> usize {
        self.beam.iter().map(|h| history_vec(&h.history).len()).max().unwrap_or(0)
    }

    /// Search memory: the beam and every history node it references. The
    /// finalized output is not counted.
    pub fn heap_bytes(&self) -> usize {
        let mut seen = HashSet::new();
        for h in &self.beam {
            let mut node = &h.history;
            while let Some(n) = node {
                if !seen.insert(Arc::as_ptr(n)) {
                    break;
                }
                node = &n.prev;
            }
        }
        self.beam.capacity() * std::mem::size_of::<Hyp>()
            + seen.len() * (std::mem::size_of::<WordNode>() + 2 * std::mem::size_of::<usize>())
    }
}

/// Indices of the `k` highest scores, best first, ties to the lower index;
/// `blank` is appended if it did not make the cut.
pub fn acoustic_prune(row: &[f32], k: usize, blank: usize) -> Vec<usize> {
    let by_score = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..row.len()).collect();
    let k = k.min(row.len());
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, by_score);
        idx.truncate(k);
    }
    idx.sort_by(by_score);
    if !idx.contains(&blank) {
        idx.push(blank);
    }
    idx
}

/// Shared, immutable decoding resources.
#[derive(Debug)]
pub struct Decoder {
    tokens: TokenSet,
    lexicon: Lexicon,
    lm: Option<NgramLm>,
    lm_words: Vec<LmWord>,
    config: DecoderConfig,
}

impl Decoder {
    pub fn new(tokens: TokenSet, lexicon: Lexicon, lm: Option<NgramLm>, config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let lm_words = lexicon
            .words()
            .iter()
            .map(|w| lm.as_ref().map_or(LmWord::Unknown, |lm| lm.word(w)))
            .collect();
        Ok(Self {
            tokens,
            lexicon,
            lm,
            lm_words,
            config,
        })
    }

    pub fn tokens(&self) -> &TokenSet {
        &self.tokens
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn lm(&self) -> Option<&NgramLm> {
        self.lm.as_ref()
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn start(&self) -> DecoderState {
        self.start_with(self.config.clone()).expect("default config validated")
    }

    pub fn start_with(&self, config: DecoderConfig) -> Result<DecoderState> {
        config.validate()?;
        let mut init = Hyp {
            node: ROOT,
            last: self.tokens.blank() as u32,
            lm_state: self.lm.as_ref().map_or(LmState::EMPTY, NgramLm::start),
            acoustic: 0.0,
            lm: 0.0,
            words: 0,
            total: 0.0,
            history: None,
        };
        init.rescore(&config);
        Ok(DecoderState {
            config,
            beam: vec![init],
            finalized: Vec::new(),
            frame: 0,
            chunks: 0,
        })
    }

    fn lm_score(&self, state: LmState, word: u32) -> (f64, LmState) {
        match &self.lm {
            Some(lm) => lm.score(state, self.lm_words[word as usize]),
            None => (0.0, LmState::EMPTY),
        }
    }

    fn lm_finish(&self, state: LmState) -> f64 {
        self.lm.as_ref().map_or(0.0, |lm| lm.finish(state))
    }

    /// Extends the beam by the given rows. An empty chunk changes nothing.
    pub fn decode_chunk(&self, state: &mut DecoderState, emissions: &EmissionMatrix) -> Result<PartialTranscript> {
        if emissions.token_count() != self.tokens.len() {
            return Err(Error::Input(format!(
                "emissions have {} columns for {} tokens",
                emissions.token_count(),
                self.tokens.len()
            )));
        }
        if emissions.is_empty() {
            return Ok(self.partial(state, state.finalized.len()));
        }
        if emissions.first_frame != state.frame {
            return Err(Error::Input(format!(
                "emissions start at frame {}, decoder is at frame {}",
                emissions.first_frame, state.frame
            )));
        }
        if let Some(v) = emissions.logprobs.as_slice().iter().find(|v| v.is_nan()) {
            return Err(Error::Input(format!("emission value {v}")));
        }
        for r in 0..emissions.rows() {
            self.step(state, emissions.row(r));
            state.frame += 1;
        }
        state.chunks += 1;
        let before = state.finalized.len();
        let h = state.config.history_prune_interval;
        if h > 0 && state.chunks.is_multiple_of(h) {
            self.prune_history(state);
        }
        Ok(self.partial(state, before))
    }

    fn partial(&self, state: &DecoderState, before: usize) -> PartialTranscript {
        PartialTranscript {
            newly_finalized: state.finalized[before..].to_vec(),
            finalized_count: state.finalized.len(),
            tentative: self.words(&state.beam[0].history),
        }
    }

    fn words(&self, history: &Option<Arc<WordNode>>) -> Vec<Word> {
        history_vec(history)
            .into_iter()
            .map(|(w, frame)| Word {
                text: self.lexicon.word(w).to_string(),
                frame,
            })
            .collect()
    }

    fn step(&self, state: &mut DecoderState, row: &[f32]) {
        let cfg = &state.config;
        let blank = self.tokens.blank();
        let candidates = if (row[blank] as f64).exp() > cfg.blank_threshold {
            vec![blank]
        } else {
            acoustic_prune(row, cfg.top_k, blank)
        };
        let mut next: Vec<Hyp> = Vec::with_capacity(state.beam.len() * 2);
        let mut index: HashMap<Key, usize> = HashMap::with_capacity(state.beam.len() * 2);
        let mut push = |mut h: Hyp| {
            h.rescore(cfg);
            match index.entry(h.key()) {
                Entry::Vacant(v) => {
                    v.insert(next.len());
                    next.push(h);
                }
                Entry::Occupied(o) => {
                    let cur = &mut next[*o.get()];
                    let merged_total = match cfg.merge {
                        MergeRule::Max => None,
                        MergeRule::LogSumExp => Some(log_add(cur.total, h.total)),
                    };
                    if rank(&h, h.total, cur, cur.total) == Ordering::Less {
                        *cur = h;
                    }
                    if let Some(t) = merged_total {
                        cur.acoustic += t - cur.total;
                        cur.rescore(cfg);
                    }
                }
            }
        };
        for hyp in &state.beam {
            for &k in &candidates {
                let lp = row[k] as f64;
                let tok = k as u32;
                if k == blank || tok == hyp.last {
                    push(Hyp {
                        last: tok,
                        acoustic: hyp.acoustic + lp,
                        ..hyp.clone()
                    });
                    continue;
                }
                let Some(child) = self.lexicon.child(hyp.node, k) else {
                    continue;
                };
                let node = self.lexicon.node(child);
                if !node.children.is_empty() {
                    push(Hyp {
                        node: child,
                        last: tok,
                        acoustic: hyp.acoustic + lp,
                        ..hyp.clone()
                    });
                }
                for &w in &node.words {
                    let (s, lm_state) = self.lm_score(hyp.lm_state, w);
                    push(Hyp {
                        node: ROOT,
                        last: tok,
                        lm_state,
                        acoustic: hyp.acoustic + lp,
                        lm: hyp.lm + s,
                        words: hyp.words + 1,
                        total: 0.0,
                        history: Some(Arc::new(WordNode {
                            word: w,
                            frame: state.frame,
                            prev: hyp.history.clone(),
                        })),
                    });
                }
            }
        }
        next.sort_by(|a, b| {
            rank(a, a.total, b, b.total)
                .then(a.node.cmp(&b.node))
                .then(a.last.cmp(&b.last))
                .then(a.lm_state.cmp(&b.lm_state))
        });
        next.truncate(cfg.beam_size);
        state.beam = next;
        if state.beam.is_empty() {
            // every path died (a frame with -inf everywhere); keep the stream alive
            let mut dead = self.start_with(state.config.clone()).expect("validated").beam.remove(0);
            dead.acoustic = f64::NEG_INFINITY;
            dead.rescore(&state.config);
            state.beam.push(dead);
        }
    }

    /// Moves the longest word prefix shared by every hypothesis into the
    /// finalized buffer and drops it from the per-hypothesis histories.
    /// Scores are untouched.
    pub fn prune_history(&self, state: &mut DecoderState) {
        let seqs: Vec<Vec<(u32, usize)>> = state.beam.iter().map(|h| history_vec(&h.history)).collect();
        let Some(first) = seqs.first() else {
            return;
        };
        let common = seqs.iter().skip(1).fold(first.len(), |n, s| {
            n.min(s.len()).min(
                first
                    .iter()
                    .zip(s)
                    .position(|(a, b)| a.0 != b.0)
                    .unwrap_or(usize::MAX),
            )
        });
        if common == 0 {
            return;
        }
        for &(w, frame) in &first[..common] {
            state.finalized.push(Word {
                text: self.lexicon.word(w).to_string(),
                frame,
            });
        }
        // rebuild the kept suffixes, preserving sharing between hypotheses
        let mut rebuilt: HashMap<*const WordNode, Arc<WordNode>> = HashMap::new();
        for (hyp, seq) in state.beam.iter_mut().zip(&seqs) {
            let mut chain = Vec::new();
            let mut node = &hyp.history;
            let mut depth = seq.len();
            let mut base = None;
            while let Some(n) = node {
                if depth <= common {
                    break;
                }
                if let Some(done) = rebuilt.get(&Arc::as_ptr(n)) {
                    base = Some(done.clone());
                    break;
                }
                chain.push(n.clone());
                node = &n.prev;
                depth -= 1;
            }
            let mut prev = base;
            for old in chain.into_iter().rev() {
                let fresh = Arc::new(WordNode {
                    word: old.word,
                    frame: old.frame,
                    prev,
                });
                rebuilt.insert(Arc::as_ptr(&old), fresh.clone());
                prev = Some(fresh);
            }
            hyp.history = prev;
        }
    }

    /// Best complete transcript so far, with the end-of-sentence LM score.
    /// Only hypotheses at a word boundary qualify; if none is, the best
    /// hypothesis is used with its unfinished word dropped. Does not modify
    /// the state, so calling it twice gives the same answer.
    pub fn finalize(&self, state: &DecoderState) -> Transcript {
        let cfg = &state.config;
        let end_total = |h: &Hyp| h.total + cfg.lm_weight * self.lm_finish(h.lm_state);
        let pool: Vec<&Hyp> = {
            let at_root: Vec<&Hyp> = state.beam.iter().filter(|h| h.node == ROOT).collect();
            if at_root.is_empty() {
                state.beam.iter().collect()
            } else {
                at_root
            }
        };
        let best = pool
            .into_iter()
            .min_by(|a, b| rank(a, end_total(a), b, end_total(b)))
            .expect("beam is never empty");
        let mut words = state.finalized.clone();
        words.extend(self.words(&best.history));
        let lm = best.lm + self.lm_finish(best.lm_state);
        Transcript {
            words,
            score: end_total(best),
            acoustic: best.acoustic,
            lm,
        }
    }
}
