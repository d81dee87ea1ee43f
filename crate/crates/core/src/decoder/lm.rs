//! ARPA n-gram language model with back-off lookup.
//!
//! Log probabilities are stored in natural log. A state is the longest
//! suffix of the word history (at most `order - 1` words) that exists as an
//! n-gram, so two histories with equal states score every continuation
//! identically.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const LN_10: f64 = std::f64::consts::LN_10;
/// Log10 probability used for words outside the vocabulary when the model
/// has no `<unk>`.
pub const UNKNOWN_LOG10: f64 = -99.0;

/// Context handle; 0 is the empty context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LmState(u32);

impl LmState {
    pub const EMPTY: LmState = LmState(0);
}

/// A word as the LM sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmWord {
    Known(u32),
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    logprob: f64,
    backoff: f64,
    order: usize,
    /// Longest proper suffix that is itself an entry.
    suffix: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm {
    order: usize,
    vocab: HashMap<String, u32>,
    entries: Vec<Entry>,
    /// `(context entry, word) -> entry`.
    children: HashMap<(u32, u32), u32>,
    unk: Option<u32>,
    bos: Option<u32>,
    eos: Option<u32>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::format("ARPA file", detail)
}

impl NgramLm {
    pub fn parse(text: &str) -> Result<Self> {
        let mut counts: Vec<usize> = Vec::new();
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
        // header
        loop {
            let Some((_, line)) = lines.next() else {
                return Err(bad("missing \\data\\ section"));
            };
            if line == "\\data\\" {
                break;
            }
        }
        let mut section = None;
        for (n, line) in lines.by_ref() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("ngram ") {
                let (k, c) = rest
                    .split_once('=')
                    .ok_or_else(|| bad(format!("line {n}: bad count line")))?;
                let k: usize = k.trim().parse().map_err(|_| bad(format!("line {n}: bad order")))?;
                let c: usize = c.trim().parse().map_err(|_| bad(format!("line {n}: bad count")))?;
                if k != counts.len() + 1 {
                    return Err(bad(format!("line {n}: orders must be listed from 1")));
                }
                counts.push(c);
            } else {
                section = Some((n, line));
                break;
            }
        }
        if counts.is_empty() {
            return Err(bad("no ngram counts"));
        }
        let order = counts.len();
        let mut lm = Self {
            order,
            vocab: HashMap::new(),
            entries: vec![Entry {
                logprob: 0.0,
                backoff: 0.0,
                order: 0,
                suffix: 0,
            }],
            children: HashMap::new(),
            unk: None,
            bos: None,
            eos: None,
        };
        // ids of each n-gram by word tuple, for prefix/suffix links
        let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut k = 0;
        let mut seen = 0;
        let mut pending = section;
        loop {
            let Some((n, line)) = pending.take().or_else(|| lines.next()) else {
                return Err(bad("missing \\end\\"));
            };
            if line.is_empty() {
                continue;
            }
            if line == "\\end\\" {
                if k > 0 && seen != counts[k - 1] {
                    return Err(bad(format!("{k}-grams: declared {}, found {seen}", counts[k - 1])));
                }
                if k != order {
                    return Err(bad(format!("found {k} of {order} sections")));
                }
                break;
            }
            if line.starts_with('\\') {
                if k > 0 && seen != counts[k - 1] {
                    return Err(bad(format!("{k}-grams: declared {}, found {seen}", counts[k - 1])));
                }
                let want = format!("\\{}-grams:", k + 1);
                if line != want {
                    return Err(bad(format!("line {n}: expected {want}, got {line}")));
                }
                k += 1;
                seen = 0;
                continue;
            }
            if k == 0 {
                return Err(bad(format!("line {n}: n-gram outside a section")));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != k + 1 && fields.len() != k + 2 {
                return Err(bad(format!("line {n}: expected {k} words")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| bad(format!("line {n}: bad number {s:?}")))
            };
            let logprob = parse(fields[0])? * LN_10;
            let backoff = if fields.len() == k + 2 { parse(fields[k + 1])? * LN_10 } else { 0.0 };
            let mut words = Vec::with_capacity(k);
            for w in &fields[1..=k] {
                let id = if k == 1 {
                    let next = lm.vocab.len() as u32;
                    *lm.vocab.entry(w.to_string()).or_insert(next)
                } else {
                    *lm.vocab
                        .get(*w)
                        .ok_or_else(|| bad(format!("line {n}: {w:?} has no unigram")))?
                };
                words.push(id);
            }
            let parent = if k == 1 {
                0
            } else {
                *ids.get(&words[..k - 1])
                    .ok_or_else(|| bad(format!("line {n}: context of {line:?} is not listed")))?
            };
            let suffix = (1..k)
                .find_map(|s| ids.get(&words[s..]).copied())
                .unwrap_or(0);
            let id = lm.entries.len() as u32;
            if ids.insert(words.clone(), id).is_some() {
                return Err(bad(format!("line {n}: duplicate n-gram")));
            }
            lm.entries.push(Entry {
                logprob,
                backoff,
                order: k,
                suffix,
            });
            lm.children.insert((parent, words[k - 1]), id);
            seen += 1;
        }
        lm.unk = lm.vocab.get("<unk>").copied();
        lm.bos = lm.vocab.get("<s>").copied();
        lm.eos = lm.vocab.get("</s>").copied();
        Ok(lm)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn word(&self, text: &str) -> LmWord {
        match self.vocab.get(text) {
            Some(&id) => LmWord::Known(id),
            None => LmWord::Unknown,
        }
    }

    /// State after `<s>`, or the empty context without one.
    pub fn start(&self) -> LmState {
        match self.bos {
            Some(b) => self.children.get(&(0, b)).map_or(LmState::EMPTY, |&e| self.trim(e)),
            None => LmState::EMPTY,
        }
    }

    fn trim(&self, mut e: u32) -> LmState {
        while self.entries[e as usize].order >= self.order {
            e = self.entries[e as usize].suffix;
        }
        LmState(e)
    }

    /// Natural-log probability of `word` after `state`, and the next state.
    pub fn score(&self, state: LmState, word: LmWord) -> (f64, LmState) {
        let w = match (word, self.unk) {
            (LmWord::Known(w), _) => w,
            (LmWord::Unknown, Some(u)) => u,
            (LmWord::Unknown, None) => return (UNKNOWN_LOG10 * LN_10, LmState::EMPTY),
        };
        let mut ctx = state.0;
        let mut backoff = 0.0;
        loop {
            if let Some(&e) = self.children.get(&(ctx, w)) {
                return (backoff + self.entries[e as usize].logprob, self.trim(e));
            }
            if ctx == 0 {
                return (backoff + UNKNOWN_LOG10 * LN_10, LmState::EMPTY);
            }
            backoff += self.entries[ctx as usize].backoff;
            ctx = self.entries[ctx as usize].suffix;
        }
    }

    /// Score of `</s>` after `state`; zero if the model has no `</s>`.
    pub fn finish(&self, state: LmState) -> f64 {
        match self.eos {
            Some(e) => self.score(state, LmWord::Known(e)).0,
            None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ARPA: &str = "\
\\data\\
ngram 1=5
ngram 2=4

\\1-grams:
-1.0 <s> -0.5
-0.7 </s>
-0.6 a -0.3
-0.9 b -0.2
-2.0 <unk>

\\2-grams:
-0.2 <s> a
-0.4 a b
-0.3 b </s>
-0.1 b a

\\end\\
";

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn bigram_and_backoff_by_hand() {
        let lm = NgramLm::parse(ARPA).unwrap();
        assert_eq!(lm.order(), 2);
        let s0 = lm.start();
        let a = lm.word("a");
        let b = lm.word("b");
        let (p, s1) = lm.score(s0, a);
        assert!(close(p, -0.2 * LN_10));
        let (p, s2) = lm.score(s1, b);
        assert!(close(p, -0.4 * LN_10));
        // b -> b is absent: backoff(b) + p(b)
        let (p, _) = lm.score(s2, b);
        assert!(close(p, (-0.2 - 0.9) * LN_10));
        assert!(close(lm.finish(s2), -0.3 * LN_10));
        // a -> </s> absent
        assert!(close(lm.finish(s1), (-0.3 - 0.7) * LN_10));
        // unknown maps to <unk> after backing off
        let (p, s) = lm.score(s1, lm.word("zzz"));
        assert!(close(p, (-0.3 - 2.0) * LN_10));
        assert_eq!(s, lm.score(s0, lm.word("<unk>")).1);
    }

    #[test]
    fn equal_states_for_equal_contexts() {
        let lm = NgramLm::parse(ARPA).unwrap();
        let (_, via_a) = lm.score(lm.start(), lm.word("b"));
        let (_, via_b) = lm.score(lm.score(lm.start(), lm.word("a")).1, lm.word("b"));
        assert_eq!(via_a, via_b);
    }

    #[test]
    fn unknown_without_unk_uses_floor() {
        let text = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5 a\n\n\\end\\\n";
        let lm = NgramLm::parse(text).unwrap();
        assert!(close(lm.score(lm.start(), lm.word("q")).0, -99.0 * LN_10));
        assert_eq!(lm.finish(lm.start()), 0.0);
    }

    #[test]
    fn rejects_malformed() {
        assert!(NgramLm::parse("nothing").is_err());
        assert!(NgramLm::parse(&ARPA.replace("ngram 2=4", "ngram 2=5")).is_err());
        assert!(NgramLm::parse(&ARPA.replace("-0.4 a b", "-0.4 a c")).is_err());
        assert!(NgramLm::parse(&ARPA.replace("\\end\\", "")).is_err());
        assert!(NgramLm::parse(&ARPA.replace("-0.6 a", "x a")).is_err());
    }
}
