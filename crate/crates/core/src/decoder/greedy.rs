use super::tokens::TokenSet;
use crate::model::EmissionMatrix;

/// A collapsed token and the global emission frame where it first appeared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedToken {
    pub token: usize,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedWord {
    pub text: String,
    pub first_frame: usize,
    pub last_frame: usize,
    /// `last_frame * stride + future context`: the earliest audio time at
    /// which the model could have produced the word's last token.
    pub end_ms: u64,
}

/// Per-frame argmax (ties to the lower index), then CTC collapse: merge
/// repeats, drop blanks.
pub fn greedy_decode(emissions: &EmissionMatrix, blank: usize) -> Vec<TimedToken> {
    let mut out = Vec::new();
    let mut prev = None;
    for r in 0..emissions.rows() {
        let row = emissions.row(r);
        let best = row
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
        if Some(best) != prev && best != blank {
            out.push(TimedToken {
                token: best,
                frame: emissions.first_frame + r,
            });
        }
        prev = Some(best);
    }
    out
}

/// Groups greedy tokens into words. With a boundary marker, a standalone
/// marker token separates words and a marker prefix starts one; without a
/// marker every token is a word.
pub fn greedy_words(
    tokens: &[TimedToken],
    set: &TokenSet,
    stride_ms: u32,
    future_context_ms: u32,
) -> Vec<TimedWord> {
    let mut words: Vec<TimedWord> = Vec::new();
    let mut open = false;
    for t in tokens {
        let text = set.token(t.token);
        let (starts, piece) = match set.boundary() {
            None => (true, text),
            Some(b) if text == b => {
                open = false;
                continue;
            }
            Some(b) => match text.strip_prefix(b) {
                Some(rest) => (true, rest),
                None => (!open, text),
            },
        };
        if starts {
            words.push(TimedWord {
                text: String::new(),
                first_frame: t.frame,
                last_frame: t.frame,
                end_ms: 0,
            });
        }
        let w = words.last_mut().expect("a word is open");
        w.text.push_str(piece);
        w.last_frame = t.frame;
        open = set.boundary().is_some();
    }
    for w in &mut words {
        w.end_ms = w.last_frame as u64 * stride_ms as u64 + future_context_ms as u64;
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn one_hot(seq: &[usize], n: usize) -> EmissionMatrix {
        let mut m = Matrix::empty(n);
        for &k in seq {
            let mut row = vec![-10.0; n];
            row[k] = 0.0;
            m.push_row(&row).unwrap();
        }
        EmissionMatrix::new(m, 0, 80)
    }

    #[test]
    fn collapse_rule() {
        // a a blank a -> "a a"
        let toks = greedy_decode(&one_hot(&[1, 1, 0, 1], 3), 0);
        assert_eq!(
            toks,
            vec![TimedToken { token: 1, frame: 0 }, TimedToken { token: 1, frame: 3 }]
        );
        assert!(greedy_decode(&one_hot(&[0, 0, 0], 3), 0).is_empty());
    }

    #[test]
    fn words_with_separator_and_prefix() {
        let sep = TokenSet::parse("#blank -\n#boundary |\n-\n|\nh\ni\n").unwrap();
        let toks = greedy_decode(&one_hot(&[2, 3, 0, 1, 3, 0], 4), 0);
        let words = greedy_words(&toks, &sep, 80, 250);
        assert_eq!(words.len(), 2);
        assert_eq!(words[0].text, "hi");
        assert_eq!(words[0].end_ms, 80 + 250);
        assert_eq!(words[1].text, "i");
        assert_eq!(words[1].end_ms, 4 * 80 + 250);

        let prefix = TokenSet::parse("#blank -\n#boundary _\n-\n_h\ni\n_o\n").unwrap();
        let toks = greedy_decode(&one_hot(&[1, 2, 3, 2], 4), 0);
        let texts: Vec<String> = greedy_words(&toks, &prefix, 80, 0).into_iter().map(|w| w.text).collect();
        assert_eq!(texts, ["hi", "oi"]);
    }
}
