#![allow(dead_code)]

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tdstream::decoder::{Decoder, DecoderConfig, Lexicon, NgramLm, TokenSet};
use tdstream::model::{EmissionMatrix, LayerSpec, Model, ModelSpec, TdsBlockSpec};
use tdstream::nn::{ConvSpec, GroupWeights, Matrix};

const LN_10: f64 = std::f64::consts::LN_10;

/// A random decoding problem small enough to enumerate.
pub struct Instance {
    pub n_tokens: usize,
    pub emissions: Matrix,
    pub words: Vec<(String, Vec<usize>)>,
    pub arpa: String,
    /// log10 unigram (prob, backoff) and bigram prob, for the oracle.
    pub unigrams: HashMap<String, (f64, f64)>,
    pub bigrams: HashMap<(String, String), f64>,
    pub lm_weight: f64,
    pub word_score: f64,
}

impl Instance {
    pub fn random(seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let n_tokens = rng.gen_range(2..=5);
        let frames = rng.gen_range(1..=10);
        let mut data = Vec::with_capacity(frames * n_tokens);
        for _ in 0..frames {
            let logits: Vec<f64> = (0..n_tokens).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let max = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
            data.extend(logits.iter().map(|l| (l - z) as f32));
        }
        let emissions = Matrix::from_vec(frames, n_tokens, data).unwrap();

        let n_words = rng.gen_range(1..=6);
        let words: Vec<(String, Vec<usize>)> = (0..n_words)
            .map(|i| {
                let len = rng.gen_range(1..=3);
                (format!("w{i}"), (0..len).map(|_| rng.gen_range(1..n_tokens)).collect())
            })
            .collect();

        // vocabulary: sentence markers, <unk>, and most lexicon words
        let mut vocab = vec!["<s>".to_string(), "</s>".to_string(), "<unk>".to_string()];
        for (w, _) in &words {
            if rng.gen_bool(0.85) {
                vocab.push(w.clone());
            }
        }
        let mut unigrams = HashMap::new();
        for w in &vocab {
            let p = rng.gen_range(-3.0..-0.1f64);
            let bo = if w == "</s>" { 0.0 } else { rng.gen_range(-1.0..0.0f64) };
            unigrams.insert(w.clone(), (round4(p), round4(bo)));
        }
        let mut bigrams = HashMap::new();
        for v in vocab.iter().filter(|v| *v != "</s>") {
            for w in vocab.iter().filter(|w| *w != "<s>") {
                if rng.gen_bool(0.5) {
                    bigrams.insert((v.clone(), w.clone()), round4(rng.gen_range(-2.0..-0.05f64)));
                }
            }
        }
        let mut arpa = format!(
            "\\data\\\nngram 1={}\nngram 2={}\n\n\\1-grams:\n",
            vocab.len(),
            bigrams.len()
        );
        for w in &vocab {
            let (p, bo) = unigrams[w];
            arpa.push_str(&format!("{p} {w} {bo}\n"));
        }
        arpa.push_str("\n\\2-grams:\n");
        let mut pairs: Vec<_> = bigrams.iter().collect();
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        for ((v, w), p) in pairs {
            arpa.push_str(&format!("{p} {v} {w}\n"));
        }
        arpa.push_str("\n\\end\\\n");

        Self {
            n_tokens,
            emissions,
            words,
            arpa,
            unigrams,
            bigrams,
            lm_weight: rng.gen_range(0.0..2.0),
            word_score: rng.gen_range(-1.0..1.0),
        }
    }

    pub fn token_set(&self) -> TokenSet {
        let toks = (0..self.n_tokens).map(|i| format!("t{i}")).collect();
        TokenSet::new(toks, "t0", None).unwrap()
    }

    pub fn decoder(&self, config: DecoderConfig) -> Decoder {
        let tokens = self.token_set();
        let lexicon = Lexicon::new(self.words.clone(), &tokens).unwrap();
        let lm = NgramLm::parse(&self.arpa).unwrap();
        let config = DecoderConfig {
            lm_weight: self.lm_weight,
            word_score: self.word_score,
            ..config
        };
        Decoder::new(tokens, lexicon, Some(lm), config).unwrap()
    }

    pub fn emission_matrix(&self) -> EmissionMatrix {
        EmissionMatrix::new(self.emissions.clone(), 0, 80)
    }

    /// Natural-log bigram probability with back-off, straight from the
    /// generated tables.
    fn lm_prob(&self, prev: &str, word: &str) -> f64 {
        let known = |w: &str| if self.unigrams.contains_key(w) { w.to_string() } else { "<unk>".to_string() };
        let (v, w) = (known(prev), known(word));
        let log10 = match self.bigrams.get(&(v.clone(), w.clone())) {
            Some(p) => *p,
            None => self.unigrams[&v].1 + self.unigrams[&w].0,
        };
        log10 * LN_10
    }

    /// Exhaustive search: every alignment, every segmentation of its
    /// collapse into lexicon words. Returns the best score and all word
    /// sequences ranked by score.
    pub fn oracle(&self) -> Vec<(f64, Vec<String>)> {
        let t_max = self.emissions.rows();
        let mut best_acoustic: HashMap<Vec<u8>, f64> = HashMap::new();
        let mut collapsed = Vec::new();
        self.enumerate(0, 0, 0.0, &mut collapsed, &mut best_acoustic, t_max);

        let mut results: HashMap<Vec<String>, f64> = HashMap::new();
        for (seq, acoustic) in &best_acoustic {
            let mut segs = Vec::new();
            self.segment(seq, &mut Vec::new(), &mut segs);
            for words in segs {
                let mut lm = 0.0;
                let mut prev = "<s>".to_string();
                for w in &words {
                    lm += self.lm_prob(&prev, w);
                    prev = w.clone();
                }
                lm += self.lm_prob(&prev, "</s>");
                let total = acoustic + self.lm_weight * lm + self.word_score * words.len() as f64;
                let e = results.entry(words).or_insert(f64::NEG_INFINITY);
                *e = e.max(total);
            }
        }
        let mut ranked: Vec<(f64, Vec<String>)> = results.into_iter().map(|(w, s)| (s, w)).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        ranked
    }

    fn enumerate(
        &self,
        t: usize,
        last: usize,
        acc: f64,
        collapsed: &mut Vec<u8>,
        best: &mut HashMap<Vec<u8>, f64>,
        t_max: usize,
    ) {
        if t == t_max {
            let e = best.entry(collapsed.clone()).or_insert(f64::NEG_INFINITY);
            *e = e.max(acc);
            return;
        }
        let row = self.emissions.row(t);
        for (k, &p) in row.iter().enumerate().take(self.n_tokens) {
            let acc = acc + p as f64;
            // token 0 is blank; a repeat without blank in between collapses
            let emits = k != 0 && !(t > 0 && k == last);
            if emits {
                collapsed.push(k as u8);
            }
            self.enumerate(t + 1, k, acc, collapsed, best, t_max);
            if emits {
                collapsed.pop();
            }
        }
    }

    fn segment(&self, rest: &[u8], prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for (w, spelling) in &self.words {
            if rest.len() >= spelling.len() && spelling.iter().zip(rest).all(|(a, b)| *a == *b as usize) {
                prefix.push(w.clone());
                self.segment(&rest[spelling.len()..], prefix, out);
                prefix.pop();
            }
        }
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// A random stack of convs, ReLUs, layer norms and TDS blocks over a few
/// features, ending in a linear layer.
pub fn random_spec(rng: &mut StdRng) -> ModelSpec {
    let w = rng.gen_range(1..=3);
    let mut c = 1;
    let mut layers = Vec::new();
    let shared = |rng: &mut StdRng| {
        if rng.gen_bool(0.5) {
            GroupWeights::Shared
        } else {
            GroupWeights::Independent
        }
    };
    for _ in 0..rng.gen_range(1..=3) {
        if rng.gen_bool(0.8) {
            let kw = rng.gen_range(1..=5);
            let dw = rng.gen_range(1..=kw.min(3));
            let rp = rng.gen_range(0..=kw - dw);
            let c_out = rng.gen_range(1..=3);
            let g = shared(rng);
            layers.push(LayerSpec::Conv(
                ConvSpec::asymmetric(w * c, w * c_out, kw, dw, w, rp).unwrap().with_group_weights(g),
            ));
            c = c_out;
            if rng.gen_bool(0.7) {
                layers.push(LayerSpec::Relu);
            }
            if rng.gen_bool(0.7) {
                layers.push(LayerSpec::LayerNorm);
            }
        }
        for _ in 0..rng.gen_range(0..=2) {
            let kw = rng.gen_range(1..=5);
            let g = shared(rng);
            layers.push(LayerSpec::Tds(
                TdsBlockSpec::new(c, kw, w, rng.gen_range(0..kw)).with_group_weights(g),
            ));
        }
    }
    let token_count = rng.gen_range(2..=6);
    layers.push(LayerSpec::Linear {
        in_dim: w * c,
        out_dim: token_count,
    });
    let spec = ModelSpec {
        input_dim: w,
        token_count,
        frame_ms: 10,
        layers,
    };
    spec.validate().unwrap();
    spec
}

pub fn random_features(rng: &mut StdRng, frames: usize, dim: usize) -> Matrix {
    let data = (0..frames * dim).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
    Matrix::from_vec(frames, dim, data).unwrap()
}

/// Random chunk sizes, zeros included, covering `frames`.
pub fn random_partition(rng: &mut StdRng, frames: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = frames;
    while left > 0 {
        let n = rng.gen_range(0..=left.min(9));
        sizes.push(n);
        left -= n;
    }
    sizes
}

/// Emissions from feeding `features` in pieces of `sizes` rows, then
/// flushing.
pub fn streamed(model: &Model, features: &Matrix, sizes: &[usize]) -> Matrix {
    let mut st = model.start();
    let mut out = Matrix::empty(model.spec().token_count);
    let mut at = 0;
    for &n in sizes {
        let e = model.forward_chunk(&mut st, &features.slice_rows(at, at + n)).unwrap();
        assert_eq!(e.first_frame, out.rows());
        out.append(&e.logprobs).unwrap();
        at += n;
    }
    out.append(&model.finish(&mut st).unwrap().logprobs).unwrap();
    out
}
