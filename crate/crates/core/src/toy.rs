//! Seeded toy assets: a small random-weight model with a matching token
//! set, lexicon and bigram LM, plus synthetic audio. Nothing here is
//! trained; the point is a complete, deterministic pipeline.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::decoder::{Decoder, DecoderConfig, Lexicon, NgramLm, TokenSet};
use crate::engine::{Engine, EngineConfig};
use crate::error::Result;
use crate::model::{file, init_weights, Model, ModelSpec};

pub struct ToyAssets {
    pub model: Model,
    pub tokens: TokenSet,
    pub lexicon: Lexicon,
    pub arpa: String,
}

/// Letters `a..z` plus blank `_`.
pub fn letter_tokens() -> TokenSet {
    let mut toks = vec!["_".to_string()];
    toks.extend((b'a'..=b'z').map(|c| (c as char).to_string()));
    TokenSet::new(toks, "_", None).expect("letter set is valid")
}

/// Random-weight model over `spec`, with the output layer scaled by
/// `output_gain` so posteriors are less flat.
pub fn random_model(spec: ModelSpec, seed: u64, output_gain: f32) -> Result<Model> {
    let mut tensors = init_weights(&spec, seed)?;
    let n = tensors.len();
    for t in &mut tensors[n.saturating_sub(2)..] {
        t.data.iter_mut().for_each(|v| *v *= output_gain);
    }
    Model::new(spec, tensors)
}

pub fn toy_assets(spec: ModelSpec, seed: u64, n_words: usize) -> Result<ToyAssets> {
    let mut rng = StdRng::seed_from_u64(seed);
    let tokens = letter_tokens();
    let mut spellings = BTreeSet::new();
    while spellings.len() < n_words {
        let len = rng.gen_range(1..=3);
        let w: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        spellings.insert(w);
    }
    let words: Vec<String> = spellings.into_iter().collect();
    let entries = words
        .iter()
        .map(|w| {
            let ids = w.chars().map(|c| tokens.index_of(&c.to_string()).expect("letter")).collect();
            (w.clone(), ids)
        })
        .collect::<Vec<_>>();
    let lexicon = Lexicon::new(entries, &tokens)?;
    let arpa = random_bigram_arpa(&words, &mut rng);
    let model = random_model(spec, seed ^ 0x5eed, 4.0)?;
    Ok(ToyAssets {
        model,
        tokens,
        lexicon,
        arpa,
    })
}

fn random_bigram_arpa(words: &[String], rng: &mut StdRng) -> String {
    let mut vocab = vec!["<s>".to_string(), "</s>".to_string(), "<unk>".to_string()];
    vocab.extend(words.iter().cloned());
    let mut bigrams = Vec::new();
    for v in vocab.iter().filter(|v| *v != "</s>" && *v != "<unk>") {
        for w in vocab.iter().filter(|w| *w != "<s>" && *w != "<unk>") {
            if rng.gen_bool(0.2) {
                bigrams.push(format!("{:.4} {v} {w}", rng.gen_range(-2.0..-0.1)));
            }
        }
    }
    let mut out = format!(
        "\\data\\\nngram 1={}\nngram 2={}\n\n\\1-grams:\n",
        vocab.len(),
        bigrams.len()
    );
    for w in &vocab {
        let p: f64 = rng.gen_range(-3.0..-1.0);
        if w == "</s>" {
            out.push_str(&format!("{p:.4} {w}\n"));
        } else {
            out.push_str(&format!("{p:.4} {w} {:.4}\n", rng.gen_range(-0.8..-0.1)));
        }
    }
    out.push_str("\n\\2-grams:\n");
    for b in bigrams {
        out.push_str(&b);
        out.push('\n');
    }
    out.push_str("\n\\end\\\n");
    out
}

impl ToyAssets {
    pub fn decoder(&self, config: DecoderConfig) -> Result<Decoder> {
        let lm = NgramLm::parse(&self.arpa)?;
        Decoder::new(self.tokens.clone(), self.lexicon.clone(), Some(lm), config)
    }

    /// Engine sharing this model; consumes the assets.
    pub fn into_engine(self, config: EngineConfig) -> Result<Engine> {
        let decoder = self.decoder(config.decoder())?;
        Engine::new(config, Arc::new(self.model), Arc::new(decoder))
    }

    /// Writes `model.tdsm`, `tokens.txt`, `lexicon.txt`, `lm.arpa` and an
    /// `engine.toml` pointing at them.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        file::save(&self.model, dir.join("model.tdsm"))?;
        fs::write(dir.join("tokens.txt"), self.tokens.to_text())?;
        fs::write(dir.join("lexicon.txt"), self.lexicon.to_text(&self.tokens))?;
        fs::write(dir.join("lm.arpa"), &self.arpa)?;
        let config = EngineConfig {
            model: Some("model.tdsm".into()),
            tokens: Some("tokens.txt".into()),
            lexicon: Some("lexicon.txt".into()),
            lm: Some("lm.arpa".into()),
            ..EngineConfig::default()
        };
        fs::write(dir.join("engine.toml"), config.to_toml())?;
        Ok(())
    }
}

/// Piecewise-steady tones with a little noise: segments of 80-400 ms, each
/// a random pitch, some silent.
pub fn synthetic_audio(seed: u64, seconds: f64, sample_rate: u32) -> Vec<f32> {
    let mut rng = StdRng::seed_from_u64(seed);
    let total = (seconds * sample_rate as f64) as usize;
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        let len = (rng.gen_range(0.08..0.4) * sample_rate as f64) as usize;
        let silent = rng.gen_bool(0.2);
        let f1: f32 = rng.gen_range(150.0..3000.0);
        let f2: f32 = rng.gen_range(150.0..6000.0);
        let amp: f32 = if silent { 0.0 } else { rng.gen_range(0.05..0.4) };
        for n in 0..len.min(total - out.len()) {
            let t = n as f32 / sample_rate as f32;
            let tone = (std::f32::consts::TAU * f1 * t).sin() + 0.5 * (std::f32::consts::TAU * f2 * t).sin();
            out.push(amp * tone / 1.5 + rng.gen_range(-0.005..0.005));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assets_are_consistent_and_seeded() {
        let a = toy_assets(ModelSpec::toy(27), 3, 20).unwrap();
        assert_eq!(a.lexicon.word_count(), 20);
        assert_eq!(a.model.spec().token_count, a.tokens.len());
        NgramLm::parse(&a.arpa).unwrap();
        let b = toy_assets(ModelSpec::toy(27), 3, 20).unwrap();
        assert_eq!(a.arpa, b.arpa);
        assert_eq!(a.model.tensors(), b.model.tensors());
    }

    #[test]
    fn audio_is_bounded_and_seeded() {
        let x = synthetic_audio(1, 1.0, 16_000);
        assert_eq!(x.len(), 16_000);
        assert!(x.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(x, synthetic_audio(1, 1.0, 16_000));
    }
}
