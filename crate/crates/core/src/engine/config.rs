use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderConfig, MergeRule};
use crate::error::{Error, Result};
use crate::features::NormalizerConfig;

/// Engine settings. The file form is flat TOML with the same keys as the
/// command-line flags (dashes become underscores); any key may be omitted.
///
/// ```toml
/// chunk_ms = 750
/// workers = 4
/// max_streams = 1024
/// sample_rate = 16000
/// norm_window = 300
/// beam_size = 100
/// topk = 50
/// blank_threshold = 0.95
/// lm_weight = 0.5
/// word_score = 0.0
/// history_prune_interval = 16
/// merge = "max"            # or "log_sum_exp"
/// model = "model.tdsm"
/// tokens = "tokens.txt"
/// lexicon = "lexicon.txt"
/// lm = "lm.arpa"           # optional
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub chunk_ms: u32,
    pub workers: usize,
    pub max_streams: usize,
    pub sample_rate: u32,
    pub norm_window: usize,
    pub beam_size: usize,
    pub topk: usize,
    pub blank_threshold: f64,
    pub lm_weight: f64,
    pub word_score: f64,
    pub history_prune_interval: usize,
    pub merge: MergeRule,
    pub model: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub lm: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let d = DecoderConfig::default();
        Self {
            chunk_ms: 750,
            workers: 1,
            max_streams: 1024,
            sample_rate: 16_000,
            norm_window: NormalizerConfig::default().window,
            beam_size: d.beam_size,
            topk: d.top_k,
            blank_threshold: d.blank_threshold,
            lm_weight: d.lm_weight,
            word_score: d.word_score,
            history_prune_interval: d.history_prune_interval,
            merge: d.merge,
            model: None,
            tokens: None,
            lexicon: None,
            lm: None,
        }
    }
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.model, &mut cfg.tokens, &mut cfg.lexicon, &mut cfg.lm]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            beam_size: self.beam_size,
            top_k: self.topk,
            blank_threshold: self.blank_threshold,
            lm_weight: self.lm_weight,
            word_score: self.word_score,
            history_prune_interval: self.history_prune_interval,
            merge: self.merge,
        }
    }

    pub fn normalizer(&self) -> NormalizerConfig {
        NormalizerConfig {
            window: self.norm_window,
            ..NormalizerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_ms == 0 {
            return Err(Error::Config("chunk_ms must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.max_streams == 0 || self.norm_window == 0 || self.sample_rate == 0 {
            return Err(Error::Config(
                "max_streams, norm_window and sample_rate must be positive".into(),
            ));
        }
        self.decoder().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = EngineConfig::parse("chunk_ms = 250\nmerge = \"log_sum_exp\"\n").unwrap();
        assert_eq!(cfg.chunk_ms, 250);
        assert_eq!(cfg.merge, MergeRule::LogSumExp);
        assert_eq!(cfg.topk, 50);
        assert_eq!(EngineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(EngineConfig::parse("chunk_size = 3\n").is_err());
        assert!(EngineConfig::parse("chunk_ms = 0\n").unwrap().validate().is_err());
        assert!(EngineConfig::parse("workers = 0\n").unwrap().validate().is_err());
        assert!(EngineConfig::parse("blank_threshold = 1.5\n").unwrap().validate().is_err());
    }

    #[test]
    fn paths_resolve_against_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.toml");
        fs::write(&path, "model = \"m.tdsm\"\nlm = \"/abs/lm.arpa\"\n").unwrap();
        let cfg = EngineConfig::load(&path).unwrap();
        assert_eq!(cfg.model.unwrap(), dir.path().join("m.tdsm"));
        assert_eq!(cfg.lm.unwrap(), PathBuf::from("/abs/lm.arpa"));
    }
}
