use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Processing time over audio duration; at most 1 means real time.
pub fn compute_rtf(processing_s: f64, audio_s: f64) -> Result<f64> {
    if !(processing_s > 0.0 && audio_s > 0.0) {
        return Err(Error::Measurement(format!(
            "RTF needs positive durations, got {processing_s} s over {audio_s} s"
        )));
    }
    Ok(processing_s / audio_s)
}

/// Audio seconds consumed per wall-clock second.
pub fn compute_throughput(audio_s: f64, wall_s: f64) -> Result<f64> {
    if !(wall_s > 0.0 && audio_s >= 0.0) {
        return Err(Error::Measurement(format!(
            "throughput needs positive wall time, got {audio_s} s in {wall_s} s"
        )));
    }
    Ok(audio_s / wall_s)
}

/// A reference word on the audio timeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordAlignment {
    pub word: String,
    pub start_ms: f64,
    pub end_ms: f64,
}

impl WordAlignment {
    pub fn new(word: impl Into<String>, start_ms: f64, end_ms: f64) -> Self {
        Self {
            word: word.into(),
            start_ms,
            end_ms,
        }
    }
}

pub fn validate_alignments(words: &[WordAlignment]) -> Result<()> {
    let mut prev_end = 0.0;
    for w in words {
        if !(w.start_ms >= prev_end && w.start_ms < w.end_ms) {
            return Err(Error::format(
                "alignment",
                format!("word {:?} at {}-{} ms overlaps or is empty", w.word, w.start_ms, w.end_ms),
            ));
        }
        prev_end = w.end_ms;
    }
    Ok(())
}

/// One `word start_ms end_ms` per line; blank lines and `#` comments skipped.
pub fn parse_alignments(text: &str) -> Result<Vec<WordAlignment>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [word, start, end] = fields[..] else {
            return Err(Error::format("alignment", format!("line {}: expected 3 fields", n + 1)));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::format("alignment", format!("line {}: bad time {s:?}", n + 1)))
        };
        out.push(WordAlignment::new(word, num(start)?, num(end)?));
    }
    validate_alignments(&out)?;
    Ok(out)
}

pub fn load_alignments(path: impl AsRef<Path>) -> Result<Vec<WordAlignment>> {
    parse_alignments(&fs::read_to_string(path)?)
}

pub fn alignments_to_text(words: &[WordAlignment]) -> String {
    words
        .iter()
        .map(|w| format!("{} {} {}\n", w.word, w.start_ms, w.end_ms))
        .collect()
}

/// When each word of a stream's transcript became visible, in ms from the
/// start of the stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmissionLog {
    words: Vec<(String, f64)>,
}

impl EmissionLog {
    pub fn new(words: Vec<(String, f64)>) -> Result<Self> {
        if words.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::Measurement("availability times must be non-decreasing".into()));
        }
        Ok(Self { words })
    }

    pub fn words(&self) -> &[(String, f64)] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub mean_ms: f64,
    /// Availability minus reference end, per word in order.
    pub per_word_ms: Vec<f64>,
}

impl LatencyReport {
    /// Pools the words of several streams.
    pub fn pooled(reports: &[LatencyReport]) -> Result<Self> {
        let per_word_ms: Vec<f64> = reports.iter().flat_map(|r| r.per_word_ms.iter().copied()).collect();
        if per_word_ms.is_empty() {
            return Err(Error::Measurement("no words to average".into()));
        }
        let mean_ms = per_word_ms.iter().sum::<f64>() / per_word_ms.len() as f64;
        Ok(Self { mean_ms, per_word_ms })
    }
}

/// Mean delay between each reference word's end and its availability.
/// Refuses unless the emitted words are exactly the reference words.
pub fn user_perceived_latency(reference: &[WordAlignment], log: &EmissionLog) -> Result<LatencyReport> {
    let emitted: Vec<&str> = log.words.iter().map(|(w, _)| w.as_str()).collect();
    let expected: Vec<&str> = reference.iter().map(|w| w.word.as_str()).collect();
    if emitted != expected {
        return Err(Error::Measurement(format!(
            "transcript {emitted:?} does not match reference {expected:?}"
        )));
    }
    let per_word_ms: Vec<f64> = reference
        .iter()
        .zip(&log.words)
        .map(|(r, (_, at))| at - r.end_ms)
        .collect();
    LatencyReport::pooled(&[LatencyReport {
        mean_ms: 0.0,
        per_word_ms,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios() {
        assert_eq!(compute_rtf(2.0, 10.0).unwrap(), 0.2);
        assert_eq!(compute_rtf(10.0, 10.0).unwrap(), 1.0);
        assert_eq!(compute_throughput(40.0, 10.0).unwrap(), 4.0);
        assert!(compute_rtf(0.0, 1.0).is_err());
        assert!(compute_throughput(1.0, 0.0).is_err());
    }

    #[test]
    fn exact_emission_gives_zero() {
        let refs = vec![WordAlignment::new("a", 0.0, 120.0), WordAlignment::new("b", 130.0, 300.0)];
        let log = EmissionLog::new(vec![("a".into(), 120.0), ("b".into(), 300.0)]).unwrap();
        assert_eq!(user_perceived_latency(&refs, &log).unwrap().mean_ms, 0.0);
    }

    #[test]
    fn mismatch_is_refused() {
        let refs = vec![WordAlignment::new("a", 0.0, 120.0)];
        let log = EmissionLog::new(vec![("b".into(), 120.0)]).unwrap();
        assert!(matches!(user_perceived_latency(&refs, &log), Err(Error::Measurement(_))));
        let empty = EmissionLog::default();
        assert!(user_perceived_latency(&[], &empty).is_err());
    }

    #[test]
    fn alignment_text() {
        let a = parse_alignments("# utt\nhow 100 200\nare 300 400\n\nyou 500 600\n").unwrap();
        assert_eq!(a[2], WordAlignment::new("you", 500.0, 600.0));
        assert_eq!(parse_alignments(&alignments_to_text(&a)).unwrap(), a);
        assert!(parse_alignments("a 10 5\n").is_err());
        assert!(parse_alignments("a 0 100\nb 50 150\n").is_err());
        assert!(parse_alignments("a 0\n").is_err());
    }

    #[test]
    fn log_must_be_ordered() {
        assert!(EmissionLog::new(vec![("a".into(), 5.0), ("b".into(), 4.0)]).is_err());
    }
}
