//! Virtual time: chunk completion times computed from release times and
//! per-chunk costs instead of read off a clock.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::engine::TranscriptEvent;

/// A chunk's release time and processing cost, both in ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub release_ms: f64,
    pub cost_ms: f64,
}

/// Completion times of one stream's chunks on a dedicated worker:
/// each starts once released and once its predecessor is done.
pub fn serial_completion(jobs: &[Job]) -> Vec<f64> {
    let mut done = 0.0f64;
    jobs.iter()
        .map(|j| {
            done = done.max(j.release_ms) + j.cost_ms;
            done
        })
        .collect()
}

/// Completion times for many streams sharing `workers` workers. A free
/// worker takes the stream whose next chunk became ready first; chunks of
/// one stream never overlap.
pub fn pooled_completion(streams: &[Vec<Job>], workers: usize) -> Vec<Vec<f64>> {
    assert!(workers > 0, "at least one worker");
    let mut done: Vec<Vec<f64>> = streams.iter().map(|s| Vec::with_capacity(s.len())).collect();
    // (ready time, stream) of each stream's next chunk
    let mut ready: BinaryHeap<Reverse<(OrdF64, usize)>> = streams
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| Reverse((OrdF64(s[0].release_ms), i)))
        .collect();
    let mut free: BinaryHeap<Reverse<OrdF64>> = (0..workers).map(|_| Reverse(OrdF64(0.0))).collect();
    while let Some(Reverse((OrdF64(ready_at), s))) = ready.pop() {
        let Reverse(OrdF64(worker_at)) = free.pop().expect("worker heap is never empty");
        let k = done[s].len();
        let finish = ready_at.max(worker_at) + streams[s][k].cost_ms;
        done[s].push(finish);
        free.push(Reverse(OrdF64(finish)));
        if let Some(next) = streams[s].get(k + 1) {
            ready.push(Reverse((OrdF64(next.release_ms.max(finish)), s)));
        }
    }
    done
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// What the user sees at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub at_ms: f64,
    pub words: Vec<String>,
}

/// Rebuilds the displayed transcript from per-chunk event lists. A
/// non-empty list carries newly finalized words followed by the whole
/// tentative suffix; an empty list leaves the display unchanged.
#[derive(Debug, Default)]
pub struct Display {
    finalized: Vec<String>,
    shown: Vec<String>,
}

impl Display {
    pub fn apply(&mut self, events: &[TranscriptEvent]) -> &[String] {
        if !events.is_empty() {
            self.finalized
                .extend(events.iter().filter(|e| e.is_final).map(|e| e.word.clone()));
            self.shown = self.finalized.clone();
            self.shown
                .extend(events.iter().filter(|e| !e.is_final).map(|e| e.word.clone()));
        }
        &self.shown
    }

    pub fn shown(&self) -> &[String] {
        &self.shown
    }
}

/// For each final word, the first snapshot time from which it and every
/// word before it are shown correctly in all later snapshots. A word shown
/// after a wrong predecessor is not yet readable. The last snapshot must
/// show the final transcript.
pub fn word_availability(snapshots: &[Snapshot], final_words: &[String]) -> Vec<f64> {
    let last = snapshots.last().expect("at least the closing snapshot");
    assert_eq!(last.words, final_words, "closing snapshot must show the final transcript");
    let mut prefix_settled = f64::NEG_INFINITY;
    final_words
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let settled_from = snapshots
                .iter()
                .rposition(|s| s.words.get(j) != Some(w))
                .map_or(0, |i| i + 1);
            prefix_settled = prefix_settled.max(snapshots[settled_from].at_ms);
            prefix_settled
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jobs(spec: &[(f64, f64)]) -> Vec<Job> {
        spec.iter()
            .map(|&(release_ms, cost_ms)| Job { release_ms, cost_ms })
            .collect()
    }

    #[test]
    fn serial_waits_for_release_and_backlog() {
        let j = jobs(&[(500.0, 100.0), (1000.0, 100.0)]);
        assert_eq!(serial_completion(&j), vec![600.0, 1100.0]);
        let slow = jobs(&[(100.0, 300.0), (200.0, 300.0), (300.0, 300.0)]);
        assert_eq!(serial_completion(&slow), vec![400.0, 700.0, 1000.0]);
    }

    #[test]
    fn one_worker_serializes_streams() {
        let s = vec![jobs(&[(0.0, 10.0)]), jobs(&[(0.0, 10.0)]), jobs(&[(5.0, 10.0)])];
        assert_eq!(pooled_completion(&s, 1), vec![vec![10.0], vec![20.0], vec![30.0]]);
    }

    #[test]
    fn snapshots_settle() {
        let snap = |at, w: &[&str]| Snapshot {
            at_ms: at,
            words: w.iter().map(|s| s.to_string()).collect(),
        };
        let snaps = vec![
            snap(100.0, &["a"]),
            snap(200.0, &["a", "x"]),
            snap(300.0, &["a", "b"]),
            snap(400.0, &["a"]),
            snap(500.0, &["a", "b", "c"]),
        ];
        let words: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(word_availability(&snaps, &words), vec![100.0, 500.0, 500.0]);

        // "c" sits in place early but its predecessor is still wrong
        let snaps = vec![snap(100.0, &["x", "c"]), snap(200.0, &["b", "c"])];
        let words: Vec<String> = ["b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(word_availability(&snaps, &words), vec![200.0, 200.0]);
    }

    #[test]
    fn display_tracks_events() {
        let ev = |w: &str, f| TranscriptEvent {
            word: w.into(),
            emit_ms: 0,
            audio_end_ms: None,
            is_final: f,
        };
        let mut d = Display::default();
        assert_eq!(d.apply(&[ev("a", false)]), ["a"]);
        assert_eq!(d.apply(&[]), ["a"]);
        assert_eq!(d.apply(&[ev("a", true), ev("b", false), ev("c", false)]), ["a", "b", "c"]);
        assert_eq!(d.apply(&[ev("d", false)]), ["a", "d"]);
    }
}
