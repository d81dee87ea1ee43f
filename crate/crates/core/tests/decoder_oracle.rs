mod common;

use common::Instance;
use proptest::prelude::*;
use tdstream::decoder::DecoderConfig;
use tdstream::model::EmissionMatrix;

fn exhaustive(inst: &Instance) -> DecoderConfig {
    DecoderConfig::exhaustive(2000, inst.n_tokens)
}

#[test]
fn beam_matches_enumeration() {
    for seed in 0..150 {
        let inst = Instance::random(seed);
        let ranked = inst.oracle();
        let dec = inst.decoder(exhaustive(&inst));
        let mut st = dec.start();
        dec.decode_chunk(&mut st, &inst.emission_matrix()).unwrap();
        let got = dec.finalize(&st);
        let (best, words) = &ranked[0];
        assert!((got.score - best).abs() < 1e-6, "seed {seed}: {} vs {best}", got.score);
        let unambiguous = ranked.get(1).is_none_or(|(s, _)| best - s > 1e-9);
        if unambiguous {
            let got_words: Vec<String> = got.words.iter().map(|w| w.text.clone()).collect();
            assert_eq!(&got_words, words, "seed {seed}");
        }
    }
}

fn rows(inst: &Instance, start: usize, end: usize) -> EmissionMatrix {
    EmissionMatrix::new(inst.emissions.slice_rows(start, end), start, 80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunking_and_history_pruning_do_not_change_result(seed in 1000u64..100_000, prune in 1usize..4) {
        let inst = Instance::random(seed);
        let dec = inst.decoder(exhaustive(&inst));
        let mut whole = dec.start();
        dec.decode_chunk(&mut whole, &inst.emission_matrix()).unwrap();
        let want = dec.finalize(&whole);

        let mut cfg = dec.config().clone();
        cfg.history_prune_interval = prune;
        let mut st = dec.start_with(cfg).unwrap();
        let mut finalized: Vec<String> = Vec::new();
        for t in 0..inst.emissions.rows() {
            let p = dec.decode_chunk(&mut st, &rows(&inst, t, t + 1)).unwrap();
            // finalized words only ever grow
            finalized.extend(p.newly_finalized.iter().map(|w| w.text.clone()));
            prop_assert_eq!(p.finalized_count, finalized.len());
            prop_assert_eq!(&st.finalized().iter().map(|w| w.text.clone()).collect::<Vec<_>>(), &finalized);
        }
        let got = dec.finalize(&st);
        prop_assert_eq!(got.score.to_bits(), want.score.to_bits());
        prop_assert_eq!(&got.words, &want.words);
        prop_assert!(got.words.iter().zip(&finalized).all(|(a, b)| &a.text == b));
    }

    #[test]
    fn stored_scores_match_components(seed in 0u64..100_000, k in 1usize..5, thr in 0.3f64..1.0) {
        let inst = Instance::random(seed);
        let cfg = DecoderConfig {
            beam_size: 8,
            top_k: k,
            blank_threshold: thr,
            ..DecoderConfig::default()
        };
        let dec = inst.decoder(cfg);
        let mut st = dec.start();
        for t in 0..inst.emissions.rows() {
            dec.decode_chunk(&mut st, &rows(&inst, t, t + 1)).unwrap();
            for h in st.scores() {
                let recomputed = h.acoustic + inst.lm_weight * h.lm + inst.word_score * h.words as f64;
                prop_assert!((h.total - recomputed).abs() < 1e-6);
            }
            prop_assert!(st.beam_len() <= 8);
        }
    }
}
