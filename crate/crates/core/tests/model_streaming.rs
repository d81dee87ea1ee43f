mod common;

use common::{random_features, random_partition, random_spec, streamed};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tdstream::model::{file, Model};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chunked_equals_full(seed in any::<u64>(), frames in 0usize..80) {
        let mut rng = StdRng::seed_from_u64(seed);
        let spec = random_spec(&mut rng);
        let model = Model::random(spec.clone(), seed).unwrap();
        let x = random_features(&mut rng, frames, spec.input_dim);
        let full = model.forward_full(&x).unwrap().logprobs;
        prop_assert_eq!(full.rows(), spec.output_len(frames));
        let parts = random_partition(&mut rng, frames);
        let got = streamed(&model, &x, &parts);
        prop_assert_eq!(got.rows(), full.rows());
        prop_assert!(got.max_abs_diff(&full).unwrap() < 1e-5);
    }

    #[test]
    fn rows_ignore_frames_past_their_lookahead(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let spec = random_spec(&mut rng);
        let model = Model::random(spec.clone(), seed).unwrap();
        let t = rng.gen_range(0..4);
        let last = spec.last_input_frame(t);
        let frames = last + 2 + rng.gen_range(0..8);
        let x = random_features(&mut rng, frames, spec.input_dim);
        let base = model.forward_full(&x).unwrap().logprobs;
        prop_assume!(base.rows() > t);
        for j in last + 1..frames {
            let mut y = x.clone();
            for v in y.row_mut(j) {
                *v += 5.0;
            }
            let out = model.forward_full(&y).unwrap().logprobs;
            prop_assert_eq!(out.row(t), base.row(t), "frame {} moved row {}", j, t);
        }
    }

    #[test]
    fn saved_model_reproduces_outputs(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let spec = random_spec(&mut rng);
        let model = Model::random(spec.clone(), seed).unwrap();
        let back = file::from_bytes(&file::to_bytes(&model)).unwrap();
        let x = random_features(&mut rng, 30, spec.input_dim);
        let a = model.forward_full(&x).unwrap().logprobs;
        let b = back.forward_full(&x).unwrap().logprobs;
        prop_assert_eq!(a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
