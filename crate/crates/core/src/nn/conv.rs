//! Grouped 1-D convolution over time with asymmetric zero padding.
//!
//! Inputs are `T x C_in` matrices (one row per frame). The kernel is a
//! cross-correlation: output frame `t` reads padded input frames
//! `t*stride .. t*stride + kernel_size`, which in unpadded coordinates is
//! `t*stride - left_pad ..= t*stride - left_pad + kernel_size - 1`.
//!
//! The streaming path materializes the left padding once at stream start and
//! the right padding once at [`Conv1d::finish`], so any partition of the input
//! into chunks yields exactly the rows of a single full-sequence call.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// How filter weights are laid out across groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupWeights {
    /// Every group owns its filters: weight shape `[C_out, C_in/groups, kw]`.
    #[default]
    Independent,
    /// All groups apply one filter bank: weight shape
    /// `[C_out/groups, C_in/groups, kw]`. This is a 2-D `kw x 1` convolution
    /// over a `(time, width, channel)` view of the input.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub groups: usize,
    pub left_pad: usize,
    pub right_pad: usize,
    #[serde(default)]
    pub group_weights: GroupWeights,
}

impl ConvSpec {
    /// Padding `{kernel_size - stride - right_pad, right_pad}`, which keeps
    /// `floor(T / stride)` output frames for `T` input frames.
    pub fn asymmetric(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        groups: usize,
        right_pad: usize,
    ) -> Result<Self> {
        if stride == 0 || stride > kernel_size {
            return Err(Error::Config(format!(
                "stride {stride} must be in 1..={kernel_size} for frame-preserving padding"
            )));
        }
        if right_pad > kernel_size - stride {
            return Err(Error::Config(format!(
                "right_pad {right_pad} exceeds kernel_size - stride = {}",
                kernel_size - stride
            )));
        }
        let spec = Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            groups,
            left_pad: kernel_size - stride - right_pad,
            right_pad,
            group_weights: GroupWeights::Independent,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_group_weights(mut self, group_weights: GroupWeights) -> Self {
        self.group_weights = group_weights;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("convolution needs at least one channel".into()));
        }
        if self.kernel_size == 0 || self.stride == 0 {
            return Err(Error::Config("kernel_size and stride must be >= 1".into()));
        }
        if self.groups == 0
            || !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return Err(Error::Config(format!(
                "channels {}->{} not divisible by {} groups",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 3] {
        let cin_g = self.in_channels / self.groups;
        match self.group_weights {
            GroupWeights::Independent => [self.out_channels, cin_g, self.kernel_size],
            GroupWeights::Shared => [self.out_channels / self.groups, cin_g, self.kernel_size],
        }
    }

    pub fn bias_len(&self) -> usize {
        match self.group_weights {
            GroupWeights::Independent => self.out_channels,
            GroupWeights::Shared => self.out_channels / self.groups,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + self.bias_len()
    }

    /// Output frames of a full-sequence call on `frames` input frames.
    pub fn output_len(&self, frames: usize) -> usize {
        let padded = frames + self.left_pad + self.right_pad;
        if padded < self.kernel_size {
            0
        } else {
            (padded - self.kernel_size) / self.stride + 1
        }
    }
}

/// Per-stream buffered input of one convolution.
#[derive(Debug, Clone)]
pub struct ConvState {
    /// Padded-coordinate frames starting at `buf_start`.
    buf: Matrix,
    buf_start: usize,
    next_out: usize,
    finished: bool,
}

impl ConvState {
    /// Index of the next output frame this state will produce.
    pub fn emitted(&self) -> usize {
        self.next_out
    }

    pub fn buffered_frames(&self) -> usize {
        self.buf.rows()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn heap_bytes(&self) -> usize {
        self.buf.heap_bytes()
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    spec: ConvSpec,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv1d {
    pub fn new(spec: ConvSpec, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        spec.validate()?;
        let expected: usize = spec.weight_shape().iter().product();
        if weight.len() != expected {
            return Err(Error::Shape(format!(
                "conv weight has {} values, expected {:?}",
                weight.len(),
                spec.weight_shape()
            )));
        }
        if bias.len() != spec.bias_len() {
            return Err(Error::Shape(format!(
                "conv bias has {} values, expected {}",
                bias.len(),
                spec.bias_len()
            )));
        }
        Ok(Self { spec, weight, bias })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.spec.in_channels,
                input.cols()
            )));
        }
        Ok(())
    }

    /// Full-sequence forward pass with both paddings applied.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let s = &self.spec;
        let mut padded = Matrix::zeros(s.left_pad, s.in_channels);
        padded.append(input)?;
        padded.push_zero_rows(s.right_pad);

        let n_out = s.output_len(input.rows());
        let mut out = Matrix::zeros(n_out, s.out_channels);
        let cin = s.in_channels;
        for t in 0..n_out {
            let start = t * s.stride;
            let window = &padded.as_slice()[start * cin..(start + s.kernel_size) * cin];
            self.correlate(window, out.row_mut(t));
        }
        Ok(out)
    }

    /// Fresh streaming state with the left padding already buffered.
    pub fn start(&self) -> ConvState {
        ConvState {
            buf: Matrix::zeros(self.spec.left_pad, self.spec.in_channels),
            buf_start: 0,
            next_out: 0,
            finished: false,
        }
    }

    /// Consumes a chunk and returns every output frame whose window is now
    /// complete. Chunks too short to complete a window return zero rows.
    pub fn forward_stream(&self, state: &mut ConvState, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        if state.finished {
            return Err(Error::Input("convolution stream already finished".into()));
        }
        state.buf.append(input)?;
        Ok(self.drain(state))
    }

    /// Appends the right padding and returns the remaining output frames.
    pub fn finish(&self, state: &mut ConvState) -> Matrix {
        if state.finished {
            return Matrix::empty(self.spec.out_channels);
        }
        state.buf.push_zero_rows(self.spec.right_pad);
        state.finished = true;
        self.drain(state)
    }

    fn drain(&self, state: &mut ConvState) -> Matrix {
        let s = &self.spec;
        let cin = s.in_channels;
        let available = state.buf_start + state.buf.rows();
        let mut out = Matrix::empty(s.out_channels);
        let mut row = vec![0.0f32; s.out_channels];
        while state.next_out * s.stride + s.kernel_size <= available {
            let off = state.next_out * s.stride - state.buf_start;
            let window = &state.buf.as_slice()[off * cin..(off + s.kernel_size) * cin];
            self.correlate(window, &mut row);
            out.push_row(&row).expect("row width matches out_channels");
            state.next_out += 1;
        }
        // frames before the next window start are never read again
        let keep_from = state.next_out * s.stride;
        if keep_from > state.buf_start {
            let dropped = (keep_from - state.buf_start).min(state.buf.rows());
            state.buf.drop_front(dropped);
            state.buf_start += dropped;
        }
        out
    }

    /// One output frame from a contiguous `kernel_size x C_in` window.
    fn correlate(&self, window: &[f32], out: &mut [f32]) {
        let s = &self.spec;
        let cin = s.in_channels;
        let kw = s.kernel_size;
        let cin_g = cin / s.groups;
        let cout_g = s.out_channels / s.groups;
        for g in 0..s.groups {
            let in_base = g * cin_g;
            for o in 0..cout_g {
                let oc = g * cout_g + o;
                let filter_idx = match s.group_weights {
                    GroupWeights::Independent => oc,
                    GroupWeights::Shared => o,
                };
                let filter = &self.weight[filter_idx * cin_g * kw..(filter_idx + 1) * cin_g * kw];
                let mut acc = self.bias[filter_idx];
                for k in 0..kw {
                    let frame = &window[k * cin + in_base..k * cin + in_base + cin_g];
                    for (ic, &x) in frame.iter().enumerate() {
                        acc += filter[ic * kw + k] * x;
                    }
                }
                out[oc] = acc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn random_conv(rng: &mut StdRng, spec: ConvSpec) -> Conv1d {
        let n: usize = spec.weight_shape().iter().product();
        let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = (0..spec.bias_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Conv1d::new(spec, w, b).unwrap()
    }

    /// Dense f64 reference: expands (possibly shared) grouped weights into a
    /// full `C_out x C_in x kw` kernel with zeros outside each group.
    fn dense_oracle(conv: &Conv1d, input: &Matrix) -> Vec<Vec<f64>> {
        let s = conv.spec();
        let cin_g = s.in_channels / s.groups;
        let cout_g = s.out_channels / s.groups;
        let t_in = input.rows() as i64;
        let n_out = s.output_len(input.rows());
        let mut out = vec![vec![0.0f64; s.out_channels]; n_out];
        for (t, row) in out.iter_mut().enumerate() {
            for (oc, o) in row.iter_mut().enumerate() {
                let g = oc / cout_g;
                let f = match s.group_weights {
                    GroupWeights::Independent => oc,
                    GroupWeights::Shared => oc % cout_g,
                };
                let mut acc = conv.bias()[f] as f64;
                for ic in 0..s.in_channels {
                    if ic / cin_g != g {
                        continue;
                    }
                    for k in 0..s.kernel_size {
                        let u = (t * s.stride + k) as i64 - s.left_pad as i64;
                        if u < 0 || u >= t_in {
                            continue;
                        }
                        let w = conv.weight()[(f * cin_g + ic % cin_g) * s.kernel_size + k];
                        acc += w as f64 * input.get(u as usize, ic) as f64;
                    }
                }
                *o = acc;
            }
        }
        out
    }

    fn assert_close_to_oracle(got: &Matrix, want: &[Vec<f64>], tol: f64) {
        assert_eq!(got.rows(), want.len());
        for (t, row) in want.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let d = (got.get(t, c) as f64 - v).abs();
                assert!(d < tol, "frame {t} channel {c}: {} vs {v}", got.get(t, c));
            }
        }
    }

    #[test]
    fn identity_kernel_copies_input() {
        let spec = ConvSpec::asymmetric(3, 3, 1, 1, 3, 0).unwrap();
        let conv = Conv1d::new(spec, vec![1.0; 3], vec![0.0; 3]).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 7, 3);
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn dense_and_depthwise_match_oracle() {
        let mut rng = StdRng::seed_from_u64(2);
        for groups in [1, 2, 4] {
            for gw in [GroupWeights::Independent, GroupWeights::Shared] {
                let spec = ConvSpec::asymmetric(4, 8, 5, 2, groups, 1)
                    .unwrap()
                    .with_group_weights(gw);
                let conv = random_conv(&mut rng, spec);
                let x = random_matrix(&mut rng, 13, 4);
                let got = conv.forward(&x).unwrap();
                assert_close_to_oracle(&got, &dense_oracle(&conv, &x), 1e-5);
            }
        }
    }

    #[test]
    fn per_channel_groups_filter_independently() {
        let mut rng = StdRng::seed_from_u64(3);
        let spec = ConvSpec::asymmetric(3, 3, 3, 1, 3, 1).unwrap();
        let conv = random_conv(&mut rng, spec.clone());
        let x = random_matrix(&mut rng, 9, 3);
        let full = conv.forward(&x).unwrap();
        for c in 0..3 {
            let single_spec = ConvSpec::asymmetric(1, 1, 3, 1, 1, 1).unwrap();
            let single = Conv1d::new(
                single_spec,
                conv.weight()[c * 3..c * 3 + 3].to_vec(),
                vec![conv.bias()[c]],
            )
            .unwrap();
            let col: Vec<f32> = (0..x.rows()).map(|t| x.get(t, c)).collect();
            let y = single.forward(&Matrix::from_vec(9, 1, col).unwrap()).unwrap();
            for t in 0..9 {
                assert_eq!(y.get(t, 0), full.get(t, c));
            }
        }
    }

    #[test]
    fn frames_needed_for_first_output() {
        // kw=9: symmetric padding needs 5 real frames, rPad=1 needs 2
        for (right_pad, needed) in [(4usize, 5usize), (1, 2)] {
            let spec = ConvSpec::asymmetric(2, 2, 9, 1, 2, right_pad).unwrap();
            let mut rng = StdRng::seed_from_u64(4);
            let conv = random_conv(&mut rng, spec);
            let mut state = conv.start();
            let mut fed = 0;
            loop {
                fed += 1;
                let out = conv
                    .forward_stream(&mut state, &random_matrix(&mut rng, 1, 2))
                    .unwrap();
                if out.rows() > 0 {
                    assert_eq!(out.rows(), 1);
                    break;
                }
            }
            assert_eq!(fed, needed, "right_pad {right_pad}");
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ConvSpec::asymmetric(3, 4, 3, 1, 2, 0).is_err());
        assert!(ConvSpec::asymmetric(4, 4, 3, 1, 1, 3).is_err());
        assert!(ConvSpec::asymmetric(4, 4, 2, 3, 1, 0).is_err());
        let spec = ConvSpec::asymmetric(4, 4, 3, 1, 1, 1).unwrap();
        assert!(Conv1d::new(spec.clone(), vec![0.0; 5], vec![0.0; 4]).is_err());
        let conv = Conv1d::new(spec, vec![0.0; 48], vec![0.0; 4]).unwrap();
        assert!(conv.forward(&Matrix::zeros(3, 5)).is_err());
    }

    #[test]
    fn short_input_gives_empty_output() {
        let spec = ConvSpec::asymmetric(1, 1, 6, 2, 1, 0).unwrap();
        let conv = Conv1d::new(spec, vec![1.0; 6], vec![0.0]).unwrap();
        assert_eq!(conv.forward(&Matrix::zeros(1, 1)).unwrap().rows(), 0);
        assert_eq!(conv.forward(&Matrix::zeros(0, 1)).unwrap().rows(), 0);
    }

    proptest! {
        #[test]
        fn streaming_matches_full_sequence(
            seed in any::<u64>(),
            kw in 1usize..7,
            stride in 1usize..4,
            rpad_frac in 0.0f64..1.0,
            groups in prop::sample::select(vec![1usize, 2]),
            shared in any::<bool>(),
            frames in 0usize..40,
            cuts in prop::collection::vec(0usize..40, 0..6),
        ) {
            prop_assume!(stride <= kw);
            let rpad = ((kw - stride) as f64 * rpad_frac).round() as usize;
            let gw = if shared { GroupWeights::Shared } else { GroupWeights::Independent };
            let spec = ConvSpec::asymmetric(2, 4, kw, stride, groups, rpad).unwrap().with_group_weights(gw);
            let mut rng = StdRng::seed_from_u64(seed);
            let conv = random_conv(&mut rng, spec);
            let x = random_matrix(&mut rng, frames, 2);
            let full = conv.forward(&x).unwrap();

            let mut bounds: Vec<usize> = cuts.into_iter().map(|c| c.min(frames)).collect();
            bounds.push(0);
            bounds.push(frames);
            bounds.sort_unstable();
            let mut state = conv.start();
            let mut streamed = Matrix::empty(4);
            for w in bounds.windows(2) {
                let part = conv.forward_stream(&mut state, &x.slice_rows(w[0], w[1])).unwrap();
                streamed.append(&part).unwrap();
            }
            streamed.append(&conv.finish(&mut state)).unwrap();
            prop_assert_eq!(streamed.rows(), full.rows());
            prop_assert!(streamed.max_abs_diff(&full).unwrap() < 1e-6);
        }

        #[test]
        fn outputs_ignore_frames_past_window(seed in any::<u64>(), rpad in 0usize..5, t in 0usize..10) {
            let spec = ConvSpec::asymmetric(2, 2, 5, 1, 1, rpad).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let conv = random_conv(&mut rng, spec.clone());
            let x = random_matrix(&mut rng, 12, 2);
            let base = conv.forward(&x).unwrap();
            let last_read = t + spec.kernel_size - 1 - spec.left_pad;
            for u in (last_read + 1)..12 {
                let mut y = x.clone();
                y.set(u, 0, 5.0);
                y.set(u, 1, -5.0);
                let out = conv.forward(&y).unwrap();
                prop_assert_eq!(out.row(t), base.row(t));
            }
        }
    }
}
