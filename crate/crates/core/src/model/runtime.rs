use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use super::spec::{LayerSpec, ModelSpec};
use super::weights::{init_weights, layout, Tensor};
use crate::error::{Error, Result};
use crate::nn::{
    log_softmax_inplace, relu_inplace, Conv1d, ConvState, LayerNormParams, Linear, Matrix,
};

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// Log-posteriors over tokens, one row per output frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    pub logprobs: Matrix,
    /// Global index of the first row within its stream.
    pub first_frame: usize,
    pub stride_ms: u32,
}

impl EmissionMatrix {
    pub fn new(logprobs: Matrix, first_frame: usize, stride_ms: u32) -> Self {
        Self {
            logprobs,
            first_frame,
            stride_ms,
        }
    }

    pub fn rows(&self) -> usize {
        self.logprobs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.rows() == 0
    }

    pub fn token_count(&self) -> usize {
        self.logprobs.cols()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.logprobs.row(i)
    }
}

#[derive(Debug)]
struct TdsBlock {
    conv: Conv1d,
    norm1: LayerNormParams,
    fc1: Linear,
    fc2: Linear,
    norm2: LayerNormParams,
}

impl TdsBlock {
    /// Everything after the convolution, given the conv output and the
    /// block inputs at the same frames.
    fn tail(&self, mut y: Matrix, residual: &[f32]) -> Result<Matrix> {
        relu_inplace(&mut y);
        for (a, b) in y.as_mut_slice().iter_mut().zip(residual) {
            *a += b;
        }
        self.norm1.forward_inplace(&mut y);
        let mut z = self.fc1.forward(&y)?;
        relu_inplace(&mut z);
        let mut z = self.fc2.forward(&z)?;
        for (a, b) in z.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *a += b;
        }
        self.norm2.forward_inplace(&mut z);
        Ok(z)
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let y = self.conv.forward(x)?;
        self.tail(y, x.as_slice())
    }

    fn stream(&self, state: &mut TdsState, x: &Matrix) -> Result<Matrix> {
        let y = self.conv.forward_stream(&mut state.conv, x)?;
        state.pending.extend(x.as_slice());
        self.consume(state, y)
    }

    fn finish(&self, state: &mut TdsState) -> Result<Matrix> {
        let y = self.conv.finish(&mut state.conv);
        self.consume(state, y)
    }

    fn consume(&self, state: &mut TdsState, y: Matrix) -> Result<Matrix> {
        let n = y.rows() * y.cols();
        let residual: Vec<f32> = state.pending.drain(..n).collect();
        self.tail(y, &residual)
    }
}

#[derive(Debug)]
enum Layer {
    Conv(Conv1d),
    Relu,
    Norm(LayerNormParams),
    Tds(TdsBlock),
    Linear(Linear),
}

#[derive(Debug, Clone)]
struct TdsState {
    conv: ConvState,
    /// Block inputs whose conv outputs have not been produced yet.
    pending: VecDeque<f32>,
}

#[derive(Debug, Clone)]
enum LayerState {
    Stateless,
    Conv(ConvState),
    Tds(TdsState),
}

impl LayerState {
    fn heap_bytes(&self) -> usize {
        match self {
            LayerState::Stateless => 0,
            LayerState::Conv(c) => c.heap_bytes(),
            LayerState::Tds(t) => {
                t.conv.heap_bytes() + t.pending.capacity() * std::mem::size_of::<f32>()
            }
        }
    }
}

/// Buffered left context of every stateful layer for one stream.
#[derive(Debug, Clone)]
pub struct StreamState {
    model_id: u64,
    layers: Vec<LayerState>,
    frames_in: usize,
    frames_out: usize,
    finished: bool,
}

impl StreamState {
    pub fn frames_in(&self) -> usize {
        self.frames_in
    }

    pub fn frames_out(&self) -> usize {
        self.frames_out
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn heap_bytes(&self) -> usize {
        self.layers.iter().map(LayerState::heap_bytes).sum::<usize>()
            + self.layers.capacity() * std::mem::size_of::<LayerState>()
    }
}

/// An executable acoustic model. Immutable once built; share it behind an
/// `Arc` and give each stream its own [`StreamState`].
#[derive(Debug)]
pub struct Model {
    id: u64,
    spec: ModelSpec,
    layers: Vec<Layer>,
}

fn norm_params(gain: &Tensor, bias: &Tensor) -> LayerNormParams {
    LayerNormParams {
        gain: gain.data[0],
        bias: bias.data[0],
        ..LayerNormParams::default()
    }
}

impl Model {
    /// Builds a model from tensors laid out as [`Model::tensors`] returns
    /// them.
    pub fn new(spec: ModelSpec, tensors: Vec<Tensor>) -> Result<Self> {
        let slots = layout(&spec)?;
        if slots.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "model needs {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.iter().zip(&tensors) {
            if slot.name != t.name || slot.shape != t.shape || t.data.len() != t.shape.iter().product() {
                return Err(Error::Shape(format!(
                    "expected tensor {} {:?}, got {} {:?}",
                    slot.name, slot.shape, t.name, t.shape
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("tensor count checked");
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            layers.push(match layer {
                LayerSpec::Conv(c) => {
                    let w = next();
                    let b = next();
                    Layer::Conv(Conv1d::new(c.clone(), w.data, b.data)?)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::LayerNorm => {
                    let g = next();
                    let b = next();
                    Layer::Norm(norm_params(&g, &b))
                }
                LayerSpec::Tds(t) => {
                    let d = t.dim();
                    let (cw, cb) = (next(), next());
                    let (g1, b1) = (next(), next());
                    let (w1, bb1) = (next(), next());
                    let (w2, bb2) = (next(), next());
                    let (g2, b2) = (next(), next());
                    Layer::Tds(TdsBlock {
                        conv: Conv1d::new(t.conv_spec()?, cw.data, cb.data)?,
                        norm1: norm_params(&g1, &b1),
                        fc1: Linear::new(d, d, w1.data, bb1.data)?,
                        fc2: Linear::new(d, d, w2.data, bb2.data)?,
                        norm2: norm_params(&g2, &b2),
                    })
                }
                LayerSpec::Linear { in_dim, out_dim } => {
                    let w = next();
                    let b = next();
                    Layer::Linear(Linear::new(*in_dim, *out_dim, w.data, b.data)?)
                }
            });
        }
        Ok(Self {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            spec,
            layers,
        })
    }

    /// A model with [`init_weights`] parameters.
    pub fn random(spec: ModelSpec, seed: u64) -> Result<Self> {
        let tensors = init_weights(&spec, seed)?;
        Self::new(spec, tensors)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn stride_ms(&self) -> u32 {
        self.spec.output_stride_ms()
    }

    /// Copies of all parameters, in the order [`Model::new`] expects.
    pub fn tensors(&self) -> Vec<Tensor> {
        let slots = layout(&self.spec).expect("spec validated at build");
        let mut data: Vec<Vec<f32>> = Vec::with_capacity(slots.len());
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    data.push(c.weight().to_vec());
                    data.push(c.bias().to_vec());
                }
                Layer::Relu => {}
                Layer::Norm(n) => {
                    data.push(vec![n.gain]);
                    data.push(vec![n.bias]);
                }
                Layer::Tds(b) => {
                    data.push(b.conv.weight().to_vec());
                    data.push(b.conv.bias().to_vec());
                    data.push(vec![b.norm1.gain]);
                    data.push(vec![b.norm1.bias]);
                    for fc in [&b.fc1, &b.fc2] {
                        data.push(fc.weight().to_vec());
                        data.push(fc.bias().to_vec());
                    }
                    data.push(vec![b.norm2.gain]);
                    data.push(vec![b.norm2.bias]);
                }
                Layer::Linear(l) => {
                    data.push(l.weight().to_vec());
                    data.push(l.bias().to_vec());
                }
            }
        }
        slots
            .into_iter()
            .zip(data)
            .map(|(s, d)| Tensor {
                name: s.name,
                shape: s.shape,
                data: d,
            })
            .collect()
    }

    fn check_features(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "model expects {}-dim features, got {}",
                self.spec.input_dim,
                features.cols()
            )));
        }
        Ok(())
    }

    /// Whole-utterance pass with both paddings applied at every layer.
    pub fn forward_full(&self, features: &Matrix) -> Result<EmissionMatrix> {
        self.check_features(features)?;
        let mut x = features.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => c.forward(&x)?,
                Layer::Relu => {
                    relu_inplace(&mut x);
                    x
                }
                Layer::Norm(n) => {
                    n.forward_inplace(&mut x);
                    x
                }
                Layer::Tds(b) => b.forward(&x)?,
                Layer::Linear(l) => l.forward(&x)?,
            };
        }
        log_softmax_inplace(&mut x);
        Ok(EmissionMatrix::new(x, 0, self.stride_ms()))
    }

    pub fn start(&self) -> StreamState {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => LayerState::Conv(c.start()),
                Layer::Tds(b) => LayerState::Tds(TdsState {
                    conv: b.conv.start(),
                    pending: VecDeque::new(),
                }),
                _ => LayerState::Stateless,
            })
            .collect();
        StreamState {
            model_id: self.id,
            layers,
            frames_in: 0,
            frames_out: 0,
            finished: false,
        }
    }

    fn check_state(&self, state: &StreamState) -> Result<()> {
        if state.model_id != self.id {
            return Err(Error::Input("stream state was created by a different model".into()));
        }
        if state.finished {
            return Err(Error::Input("stream state already finished".into()));
        }
        Ok(())
    }

    /// Runs `x` through layer `i` in streaming mode.
    fn stream_layer(&self, i: usize, state: &mut LayerState, mut x: Matrix) -> Result<Matrix> {
        Ok(match (&self.layers[i], state) {
            (Layer::Conv(c), LayerState::Conv(s)) => c.forward_stream(s, &x)?,
            (Layer::Tds(b), LayerState::Tds(s)) => b.stream(s, &x)?,
            (Layer::Relu, _) => {
                relu_inplace(&mut x);
                x
            }
            (Layer::Norm(n), _) => {
                n.forward_inplace(&mut x);
                x
            }
            (Layer::Linear(l), _) => l.forward(&x)?,
            _ => unreachable!("layer states are created alongside layers"),
        })
    }

    fn emit(&self, state: &mut StreamState, mut x: Matrix) -> EmissionMatrix {
        log_softmax_inplace(&mut x);
        let first = state.frames_out;
        state.frames_out += x.rows();
        EmissionMatrix::new(x, first, self.stride_ms())
    }

    /// Feeds a chunk of feature frames and returns the emission rows whose
    /// inputs (future context included) are now all available.
    pub fn forward_chunk(&self, state: &mut StreamState, features: &Matrix) -> Result<EmissionMatrix> {
        self.check_state(state)?;
        self.check_features(features)?;
        state.frames_in += features.rows();
        let mut x = features.clone();
        for i in 0..self.layers.len() {
            x = self.stream_layer(i, &mut state.layers[i], x)?;
        }
        Ok(self.emit(state, x))
    }

    /// Ends the stream: every layer appends its right padding in turn and
    /// the remaining rows are returned. The result matches what
    /// [`Model::forward_full`] produces past the rows already emitted.
    pub fn finish(&self, state: &mut StreamState) -> Result<EmissionMatrix> {
        self.check_state(state)?;
        let mut x = Matrix::empty(self.spec.input_dim);
        for i in 0..self.layers.len() {
            let st = &mut state.layers[i];
            let mut y = self.stream_layer(i, st, x)?;
            let tail = match (&self.layers[i], st) {
                (Layer::Conv(c), LayerState::Conv(s)) => Some(c.finish(s)),
                (Layer::Tds(b), LayerState::Tds(s)) => Some(b.finish(s)?),
                _ => None,
            };
            if let Some(tail) = tail {
                y.append(&tail)?;
            }
            x = y;
        }
        let out = self.emit(state, x);
        state.finished = true;
        Ok(out)
    }
}
