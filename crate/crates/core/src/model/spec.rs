use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ConvSpec, GroupWeights};

fn shared_weights() -> GroupWeights {
    GroupWeights::Shared
}

/// `TDS(c, kw, w, rPad)`: a grouped temporal convolution over `w` groups of
/// `c` channels followed by a two-layer pointwise feedforward, each with a
/// residual connection and layer normalization. Maps `T x (w*c)` to
/// `T x (w*c)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TdsBlockSpec {
    pub channels: usize,
    pub kernel_size: usize,
    pub width: usize,
    pub right_pad: usize,
    #[serde(default = "shared_weights")]
    pub group_weights: GroupWeights,
}

impl TdsBlockSpec {
    pub fn new(channels: usize, kernel_size: usize, width: usize, right_pad: usize) -> Self {
        Self {
            channels,
            kernel_size,
            width,
            right_pad,
            group_weights: GroupWeights::Shared,
        }
    }

    pub fn with_group_weights(mut self, group_weights: GroupWeights) -> Self {
        self.group_weights = group_weights;
        self
    }

    pub fn dim(&self) -> usize {
        self.width * self.channels
    }

    pub fn conv_spec(&self) -> Result<ConvSpec> {
        if self.channels == 0 || self.width == 0 || self.kernel_size == 0 {
            return Err(Error::Config(format!("degenerate TDS block {self}")));
        }
        if self.right_pad > self.kernel_size - 1 {
            return Err(Error::Config(format!(
                "TDS block {self}: right pad must be at most kernel_size - 1"
            )));
        }
        Ok(ConvSpec::asymmetric(
            self.dim(),
            self.dim(),
            self.kernel_size,
            1,
            self.width,
            self.right_pad,
        )?
        .with_group_weights(self.group_weights))
    }

    /// Conv weights and bias, two `dim x dim` linears with biases, and the
    /// scalar gain/bias of both layer norms.
    pub fn param_count(&self) -> Result<usize> {
        let d = self.dim();
        Ok(self.conv_spec()?.param_count() + 2 * (d * d + d) + 4)
    }
}

impl fmt::Display for TdsBlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TDS({}, {}, {}, {})",
            self.channels, self.kernel_size, self.width, self.right_pad
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvSpec),
    Relu,
    LayerNorm,
    Tds(TdsBlockSpec),
    Linear { in_dim: usize, out_dim: usize },
}

impl LayerSpec {
    fn conv_spec(&self) -> Result<Option<ConvSpec>> {
        Ok(match self {
            LayerSpec::Conv(c) => Some(c.clone()),
            LayerSpec::Tds(t) => Some(t.conv_spec()?),
            _ => None,
        })
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(match self {
            LayerSpec::Conv(c) => c.param_count(),
            LayerSpec::Relu => 0,
            LayerSpec::LayerNorm => 2,
            LayerSpec::Tds(t) => t.param_count()?,
            LayerSpec::Linear { in_dim, out_dim } => in_dim * out_dim + out_dim,
        })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv(c) => write!(
                f,
                "Conv1D(in={}, out={}, kw={}, dw={}, groups={}, pad={{{}, {}}}, {:?})",
                c.in_channels,
                c.out_channels,
                c.kernel_size,
                c.stride,
                c.groups,
                c.left_pad,
                c.right_pad,
                c.group_weights
            ),
            LayerSpec::Relu => write!(f, "ReLU"),
            LayerSpec::LayerNorm => write!(f, "LayerNorm"),
            LayerSpec::Tds(t) => write!(f, "{t}"),
            LayerSpec::Linear { in_dim, out_dim } => write!(f, "Linear({in_dim} -> {out_dim})"),
        }
    }
}

/// Declarative acoustic model: the layer list plus the token inventory size.
/// Every derived quantity (stride, future context, receptive field,
/// parameter count) is a function of the layer list alone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub token_count: usize,
    /// Spacing of input feature frames.
    #[serde(default = "default_frame_ms")]
    pub frame_ms: u32,
    pub layers: Vec<LayerSpec>,
}

fn default_frame_ms() -> u32 {
    10
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.token_count == 0 || self.frame_ms == 0 {
            return Err(Error::Config("input_dim, token_count and frame_ms must be positive".into()));
        }
        let mut dim = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(conv) = layer.conv_spec()? {
                conv.validate()?;
                if conv.stride > conv.kernel_size
                    || conv.left_pad + conv.right_pad != conv.kernel_size - conv.stride
                {
                    return Err(Error::Config(format!(
                        "layer {i}: padding {{{}, {}}} must sum to kernel_size - stride = {}",
                        conv.left_pad,
                        conv.right_pad,
                        conv.kernel_size.saturating_sub(conv.stride)
                    )));
                }
            }
            dim = match layer {
                LayerSpec::Conv(c) if c.in_channels == dim => c.out_channels,
                LayerSpec::Tds(t) if t.dim() == dim => dim,
                LayerSpec::Linear { in_dim, out_dim } if *in_dim == dim && *out_dim > 0 => *out_dim,
                LayerSpec::Relu | LayerSpec::LayerNorm => dim,
                _ => {
                    return Err(Error::Shape(format!(
                        "layer {i} ({layer}) does not accept width {dim}"
                    )))
                }
            };
        }
        if dim != self.token_count {
            return Err(Error::Shape(format!(
                "model outputs width {dim} but has {} tokens",
                self.token_count
            )));
        }
        Ok(())
    }

    fn convs(&self) -> impl Iterator<Item = ConvSpec> + '_ {
        self.layers
            .iter()
            .filter_map(|l| l.conv_spec().ok().flatten())
    }

    /// Product of all convolution strides.
    pub fn total_stride(&self) -> usize {
        self.convs().map(|c| c.stride).product()
    }

    pub fn output_stride_ms(&self) -> u32 {
        self.total_stride() as u32 * self.frame_ms
    }

    /// Sum over convolutions of `right_pad * (stride of the layer's input)`,
    /// in input frames.
    pub fn future_context_frames(&self) -> usize {
        let mut stride = 1;
        let mut total = 0;
        for c in self.convs() {
            total += c.right_pad * stride;
            stride *= c.stride;
        }
        total
    }

    pub fn future_context_ms(&self) -> u32 {
        self.future_context_frames() as u32 * self.frame_ms
    }

    /// `1 + sum (kernel_size - 1) * (stride of the layer's input)`, in input
    /// frames.
    pub fn receptive_field_frames(&self) -> usize {
        let mut stride = 1;
        let mut span = 1;
        for c in self.convs() {
            span += (c.kernel_size - 1) * stride;
            stride *= c.stride;
        }
        span
    }

    pub fn receptive_field_ms(&self) -> u32 {
        self.receptive_field_frames() as u32 * self.frame_ms
    }

    /// Last input frame that emission row `t` reads: the final frame of its
    /// stride block plus the future context.
    pub fn last_input_frame(&self, t: usize) -> usize {
        let s = self.total_stride();
        t * s + s - 1 + self.future_context_frames()
    }

    pub fn parameter_count(&self) -> Result<usize> {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Emission rows a full-sequence pass produces for `frames` input frames.
    pub fn output_len(&self, frames: usize) -> usize {
        self.convs().fold(frames, |t, c| c.output_len(t))
    }

    /// Four groups of 2, 3, 4 and 5 TDS blocks with 15, 19, 23 and 27
    /// channels over 80 features, separated by width-shared convolutions;
    /// the first three subsample by 2. Right padding totals 25 input frames
    /// and the receptive field is 1000 frames.
    pub fn reference(token_count: usize) -> Self {
        let w = 80;
        let mut layers = Vec::new();
        let groups: [(usize, usize, usize, usize, usize, usize, usize); 4] = [
            // (c_in, c_out, conv kw, conv dw, conv rpad, blocks, tds kw), tds rpad below
            (1, 15, 10, 2, 3, 2, 9),
            (15, 19, 10, 2, 1, 3, 9),
            (19, 23, 10, 2, 1, 4, 11),
            (23, 27, 12, 1, 0, 5, 11),
        ];
        let tds_rpad = [1, 1, 0, 0];
        for (g, &(c_in, c_out, kw, dw, rpad, blocks, tds_kw)) in groups.iter().enumerate() {
            layers.push(LayerSpec::Conv(
                ConvSpec::asymmetric(w * c_in, w * c_out, kw, dw, w, rpad)
                    .expect("reference conv is valid")
                    .with_group_weights(GroupWeights::Shared),
            ));
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::LayerNorm);
            for _ in 0..blocks {
                layers.push(LayerSpec::Tds(TdsBlockSpec::new(c_out, tds_kw, w, tds_rpad[g])));
            }
        }
        layers.push(LayerSpec::Linear {
            in_dim: w * 27,
            out_dim: token_count,
        });
        Self {
            input_dim: w,
            token_count,
            frame_ms: 10,
            layers,
        }
    }

    /// Small stride-8 model over 80 features for tests and demos.
    pub fn toy(token_count: usize) -> Self {
        let w = 80;
        let c = 2;
        let mut layers = Vec::new();
        for (i, rpad) in [(0usize, 1usize), (1, 1), (2, 0)] {
            let c_in = if i == 0 { 1 } else { c };
            layers.push(LayerSpec::Conv(
                ConvSpec::asymmetric(w * c_in, w * c, 4, 2, w, rpad)
                    .expect("toy conv is valid")
                    .with_group_weights(GroupWeights::Shared),
            ));
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::LayerNorm);
            layers.push(LayerSpec::Tds(TdsBlockSpec::new(c, 3, w, rpad)));
        }
        layers.push(LayerSpec::Linear {
            in_dim: w * c,
            out_dim: token_count,
        });
        Self {
            input_dim: w,
            token_count,
            frame_ms: 10,
            layers,
        }
    }
}
