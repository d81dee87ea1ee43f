use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::spec::{LayerSpec, ModelSpec};
use crate::error::{Error, Result};

/// A named row-major f32 array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor {name}: shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { name, shape, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    /// Matrix or filter bank; the payload is its fan-in.
    Weight(usize),
    Bias(usize),
    Gain,
    NormBias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: Role,
}

/// Every tensor `spec` needs, in file order.
pub(crate) fn layout(spec: &ModelSpec) -> Result<Vec<Slot>> {
    spec.validate()?;
    let mut slots = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, role| slots.push(Slot { name, shape, role });
    for (i, layer) in spec.layers.iter().enumerate() {
        let p = format!("layers.{i}");
        match layer {
            LayerSpec::Conv(c) => {
                let shape = c.weight_shape();
                let fan_in = shape[1] * shape[2];
                push(format!("{p}.weight"), shape.to_vec(), Role::Weight(fan_in));
                push(format!("{p}.bias"), vec![c.bias_len()], Role::Bias(fan_in));
            }
            LayerSpec::Relu => {}
            LayerSpec::LayerNorm => {
                push(format!("{p}.gain"), vec![1], Role::Gain);
                push(format!("{p}.bias"), vec![1], Role::NormBias);
            }
            LayerSpec::Tds(t) => {
                let c = t.conv_spec()?;
                let shape = c.weight_shape();
                let fan_in = shape[1] * shape[2];
                let d = t.dim();
                push(format!("{p}.conv.weight"), shape.to_vec(), Role::Weight(fan_in));
                push(format!("{p}.conv.bias"), vec![c.bias_len()], Role::Bias(fan_in));
                push(format!("{p}.norm1.gain"), vec![1], Role::Gain);
                push(format!("{p}.norm1.bias"), vec![1], Role::NormBias);
                for fc in ["fc1", "fc2"] {
                    push(format!("{p}.{fc}.weight"), vec![d, d], Role::Weight(d));
                    push(format!("{p}.{fc}.bias"), vec![d], Role::Bias(d));
                }
                push(format!("{p}.norm2.gain"), vec![1], Role::Gain);
                push(format!("{p}.norm2.bias"), vec![1], Role::NormBias);
            }
            LayerSpec::Linear { in_dim, out_dim } => {
                push(format!("{p}.weight"), vec![*out_dim, *in_dim], Role::Weight(*in_dim));
                push(format!("{p}.bias"), vec![*out_dim], Role::Bias(*in_dim));
            }
        }
    }
    Ok(slots)
}

/// Seeded uniform initialization: weights and biases in
/// `+-1/sqrt(fan_in)`, norm gains 1 and norm biases 0.
pub fn init_weights(spec: &ModelSpec, seed: u64) -> Result<Vec<Tensor>> {
    let mut rng = StdRng::seed_from_u64(seed);
    layout(spec)?
        .into_iter()
        .map(|slot| {
            let n: usize = slot.shape.iter().product();
            let data = match slot.role {
                Role::Weight(fan_in) | Role::Bias(fan_in) => {
                    let bound = 1.0 / (fan_in as f32).sqrt();
                    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
                }
                Role::Gain => vec![1.0; n],
                Role::NormBias => vec![0.0; n],
            };
            Tensor::new(slot.name, slot.shape, data)
        })
        .collect()
}
