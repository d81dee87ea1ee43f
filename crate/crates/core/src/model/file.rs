//! Binary model files.
//!
//! Layout, all integers little-endian u32:
//!
//! ```text
//! "TDSM" version spec_len spec_bytes tensor_count tensor*
//! spec   = input_dim token_count frame_ms layer_count layer*
//! layer  = kind:u8 field_count:u8 field*        (fields are u32)
//! tensor = name_len name ndim dim* f32*
//! ```

use std::fs;
use std::path::Path;

use super::runtime::Model;
use super::spec::{LayerSpec, ModelSpec, TdsBlockSpec};
use super::weights::Tensor;
use crate::error::{Error, Result};
use crate::nn::{ConvSpec, GroupWeights};

pub const MAGIC: &[u8; 4] = b"TDSM";
pub const VERSION: u32 = 1;

const KIND_CONV: u8 = 1;
const KIND_RELU: u8 = 2;
const KIND_LAYER_NORM: u8 = 3;
const KIND_TDS: u8 = 4;
const KIND_LINEAR: u8 = 5;

fn bad(detail: impl Into<String>) -> Error {
    Error::format("model file", detail)
}

fn put(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn weights_code(g: GroupWeights) -> usize {
    match g {
        GroupWeights::Independent => 0,
        GroupWeights::Shared => 1,
    }
}

fn encode_spec(spec: &ModelSpec) -> Vec<u8> {
    let mut out = Vec::new();
    put(&mut out, spec.input_dim);
    put(&mut out, spec.token_count);
    put(&mut out, spec.frame_ms as usize);
    put(&mut out, spec.layers.len());
    for layer in &spec.layers {
        let (kind, fields): (u8, Vec<usize>) = match layer {
            LayerSpec::Conv(c) => (
                KIND_CONV,
                vec![
                    c.in_channels,
                    c.out_channels,
                    c.kernel_size,
                    c.stride,
                    c.groups,
                    c.left_pad,
                    c.right_pad,
                    weights_code(c.group_weights),
                ],
            ),
            LayerSpec::Relu => (KIND_RELU, vec![]),
            LayerSpec::LayerNorm => (KIND_LAYER_NORM, vec![]),
            LayerSpec::Tds(t) => (
                KIND_TDS,
                vec![
                    t.channels,
                    t.kernel_size,
                    t.width,
                    t.right_pad,
                    weights_code(t.group_weights),
                ],
            ),
            LayerSpec::Linear { in_dim, out_dim } => (KIND_LINEAR, vec![*in_dim, *out_dim]),
        };
        out.push(kind);
        out.push(fields.len() as u8);
        for f in fields {
            put(&mut out, f);
        }
    }
    out
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put(&mut out, VERSION as usize);
    let spec = encode_spec(model.spec());
    put(&mut out, spec.len());
    out.extend_from_slice(&spec);
    let tensors = model.tensors();
    put(&mut out, tensors.len());
    for t in &tensors {
        put(&mut out, t.name.len());
        out.extend_from_slice(t.name.as_bytes());
        put(&mut out, t.shape.len());
        for &d in &t.shape {
            put(&mut out, d);
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

fn decode_weights(code: usize) -> Result<GroupWeights> {
    match code {
        0 => Ok(GroupWeights::Independent),
        1 => Ok(GroupWeights::Shared),
        other => Err(bad(format!("unknown group weight mode {other}"))),
    }
}

fn decode_spec(bytes: &[u8]) -> Result<ModelSpec> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let input_dim = r.u32()?;
    let token_count = r.u32()?;
    let frame_ms = r.u32()? as u32;
    let n_layers = r.u32()?;
    let mut layers = Vec::with_capacity(n_layers.min(4096));
    for i in 0..n_layers {
        let kind = r.u8()?;
        let n = r.u8()? as usize;
        let f = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let want = match kind {
            KIND_CONV => 8,
            KIND_RELU | KIND_LAYER_NORM => 0,
            KIND_TDS => 5,
            KIND_LINEAR => 2,
            other => return Err(bad(format!("layer {i}: unknown kind {other}"))),
        };
        if n != want {
            return Err(bad(format!("layer {i}: kind {kind} has {n} fields, expected {want}")));
        }
        layers.push(match kind {
            KIND_CONV => LayerSpec::Conv(ConvSpec {
                in_channels: f[0],
                out_channels: f[1],
                kernel_size: f[2],
                stride: f[3],
                groups: f[4],
                left_pad: f[5],
                right_pad: f[6],
                group_weights: decode_weights(f[7])?,
            }),
            KIND_RELU => LayerSpec::Relu,
            KIND_LAYER_NORM => LayerSpec::LayerNorm,
            KIND_TDS => LayerSpec::Tds(
                TdsBlockSpec::new(f[0], f[1], f[2], f[3]).with_group_weights(decode_weights(f[4])?),
            ),
            _ => LayerSpec::Linear {
                in_dim: f[0],
                out_dim: f[1],
            },
        });
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes in spec record"));
    }
    Ok(ModelSpec {
        input_dim,
        token_count,
        frame_ms,
        layers,
    })
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("missing TDSM magic"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let spec_len = r.u32()?;
    let spec = decode_spec(r.take(spec_len)?)?;
    let n_tensors = r.u32()?;
    let mut tensors = Vec::with_capacity(n_tensors.min(4096));
    for _ in 0..n_tensors {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_string();
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad(format!("tensor {name}: shape overflows")))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| bad("tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after tensors"));
    }
    Model::new(spec, tensors)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    from_bytes(&fs::read(path)?)
}
