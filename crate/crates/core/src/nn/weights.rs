//! Learned parameters and the `NLW1` weight file.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! "NLW1" | version: u8 | meta_len: u32 | meta: UTF-8 JSON (meta_len bytes) | payload
//! ```
//!
//! `meta` holds `network` (a [`NetworkSpec`]), an optional `label`, the
//! content `hash` as 16 lowercase hex digits, and `tensors`: a list of
//! `{name, shape, offset}` where `offset` is the byte offset of the tensor's
//! `f32` values inside `payload`. Tensors are stored contiguously in the
//! declared order.
//!
//! The content hash is the first 8 bytes of SHA-256 over
//! `"NLW1" | compact JSON of network | label bytes | 0x00` followed by, per tensor
//! in declared order, `name_len: u32 | name | rank: u32 | dims: u32... | values`.
//! The label and tensor order are part of the content, so
//! export, import and re-export is byte-identical.
//!
//! Parameter names are `<stack>.<layer index>.<weight|bias|beta|gamma>`,
//! e.g. `analysis1.0.weight`, `synthesis1.1.gamma`, `scale2.2.bias`.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ops::GDN_BETA_FLOOR;
use super::spec::{LayerKind, LayerSpec, NetworkSpec, StackId};
use crate::error::{corrupt, invalid, Error, Result};
use crate::tensor::Param;

pub const WEIGHT_MAGIC: &[u8; 4] = b"NLW1";
pub const WEIGHT_VERSION: u8 = 1;

/// 8-byte model fingerprint carried in every container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelHash(pub [u8; 8]);

impl ModelHash {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 16 || !s.is_ascii() {
            return None;
        }
        let mut out = [0u8; 8];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Self(out))
    }
}

impl std::fmt::Display for ModelHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Expected parameter names and shapes of one layer.
pub fn layer_param_shapes(layer: &LayerSpec) -> Vec<(&'static str, Vec<usize>)> {
    let (i, o, k) = (layer.in_channels, layer.out_channels, layer.kernel);
    match layer.kind {
        LayerKind::Conv => vec![("weight", vec![o, i, k, k]), ("bias", vec![o])],
        LayerKind::Deconv => vec![("weight", vec![i, o, k, k]), ("bias", vec![o])],
        LayerKind::Gdn | LayerKind::Igdn => vec![("beta", vec![o]), ("gamma", vec![o, o])],
        LayerKind::Relu => vec![],
    }
}

pub fn param_name(stack: StackId, index: usize, field: &str) -> String {
    format!("{stack}.{index}.{field}")
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    network: NetworkSpec,
    #[serde(default)]
    label: Option<String>,
    hash: String,
    tensors: Vec<TensorEntry>,
}

/// Named parameter tensors for every stack of a [`NetworkSpec`].
#[derive(Debug, Clone)]
pub struct WeightStore {
    network: NetworkSpec,
    label: Option<String>,
    params: Vec<(String, Param)>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    /// Builds a store, checking that every parameterised layer resolves.
    pub fn new(network: NetworkSpec, label: Option<String>, params: Vec<(String, Param)>) -> Result<Self> {
        network.validate()?;
        let mut index = HashMap::with_capacity(params.len());
        for (i, (name, _)) in params.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return invalid(format!("duplicate parameter {name}"));
            }
        }
        let store = Self {
            network,
            label,
            params,
            index,
        };
        store.validate()?;
        Ok(store)
    }

    fn build(network: &NetworkSpec, mut init: impl FnMut(&LayerSpec, &str, &[usize]) -> Vec<f32>) -> Vec<(String, Param)> {
        let mut params = Vec::new();
        for (id, stack) in network.stacks() {
            for (i, layer) in stack.iter().enumerate() {
                for (field, shape) in layer_param_shapes(layer) {
                    let data = init(layer, field, &shape);
                    params.push((param_name(id, i, field), Param { shape, data }));
                }
            }
        }
        params
    }

    /// All kernels and biases zero, GDN β = 1 and γ = 0.
    pub fn zeros(network: NetworkSpec) -> Result<Self> {
        let params = Self::build(&network, |_, field, shape| {
            let n = shape.iter().product();
            vec![if field == "beta" { 1.0 } else { 0.0 }; n]
        });
        Self::new(network, None, params)
    }

    /// Seeded random initialisation, used as a stand-in for trained weights.
    ///
    /// Kernels are uniform with variance `gain² / fan_in`; latent-producing
    /// convolutions get a larger gain so quantized latents span several bins.
    pub fn random(network: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = network.latent_channels;
        let params = Self::build(&network, |layer, field, shape| {
            let n: usize = shape.iter().product();
            let c = layer.out_channels;
            match field {
                "weight" => {
                    let taps = layer.in_channels * layer.kernel * layer.kernel;
                    let fan_in = match layer.kind {
                        LayerKind::Deconv => (taps / (layer.stride * layer.stride)).max(1),
                        _ => taps,
                    };
                    let gain = if layer.kind == LayerKind::Conv && c == m { 4.0 } else { 1.4 };
                    let bound = gain * (3.0 / fan_in as f32).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                }
                "bias" => (0..n).map(|_| rng.random_range(-0.1..0.1)).collect(),
                "beta" => (0..n).map(|_| rng.random_range(0.5..1.5)).collect(),
                "gamma" => (0..n)
                    .map(|i| {
                        let diag = if i / c == i % c { 0.1 } else { 0.0 };
                        diag + rng.random_range(0.0..0.01)
                    })
                    .collect(),
                _ => unreachable!("unknown parameter field {field}"),
            }
        });
        Self::new(network, Some(format!("random-{seed}")), params)
    }

    pub fn network(&self) -> &NetworkSpec {
        &self.network
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn params(&self) -> &[(String, Param)] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.index
            .get(name)
            .map(|&i| &self.params[i].1)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn layer_param(&self, stack: StackId, index: usize, field: &str) -> Result<&Param> {
        self.get(&param_name(stack, index, field))
    }

    /// Replaces one tensor's values, keeping its shape and the GDN constraints.
    pub fn set(&mut self, name: &str, data: Vec<f32>) -> Result<()> {
        let i = *self.index.get(name).ok_or_else(|| Error::Lookup(name.to_string()))?;
        let old = std::mem::replace(&mut self.params[i].1.data, data);
        if self.params[i].1.data.len() != old.len() {
            self.params[i].1.data = old;
            return invalid(format!("{name}: wrong value count"));
        }
        if let Err(e) = self.validate() {
            self.params[i].1.data = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (id, stack) in self.network.stacks() {
            for (i, layer) in stack.iter().enumerate() {
                for (field, shape) in layer_param_shapes(layer) {
                    let name = param_name(id, i, field);
                    let p = self.get(&name)?;
                    if p.shape != shape {
                        return invalid(format!("{name}: shape {:?}, expected {shape:?}", p.shape));
                    }
                    if p.data.len() != shape.iter().product::<usize>() {
                        return invalid(format!("{name}: wrong value count"));
                    }
                    if field == "beta" && p.data.iter().any(|&b| !(b >= GDN_BETA_FLOOR)) {
                        return invalid(format!("{name}: beta below {GDN_BETA_FLOOR}"));
                    }
                    if field == "gamma" && p.data.iter().any(|&g| !(g >= 0.0)) {
                        return invalid(format!("{name}: negative gamma"));
                    }
                    if p.data.iter().any(|v| !v.is_finite()) {
                        return invalid(format!("{name}: non-finite value"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> ModelHash {
        let mut h = Sha256::new();
        h.update(WEIGHT_MAGIC);
        h.update(serde_json::to_string(&self.network).expect("spec serializes").as_bytes());
        h.update(self.label.as_deref().unwrap_or("").as_bytes());
        h.update([0u8]);
        for (name, p) in &self.params {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            h.update((p.shape.len() as u32).to_le_bytes());
            for &d in &p.shape {
                h.update((d as u32).to_le_bytes());
            }
            for v in &p.data {
                h.update(v.to_le_bytes());
            }
        }
        let digest = h.finalize();
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        ModelHash(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let tensors = self
            .params
            .iter()
            .map(|(name, p)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: p.shape.clone(),
                    offset,
                };
                offset += p.data.len() * 4;
                e
            })
            .collect();
        let meta = Metadata {
            network: self.network.clone(),
            label: self.label.clone(),
            hash: self.hash().to_hex(),
            tensors,
        };
        let meta = serde_json::to_vec(&meta).expect("metadata serializes");
        let mut out = Vec::with_capacity(9 + meta.len() + offset);
        out.extend_from_slice(WEIGHT_MAGIC);
        out.push(WEIGHT_VERSION);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for (_, p) in &self.params {
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 || &bytes[..4] != WEIGHT_MAGIC {
            return corrupt("not an NLW1 weight file");
        }
        if bytes[4] != WEIGHT_VERSION {
            return corrupt(format!("unsupported weight file version {}", bytes[4]));
        }
        let meta_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let Some(meta) = bytes.get(9..9 + meta_len) else {
            return corrupt("weight metadata truncated");
        };
        let meta: Metadata = serde_json::from_slice(meta)
            .map_err(|e| Error::CorruptStream(format!("weight metadata: {e}")))?;
        let payload = &bytes[9 + meta_len..];
        let mut params = Vec::with_capacity(meta.tensors.len());
        let mut expected_offset = 0;
        for t in meta.tensors {
            let n: usize = t.shape.iter().product();
            if t.offset != expected_offset {
                return corrupt(format!("{}: offset {} != {expected_offset}", t.name, t.offset));
            }
            let Some(raw) = payload.get(t.offset..t.offset + 4 * n) else {
                return corrupt(format!("{}: payload truncated", t.name));
            };
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            expected_offset += 4 * n;
            params.push((t.name, Param { shape: t.shape, data }));
        }
        if expected_offset != payload.len() {
            return corrupt(format!(
                "weight payload has {} bytes, metadata declares {expected_offset}",
                payload.len()
            ));
        }
        let store = Self::new(meta.network, meta.label, params)?;
        let actual = store.hash();
        if actual.to_hex() != meta.hash {
            return Err(Error::WrongModel {
                expected: meta.hash,
                actual: actual.to_hex(),
            });
        }
        Ok(store)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
