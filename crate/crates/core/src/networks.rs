//! Depth and saliency networks: specification, initialization, forward
//! passes, and the `DGW1` checkpoint format.
//!
//! Both nets share the same encoder shape: a stack of stride-2 3x3
//! conv+relu blocks. The depth decoder upsamples back to half the input
//! resolution and ends in a softplus head with a 0.01 m floor; the saliency
//! decoder returns to full resolution and ends in a sigmoid head, so masks
//! always lie strictly inside (0,1).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{fnv1a, Rng};
use crate::scalar::Scalar;
use crate::tensor::io::{read_tensor_from, write_tensor, Counted};
use crate::tensor::{Tape, Tensor, Var};

pub(crate) const DGW1_MAGIC: &[u8; 4] = b"DGW1";
const DGW1_VERSION: u16 = 1;

/// Depth head floor in meters; also the clamp applied before ratio metrics.
pub const DEPTH_FLOOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Depth,
    Saliency,
}

impl Role {
    fn tag(self) -> u8 {
        match self {
            Role::Depth => 0,
            Role::Saliency => 1,
        }
    }
}

/// Architecture description; hashed into checkpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    role: Role,
    height: usize,
    width: usize,
    widths: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(role: Role, height: usize, width: usize, widths: Vec<usize>) -> Result<NetworkSpec> {
        if height % 16 != 0 || width % 16 != 0 {
            return Err(Error::arg(
                "network-spec",
                format!("input {height}x{width} must be divisible by 16"),
            ));
        }
        if !(2..=4).contains(&widths.len()) {
            return Err(Error::arg(
                "network-spec",
                format!("encoder depth {} outside supported range 2..=4", widths.len()),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::arg("network-spec", "channel widths must be positive"));
        }
        Ok(NetworkSpec {
            role,
            height,
            width,
            widths,
        })
    }

    pub fn depth(height: usize, width: usize, widths: Vec<usize>) -> Result<NetworkSpec> {
        NetworkSpec::new(Role::Depth, height, width, widths)
    }

    pub fn saliency(height: usize, width: usize, widths: Vec<usize>) -> Result<NetworkSpec> {
        NetworkSpec::new(Role::Saliency, height, width, widths)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        (3, self.height, self.width)
    }

    pub fn output_dims(&self) -> (usize, usize, usize) {
        match self.role {
            Role::Depth => (1, self.height / 2, self.width / 2),
            Role::Saliency => (1, self.height, self.width),
        }
    }

    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Stable hash over the canonical encoding of the spec.
    pub fn hash(&self) -> u64 {
        let mut bytes = vec![self.role.tag()];
        bytes.extend_from_slice(&(self.height as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.width as u32).to_le_bytes());
        bytes.push(self.widths.len() as u8);
        for &w in &self.widths {
            bytes.extend_from_slice(&(w as u32).to_le_bytes());
        }
        fnv1a(&bytes)
    }
}

/// One conv layer of the plan, named `enc{i}` / `dec{i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
struct LayerDef {
    name: String,
    c_in: usize,
    c_out: usize,
    stride: usize,
    upsample_before: bool,
}

fn layer_plan(spec: &NetworkSpec) -> Vec<LayerDef> {
    let e = spec.widths.len();
    let mut plan = Vec::new();
    let mut c_prev = 3;
    for (i, &w) in spec.widths.iter().enumerate() {
        plan.push(LayerDef {
            name: format!("enc{}", i + 1),
            c_in: c_prev,
            c_out: w,
            stride: 2,
            upsample_before: false,
        });
        c_prev = w;
    }
    let dec_blocks = match spec.role {
        Role::Depth => e - 1,
        Role::Saliency => e,
    };
    for j in 1..=dec_blocks {
        let c_out = if j == dec_blocks {
            1
        } else {
            spec.widths[e - 1 - j]
        };
        plan.push(LayerDef {
            name: format!("dec{j}"),
            c_in: c_prev,
            c_out,
            stride: 1,
            upsample_before: true,
        });
        c_prev = c_out;
    }
    plan
}

/// Named, ordered collection of trainable tensors for one network.
#[derive(Clone, Debug)]
pub struct ParameterStore<S: Scalar> {
    spec: NetworkSpec,
    seed: u64,
    epoch: u32,
    entries: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> ParameterStore<S> {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: u32) {
        self.epoch = epoch;
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::arg("parameter-store", format!("no parameter named `{name}`")))
    }

    /// Number of parameter tensors.
    pub fn tensor_count(&self) -> usize {
        self.entries.len()
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Hash of the serialized parameter payload; detects any weight change.
    pub fn digest(&self) -> u64 {
        let bytes = checkpoint_bytes(self).expect("in-memory serialization cannot fail");
        fnv1a(&bytes)
    }
}

/// He-initialized network: fan-in scaled normal weights, zero biases,
/// deterministic per seed.
pub fn build_network<S: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<ParameterStore<S>> {
    let mut rng = Rng::new(seed).split("init");
    let mut entries = Vec::new();
    for layer in layer_plan(spec) {
        let fan_in = layer.c_in * 9;
        let std = (2.0 / fan_in as f64).sqrt();
        let weight = Tensor::from_fn(vec![layer.c_out, layer.c_in, 3, 3], |_| {
            S::from_f64(rng.normal() * std)
        });
        let bias = Tensor::zeros(vec![layer.c_out]);
        entries.push((format!("{}.weight", layer.name), weight));
        entries.push((format!("{}.bias", layer.name), bias));
    }
    Ok(ParameterStore {
        spec: spec.clone(),
        seed,
        epoch: 0,
        entries,
    })
}

/// A network's parameters registered on a tape, ready for `net_forward`.
pub struct BoundNet {
    role: Role,
    input_dims: (usize, usize, usize),
    layers: Vec<(LayerSpec, Var, Var)>,
}

#[derive(Clone, Copy)]
struct LayerSpec {
    stride: usize,
    upsample_before: bool,
    is_last: bool,
}

impl BoundNet {
    /// Parameter handles in store order: weight then bias per layer.
    pub fn param_vars(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|&(_, w, b)| [w, b])
            .collect()
    }
}

/// Register every parameter of `store` on the tape. With `trainable` set the
/// parameters collect gradients; otherwise they are constants (a frozen
/// network cannot receive updates, structurally).
pub fn bind_net<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParameterStore<S>,
    trainable: bool,
) -> Result<BoundNet> {
    let plan = layer_plan(&store.spec);
    let mut layers = Vec::with_capacity(plan.len());
    for (li, layer) in plan.iter().enumerate() {
        let w = store.get(&format!("{}.weight", layer.name))?;
        let b = store.get(&format!("{}.bias", layer.name))?;
        let (wv, bv) = if trainable {
            (tape.param(w), tape.param(b))
        } else {
            (tape.constant(w), tape.constant(b))
        };
        layers.push((
            LayerSpec {
                stride: layer.stride,
                upsample_before: layer.upsample_before,
                is_last: li == plan.len() - 1,
            },
            wv,
            bv,
        ));
    }
    Ok(BoundNet {
        role: store.spec.role,
        input_dims: store.spec.input_dims(),
        layers,
    })
}

/// Run the network on a tape-registered input of shape [3,H,W].
pub fn net_forward<S: Scalar>(tape: &mut Tape<S>, net: &BoundNet, x: Var) -> Result<Var> {
    let (c, h, w) = net.input_dims;
    if tape.shape(x) != [c, h, w] {
        return Err(Error::shape(
            "net_forward",
            format!("expected [{c},{h},{w}], got {:?}", tape.shape(x)),
        ));
    }
    let mut cur = x;
    for &(layer, wv, bv) in &net.layers {
        if layer.upsample_before {
            cur = tape.upsample2x(cur)?;
        }
        cur = tape.conv2d(cur, wv, bv, layer.stride, 1)?;
        if layer.is_last {
            cur = match net.role {
                Role::Depth => {
                    let sp = tape.softplus(cur);
                    tape.add_scalar(sp, DEPTH_FLOOR)
                }
                Role::Saliency => tape.sigmoid(cur),
            };
        } else {
            cur = tape.relu(cur);
        }
    }
    Ok(cur)
}

/// Pure inference for a depth network: strictly positive map at half the
/// input resolution.
pub fn forward_depth<S: Scalar>(store: &ParameterStore<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    if store.spec.role != Role::Depth {
        return Err(Error::arg("forward_depth", "store holds a saliency network"));
    }
    let mut tape = Tape::new();
    let net = bind_net(&mut tape, store, false)?;
    let xv = tape.constant(x);
    let y = net_forward(&mut tape, &net, xv)?;
    Ok(tape.to_tensor(y))
}

/// Pure inference for a saliency network: full-resolution mask in (0,1).
pub fn forward_saliency<S: Scalar>(store: &ParameterStore<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    if store.spec.role != Role::Saliency {
        return Err(Error::arg("forward_saliency", "store holds a depth network"));
    }
    let mut tape = Tape::new();
    let net = bind_net(&mut tape, store, false)?;
    let xv = tape.constant(x);
    let y = net_forward(&mut tape, &net, xv)?;
    Ok(tape.to_tensor(y))
}

// ---- DGW1 checkpoints ------------------------------------------------------

/// Serialize a store: magic, version u16, spec-hash u64, u32 parameter count,
/// then per parameter a u16 name length, the name bytes, and a DGT1 tensor.
pub fn checkpoint_bytes<S: Scalar>(store: &ParameterStore<S>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(DGW1_MAGIC);
    out.extend_from_slice(&DGW1_VERSION.to_le_bytes());
    out.extend_from_slice(&store.spec.hash().to_le_bytes());
    out.extend_from_slice(&(store.entries.len() as u32).to_le_bytes());
    for (name, tensor) in &store.entries {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        write_tensor(tensor, &mut out)?;
    }
    Ok(out)
}

pub fn save_checkpoint<S: Scalar>(store: &ParameterStore<S>, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(store)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Parse a checkpoint, validating it against the expected spec. Parameter
/// names and shapes must match the spec's layer plan exactly.
pub fn checkpoint_from_bytes<S: Scalar>(
    bytes: &[u8],
    expected: &NetworkSpec,
) -> Result<ParameterStore<S>> {
    let mut r = Counted::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact_or(&mut magic, "DGW1 magic")?;
    if &magic != DGW1_MAGIC {
        return Err(Error::format_at(format!("bad DGW1 magic {magic:02x?}"), 0));
    }
    let version = r.read_u16("format version")?;
    if version != DGW1_VERSION {
        return Err(Error::format_at(format!("unsupported DGW1 version {version}"), 4));
    }
    let found_hash = r.read_u64("spec hash")?;
    if found_hash != expected.hash() {
        return Err(Error::SpecHashMismatch {
            expected: expected.hash(),
            found: found_hash,
        });
    }
    let count = r.read_u32("parameter count")? as usize;
    let plan = layer_plan(expected);
    if count != plan.len() * 2 {
        return Err(Error::format_at(
            format!("{count} parameters, spec expects {}", plan.len() * 2),
            14,
        ));
    }
    let mut entries = Vec::with_capacity(count);
    for layer in &plan {
        for kind in ["weight", "bias"] {
            let want_name = format!("{}.{kind}", layer.name);
            let name_len = r.read_u16("name length")? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact_or(&mut name_bytes, "parameter name")?;
            let name = String::from_utf8(name_bytes).map_err(|_| {
                Error::format_at("parameter name is not UTF-8", r.offset())
            })?;
            if name != want_name {
                return Err(Error::format_at(
                    format!("parameter `{name}` where `{want_name}` expected"),
                    r.offset(),
                ));
            }
            let tensor: Tensor<S> = read_tensor_from(&mut r)?;
            let want_shape: &[usize] = match kind {
                "weight" => &[layer.c_out, layer.c_in, 3, 3],
                _ => &[layer.c_out],
            };
            if tensor.shape() != want_shape {
                return Err(Error::format_at(
                    format!("parameter `{name}` has shape {:?}, expected {want_shape:?}", tensor.shape()),
                    r.offset(),
                ));
            }
            entries.push((name, tensor));
        }
    }
    r.expect_eof("checkpoint")?;
    Ok(ParameterStore {
        spec: expected.clone(),
        seed: 0,
        epoch: 0,
        entries,
    })
}

pub fn load_checkpoint<S: Scalar>(path: &Path, expected: &NetworkSpec) -> Result<ParameterStore<S>> {
    let bytes = std::fs::read(path)?;
    checkpoint_from_bytes(&bytes, expected)
}
