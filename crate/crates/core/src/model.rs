//! The allocation network: a per-agent CNN encoder, a V-cycle of multi-head
//! graph-attention layers, and an MLP decoder regressing the assigned
//! target's normalized coordinates.
//!
//! The same parameters serve two execution paths. [`forward_centralized`]
//! evaluates the whole team as one batch; [`forward_decentralized`] lets each
//! agent compute only its own row from mailbox contents. Because every kernel
//! accumulates in a fixed order and each row is computed independently, both
//! paths agree bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{exchange_round, CommGraph, CommsError};
use crate::featurize::{FeatureMap, CHANNELS};
use crate::numerics::{self, concat, Checkpoint, NumericsError, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Comms(#[from] CommsError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("feature map is {got:?}, model expects {expected:?}")]
    InputShape { expected: [usize; 2], got: [usize; 2] },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// How upward-pass skip layers relate to the downward layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tying {
    /// Every skip layer has its own parameters.
    #[default]
    Untied,
    /// Every skip layer reuses the first downward layer's parameters.
    Tied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub conv1: usize,
    pub conv2: usize,
    /// Embedding width `d`; must be divisible by `heads`.
    pub embed: usize,
    pub heads: usize,
    /// V-cycle depth `L`.
    pub depth: usize,
    pub decoder_hidden: usize,
    pub attention_slope: f64,
    pub tying: Tying,
    /// When false the upward pass drops the skip term.
    pub shortcut: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            height: 15,
            width: 15,
            conv1: 16,
            conv2: 32,
            embed: 128,
            heads: 4,
            depth: 3,
            decoder_hidden: 64,
            attention_slope: 0.2,
            tying: Tying::Untied,
            shortcut: true,
        }
    }
}

fn conv_out(n: usize) -> usize {
    // 3x3 kernel, stride 2, padding 1
    (n + 2 - 3) / 2 + 1
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if self.height < 2 || self.width < 2 {
            return bad("map must be at least 2x2");
        }
        if self.conv1 == 0 || self.conv2 == 0 || self.embed == 0 || self.decoder_hidden == 0 {
            return bad("layer widths must be positive");
        }
        if self.heads == 0 || self.embed % self.heads != 0 {
            return bad("embed must be a positive multiple of heads");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if !(self.attention_slope.is_finite() && self.attention_slope >= 0.0) {
            return bad("attention slope must be finite and non-negative");
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        self.embed / self.heads
    }

    /// Flattened encoder feature size after the two convolutions.
    pub fn conv_flat(&self) -> usize {
        self.conv2 * conv_out(conv_out(self.height)) * conv_out(conv_out(self.width))
    }

    /// Number of broadcast rounds one decentralized forward pass uses.
    pub fn exchange_rounds(&self) -> usize {
        2 * self.depth
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    /// `[d, d/K]` projection.
    pub w: Tensor,
    /// `[d/K, 1]` score vector applied to the receiving node.
    pub a_self: Tensor,
    /// `[d/K, 1]` score vector applied to each neighbour.
    pub a_nbr: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatParams {
    pub heads: Vec<HeadParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub enc_w: Tensor,
    pub enc_b: Tensor,
    /// Downward layers `GAT_0 .. GAT_{L-1}`.
    pub down: Vec<GatParams>,
    /// Upward skip layers `GAT'_1 .. GAT'_L`; empty when tied or without shortcut.
    pub skip: Vec<GatParams>,
    /// Upward layers `GAT''_1 .. GAT''_L`.
    pub up: Vec<GatParams>,
    pub dec1_w: Tensor,
    pub dec1_b: Tensor,
    pub dec2_w: Tensor,
    pub dec2_b: Tensor,
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

fn init_gat(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> GatParams {
    let (d, dh) = (cfg.embed, cfg.head_width());
    let heads = (0..cfg.heads)
        .map(|_| HeadParams {
            w: glorot(rng, &[d, dh], d, dh),
            a_self: glorot(rng, &[dh, 1], dh, 1),
            a_nbr: glorot(rng, &[dh, 1], dh, 1),
        })
        .collect();
    GatParams { heads }
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases from a seeded stream.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let conv1_w = glorot(&mut rng, &[c.conv1, CHANNELS, 3, 3], CHANNELS * 9, c.conv1 * 9);
        let conv2_w = glorot(&mut rng, &[c.conv2, c.conv1, 3, 3], c.conv1 * 9, c.conv2 * 9);
        let enc_w = glorot(&mut rng, &[c.conv_flat(), c.embed], c.conv_flat(), c.embed);
        let down = (0..c.depth).map(|_| init_gat(&mut rng, c)).collect();
        let skip = if c.shortcut && c.tying == Tying::Untied {
            (0..c.depth).map(|_| init_gat(&mut rng, c)).collect()
        } else {
            Vec::new()
        };
        let up = (0..c.depth).map(|_| init_gat(&mut rng, c)).collect();
        let dec1_w = glorot(&mut rng, &[2 * c.embed, c.decoder_hidden], 2 * c.embed, c.decoder_hidden);
        let dec2_w = glorot(&mut rng, &[c.decoder_hidden, 2], c.decoder_hidden, 2);
        Ok(Self {
            conv1_b: Tensor::zeros([c.conv1]),
            conv2_b: Tensor::zeros([c.conv2]),
            enc_b: Tensor::zeros([c.embed]),
            dec1_b: Tensor::zeros([c.decoder_hidden]),
            dec2_b: Tensor::zeros([2]),
            conv1_w,
            conv2_w,
            enc_w,
            down,
            skip,
            up,
            dec1_w,
            dec2_w,
            config,
        })
    }

    /// Parameter names in canonical order.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> =
            ["conv1.w", "conv1.b", "conv2.w", "conv2.b", "enc.w", "enc.b"].iter().map(|s| s.to_string()).collect();
        for (group, layers) in [("down", &self.down), ("skip", &self.skip), ("up", &self.up)] {
            for (l, layer) in layers.iter().enumerate() {
                for k in 0..layer.heads.len() {
                    for part in ["w", "a_self", "a_nbr"] {
                        names.push(format!("{group}.{l}.head{k}.{part}"));
                    }
                }
            }
        }
        names.extend(["dec1.w", "dec1.b", "dec2.w", "dec2.b"].iter().map(|s| s.to_string()));
        names
    }

    /// Parameters in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b, &self.enc_w, &self.enc_b];
        for layers in [&self.down, &self.skip, &self.up] {
            for layer in layers {
                for h in &layer.heads {
                    out.extend([&h.w, &h.a_self, &h.a_nbr]);
                }
            }
        }
        out.extend([&self.dec1_w, &self.dec1_b, &self.dec2_w, &self.dec2_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.enc_w,
            &mut self.enc_b,
        ];
        for layers in [&mut self.down, &mut self.skip, &mut self.up] {
            for layer in layers.iter_mut() {
                for h in layer.heads.iter_mut() {
                    out.extend([&mut h.w, &mut h.a_self, &mut h.a_nbr]);
                }
            }
        }
        out.extend([&mut self.dec1_w, &mut self.dec1_b, &mut self.dec2_w, &mut self.dec2_b]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Copies `values` (canonical order) into the parameters.
    pub fn set_tensors(&mut self, values: Vec<Tensor>) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != values.len() {
            return Err(ModelError::Config(format!("expected {} tensors, got {}", slots.len(), values.len())));
        }
        for (slot, v) in slots.iter_mut().zip(&values) {
            if slot.shape() != v.shape() {
                return Err(NumericsError::Shape { op: "set_tensors", shapes: vec![slot.shape().to_vec(), v.shape().to_vec()] }.into());
            }
        }
        for (slot, v) in slots.into_iter().zip(values) {
            *slot = v;
        }
        Ok(())
    }

    /// Records every parameter as a tape leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        let vars: Vec<Var<'t>> = self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        let mut it = vars.into_iter();
        let mut next = || it.next().expect("canonical order");
        let (conv1_w, conv1_b, conv2_w, conv2_b, enc_w, enc_b) = (next(), next(), next(), next(), next(), next());
        let mut group = |count: usize| -> Vec<GatVars<'t>> {
            (0..count)
                .map(|_| GatVars {
                    heads: (0..self.config.heads).map(|_| HeadVars { w: next(), a_self: next(), a_nbr: next() }).collect(),
                    slope: self.config.attention_slope,
                })
                .collect()
        };
        let down = group(self.down.len());
        let skip = group(self.skip.len());
        let up = group(self.up.len());
        Bound {
            config: self.config.clone(),
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            enc_w,
            enc_b,
            down,
            skip,
            up,
            dec1_w: next(),
            dec1_b: next(),
            dec2_w: next(),
            dec2_b: next(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = serde_json::to_string(&self.config).expect("config serializes");
        let tensors = self.names().into_iter().zip(self.tensors().into_iter().cloned()).collect();
        Checkpoint { header, tensors }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let config: ModelConfig =
            serde_json::from_str(&ckpt.header).map_err(|e| ModelError::Config(format!("checkpoint header: {e}")))?;
        let mut params = Self::init(config, 0)?;
        let expected = params.names();
        let got: Vec<&str> = ckpt.tensors.iter().map(|(n, _)| n.as_str()).collect();
        if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(ModelError::Config("checkpoint tensor names do not match the model layout".into()));
        }
        params.set_tensors(ckpt.tensors.into_iter().map(|(_, t)| t).collect())?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let err = |message: String| ModelError::Checkpoint { path: path.display().to_string(), message };
        let file = File::create(path).map_err(|e| err(e.to_string()))?;
        let mut w = BufWriter::new(file);
        numerics::write_checkpoint(&mut w, &self.to_checkpoint()).map_err(|e| err(e.to_string()))?;
        w.flush().map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |message: String| ModelError::Checkpoint { path: path.display().to_string(), message };
        let file = File::open(path).map_err(|e| err(e.to_string()))?;
        let ckpt = numerics::read_checkpoint(BufReader::new(file)).map_err(|e| err(e.to_string()))?;
        Self::from_checkpoint(ckpt).map_err(|e| err(e.to_string()))
    }
}

#[derive(Clone, Copy)]
pub struct HeadVars<'t> {
    pub w: Var<'t>,
    pub a_self: Var<'t>,
    pub a_nbr: Var<'t>,
}

#[derive(Clone)]
pub struct GatVars<'t> {
    pub heads: Vec<HeadVars<'t>>,
    pub slope: f64,
}

/// Model parameters recorded on a tape.
#[derive(Clone)]
pub struct Bound<'t> {
    pub config: ModelConfig,
    pub conv1_w: Var<'t>,
    pub conv1_b: Var<'t>,
    pub conv2_w: Var<'t>,
    pub conv2_b: Var<'t>,
    pub enc_w: Var<'t>,
    pub enc_b: Var<'t>,
    pub down: Vec<GatVars<'t>>,
    pub skip: Vec<GatVars<'t>>,
    pub up: Vec<GatVars<'t>>,
    pub dec1_w: Var<'t>,
    pub dec1_b: Var<'t>,
    pub dec2_w: Var<'t>,
    pub dec2_b: Var<'t>,
}

impl<'t> Bound<'t> {
    /// Parameter leaves in canonical order, matching [`ModelParams::tensors`].
    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut out = vec![self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b, self.enc_w, self.enc_b];
        for group in [&self.down, &self.skip, &self.up] {
            for layer in group {
                for h in &layer.heads {
                    out.extend([h.w, h.a_self, h.a_nbr]);
                }
            }
        }
        out.extend([self.dec1_w, self.dec1_b, self.dec2_w, self.dec2_b]);
        out
    }

    /// Skip layer feeding upward level `l` (1-based), if the shortcut is on.
    fn skip_layer(&self, l: usize) -> Option<&GatVars<'t>> {
        if !self.config.shortcut {
            return None;
        }
        match self.config.tying {
            Tying::Untied => self.skip.get(l - 1),
            Tying::Tied => self.down.first(),
        }
    }
}

pub type Neighbors = Rc<Vec<Vec<usize>>>;

/// Stacks feature maps into a `[n, 4, H, W]` tensor.
pub fn stack_features(fmaps: &[&FeatureMap], config: &ModelConfig) -> Result<Tensor> {
    let mut data = Vec::with_capacity(fmaps.len() * CHANNELS * config.height * config.width);
    for f in fmaps {
        let got = [f.dims.width, f.dims.height];
        if got != [config.width, config.height] {
            return Err(ModelError::InputShape { expected: [config.width, config.height], got });
        }
        data.extend_from_slice(&f.data);
    }
    Ok(Tensor::new(vec![fmaps.len(), CHANNELS, config.height, config.width], data)?)
}

/// CNN + MLP encoder: `[n, 4, H, W] -> [n, d]` (the broadcast payload `v̌_0`).
pub fn encode<'t>(b: &Bound<'t>, x: &Var<'t>) -> Result<Var<'t>> {
    let n = x.shape()[0];
    let h = x.conv2d(&b.conv1_w, &b.conv1_b, 2, 1)?.relu();
    let h = h.conv2d(&b.conv2_w, &b.conv2_b, 2, 1)?.relu();
    let h = h.reshape([n, b.config.conv_flat()])?;
    Ok(h.matmul(&b.enc_w)?.add_bias(&b.enc_b)?.relu())
}

/// Multi-head attention layer: `[n, d] -> [n, d]`, heads concatenated, each
/// head passed through relu. Rows with no neighbours produce zeros.
pub fn gat_layer<'t>(p: &GatVars<'t>, feats: &Var<'t>, neighbors: &Neighbors) -> Result<Var<'t>> {
    let heads = p
        .heads
        .iter()
        .map(|h| {
            let z = feats.matmul(&h.w)?;
            let s_self = z.matmul(&h.a_self)?;
            let s_nbr = z.matmul(&h.a_nbr)?;
            Ok(z.graph_attention(&s_self, &s_nbr, Rc::clone(neighbors), p.slope)?.relu())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(concat(&heads, 1)?)
}

/// Downward then upward pass over a shared neighbour structure.
///
/// Returns `(v̌_0 .. v̌_L, v̂_L)`. `σ` is relu, which is idempotent on the
/// already-rectified layer outputs, so it is not applied a second time.
pub fn v_cycle<'t>(b: &Bound<'t>, v0: &Var<'t>, neighbors: &Neighbors) -> Result<(Vec<Var<'t>>, Var<'t>)> {
    let depth = b.config.depth;
    let mut down = vec![*v0];
    for l in 0..depth {
        let next = gat_layer(&b.down[l], &down[l], neighbors)?;
        down.push(next);
    }
    let mut up = down[depth];
    for l in 1..=depth {
        let mut next = gat_layer(&b.up[l - 1], &up, neighbors)?;
        if let Some(skip) = b.skip_layer(l) {
            next = gat_layer(skip, &down[l], neighbors)?.add(&next)?;
        }
        up = next;
    }
    Ok((down, up))
}

/// `[n, d] x [n, d] -> [n, 2]` normalized coordinates in `(0, 1)`.
pub fn decode<'t>(b: &Bound<'t>, ego: &Var<'t>, aggregated: &Var<'t>) -> Result<Var<'t>> {
    let h = concat(&[*ego, *aggregated], 1)?;
    let h = h.matmul(&b.dec1_w)?.add_bias(&b.dec1_b)?.relu();
    Ok(h.matmul(&b.dec2_w)?.add_bias(&b.dec2_b)?.sigmoid())
}

/// Whole-team batched evaluation on one tape: `[n, 4, H, W] -> [n, 2]`.
pub fn forward_centralized<'t>(b: &Bound<'t>, x: &Var<'t>, neighbors: &Neighbors) -> Result<Var<'t>> {
    let v0 = encode(b, x)?;
    let (_, vhat) = v_cycle(b, &v0, neighbors)?;
    decode(b, &v0, &vhat)
}

/// Normalized prediction to grid coordinates, clamped to the map.
pub fn denormalize(p: [f64; 2], config: &ModelConfig) -> [f64; 2] {
    let clamp = |v: f64| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.5 };
    [clamp(p[0]) * (config.width - 1) as f64, clamp(p[1]) * (config.height - 1) as f64]
}

pub fn normalize(cell: [f64; 2], config: &ModelConfig) -> [f64; 2] {
    [cell[0] / (config.width - 1) as f64, cell[1] / (config.height - 1) as f64]
}

fn rows2(t: &Tensor) -> Vec<[f64; 2]> {
    t.data().chunks_exact(2).map(|r| [r[0], r[1]]).collect()
}

/// Batched inference without gradients; returns normalized `(x, y)` per agent.
pub fn predict(params: &ModelParams, fmaps: &[&FeatureMap], graph: &CommGraph) -> Result<Vec<[f64; 2]>> {
    if fmaps.is_empty() {
        return Ok(Vec::new());
    }
    let tape = Tape::new();
    let b = params.bind(&tape);
    let x = tape.leaf(stack_features(fmaps, &params.config)?);
    let neighbors: Neighbors = Rc::new(graph.neighbor_lists().to_vec());
    let out = forward_centralized(&b, &x, &neighbors)?;
    let t = out.to_tensor();
    Ok(rows2(&t))
}

/// One agent's row of a layer, evaluated on `[own; received...]` with a star
/// neighbourhood centred on the agent.
fn local_layer<'t>(tape: &'t Tape, layer: &GatVars<'t>, own: &[f64], inbox: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = own.len();
    let mut data = own.to_vec();
    for p in inbox {
        data.extend_from_slice(p);
    }
    let stack = tape.leaf(Tensor::new(vec![inbox.len() + 1, d], data)?);
    let mut star = vec![(1..=inbox.len()).collect::<Vec<_>>()];
    star.extend((0..inbox.len()).map(|_| Vec::new()));
    let out = gat_layer(layer, &stack, &Rc::new(star))?;
    let row = out.value().row(0).to_vec();
    Ok(row)
}

/// Message-passing inference: each agent encodes its own map, then exchanges
/// one payload per round with its graph neighbours and evaluates only its own
/// row. Uses [`ModelConfig::exchange_rounds`] rounds; returns normalized
/// `(x, y)` per agent, bit-identical to [`predict`].
pub fn forward_decentralized(params: &ModelParams, fmaps: &[&FeatureMap], graph: &CommGraph) -> Result<Vec<[f64; 2]>> {
    let n = fmaps.len();
    if graph.len() != n {
        return Err(CommsError::PayloadCount { expected: graph.len(), got: n }.into());
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let cfg = &params.config;
    let depth = cfg.depth;
    // Each agent owns a tape; nothing but mailbox payloads crosses agents.
    let tapes: Vec<Tape> = (0..n).map(|_| Tape::new()).collect();
    let bound: Vec<Bound<'_>> = tapes.iter().map(|t| params.bind(t)).collect();

    let mut round = 0;
    let mut exchange = |payloads: &[Vec<f64>]| -> Result<Vec<Vec<Vec<f64>>>> {
        let mail = exchange_round(graph, round, payloads)?;
        round += 1;
        Ok((0..n).map(|i| mail.inbox(i).iter().map(|m| m.payload.clone()).collect()).collect())
    };

    let mut ego = Vec::with_capacity(n);
    for i in 0..n {
        let x = tapes[i].leaf(stack_features(&fmaps[i..=i], cfg)?);
        ego.push(encode(&bound[i], &x)?.value().row(0).to_vec());
    }

    // down[l][i] = v̌_l of agent i; inbox_down[l][i] = neighbours' v̌_l.
    let mut down = vec![ego.clone()];
    let mut inbox_down = Vec::with_capacity(depth + 1);
    for l in 0..depth {
        inbox_down.push(exchange(&down[l])?);
        let next = (0..n)
            .map(|i| local_layer(&tapes[i], &bound[i].down[l], &down[l][i], &inbox_down[l][i]))
            .collect::<Result<Vec<_>>>()?;
        down.push(next);
    }
    inbox_down.push(exchange(&down[depth])?);

    let mut up = down[depth].clone();
    let mut inbox_up = inbox_down[depth].clone();
    for l in 1..=depth {
        if l > 1 {
            inbox_up = exchange(&up)?;
        }
        let next = (0..n)
            .map(|i| {
                let b = &bound[i];
                let mut v = local_layer(&tapes[i], &b.up[l - 1], &up[i], &inbox_up[i])?;
                if let Some(skip) = b.skip_layer(l) {
                    let s = local_layer(&tapes[i], skip, &down[l][i], &inbox_down[l][i])?;
                    // same operand order as the batched `skip + up`
                    v = s.iter().zip(&v).map(|(a, c)| a + c).collect();
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        up = next;
    }

    (0..n)
        .map(|i| {
            let b = &bound[i];
            let tape = &tapes[i];
            let e = tape.leaf(Tensor::new(vec![1, cfg.embed], ego[i].clone())?);
            let a = tape.leaf(Tensor::new(vec![1, cfg.embed], up[i].clone())?);
            let out = decode(b, &e, &a)?;
            let v = out.value();
            Ok([v.data()[0], v.data()[1]])
        })
        .collect()
}

/// Points a bound model at existing leaves so gradients flow to them.
fn rebind<'t>(b: &mut Bound<'t>, vars: &[Var<'t>]) {
    let mut it = vars.iter().copied();
    let mut next = || it.next().unwrap();
    b.conv1_w = next();
    b.conv1_b = next();
    b.conv2_w = next();
    b.conv2_b = next();
    b.enc_w = next();
    b.enc_b = next();
    for group in [&mut b.down, &mut b.skip, &mut b.up] {
        for layer in group.iter_mut() {
            for h in layer.heads.iter_mut() {
                h.w = next();
                h.a_self = next();
                h.a_nbr = next();
            }
        }
    }
    b.dec1_w = next();
    b.dec1_b = next();
    b.dec2_w = next();
    b.dec2_b = next();
}

/// Central-difference check of the full forward pass plus MSE loss with
/// respect to every parameter and the input features.
///
/// Parameters, biases, features, targets and a 2-4 agent graph are drawn
/// from `seed`. Biases are randomized because zero biases put all-zero conv
/// windows exactly on the relu kink.
pub fn check_model_gradients(config: &ModelConfig, seed: u64, eps: f64) -> Result<numerics::GradCheckReport> {
    let mut p = ModelParams::init(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for b in [&mut p.conv1_b, &mut p.conv2_b, &mut p.enc_b, &mut p.dec1_b, &mut p.dec2_b] {
        b.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
    }
    let n = rng.random_range(2..5);
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.6) {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    let nbrs: Neighbors = Rc::new(neighbors);
    let feats = n * CHANNELS * config.height * config.width;
    let x = Tensor::new([n, CHANNELS, config.height, config.width], (0..feats).map(|_| rng.random::<f64>()).collect())?;
    let target = Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.random::<f64>()).collect())?;
    let mut inputs: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
    let np = inputs.len();
    inputs.push(x);
    Ok(numerics::gradient_check(&inputs, eps, |tape, vars| {
        let mut b = p.bind(tape);
        rebind(&mut b, &vars[..np]);
        let y = forward_centralized(&b, &vars[np], &nbrs).map_err(|e| match e {
            ModelError::Numerics(n) => n,
            other => NumericsError::Invalid { op: "forward", message: other.to_string() },
        })?;
        y.mse_loss(&tape.leaf(target.clone()))
    })?)
}
