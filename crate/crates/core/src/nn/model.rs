use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::hparams::Hyperparameters;
use super::params::{Init, ParamId, ParamStore};
use super::Tensor;
use crate::corpus::FrameImage;
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const DEFAULT_POOL: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub frame_height: usize,
    pub frame_width: usize,
    pub channels: usize,
    pub pool: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    /// Recognition classes: blank plus every other gloss id.
    pub gloss_classes: usize,
    pub text_vocab: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(
        frame_dims: (usize, usize, usize),
        hp: &Hyperparameters,
        gloss_classes: usize,
        text_vocab: usize,
    ) -> Self {
        let (frame_height, frame_width, channels) = frame_dims;
        Self {
            frame_height,
            frame_width,
            channels,
            pool: DEFAULT_POOL,
            hidden_dim: hp.hidden_dim,
            num_layers: hp.num_layers,
            num_heads: hp.num_heads,
            ff_dim: 4 * hp.hidden_dim,
            gloss_classes,
            text_vocab,
            dropout: hp.dropout,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.pool * self.pool * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.pool == 0 || self.frame_height < self.pool || self.frame_width < self.pool {
            return bad(format!(
                "frames {}x{} are smaller than the {}x{} pooling grid",
                self.frame_height, self.frame_width, self.pool, self.pool
            ));
        }
        if self.channels == 0 || self.hidden_dim == 0 || self.num_layers == 0 || self.ff_dim == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.gloss_classes < 2 || self.text_vocab < 2 {
            return bad("vocabularies are too small".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Average-pools each frame to a `pool × pool` grid per channel and flattens
/// to one row per frame (channel-major).
pub fn pool_frames(frames: &[FrameImage], pool: usize) -> Result<Tensor> {
    let Some(first) = frames.first() else {
        return Err(Error::Shape("no frames to pool".into()));
    };
    let (h, w, c) = first.dims();
    if pool == 0 || h < pool || w < pool {
        return Err(Error::Shape(format!("{h}x{w} frames are smaller than the {pool}x{pool} grid")));
    }
    let bounds = |n: usize, i: usize| (i * n / pool, (i + 1) * n / pool);
    let mut data = Vec::with_capacity(frames.len() * pool * pool * c);
    for f in frames {
        if f.dims() != (h, w, c) {
            return Err(Error::Shape(format!("frame dims {:?} differ from {:?}", f.dims(), (h, w, c))));
        }
        for ch in 0..c {
            for i in 0..pool {
                let (y0, y1) = bounds(h, i);
                for j in 0..pool {
                    let (x0, x1) = bounds(w, j);
                    let mut s = 0.0f64;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            s += f64::from(f.get(y, x, ch));
                        }
                    }
                    data.push(s / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
    }
    Tensor::matrix(frames.len(), pool * pool * c, data)
}

/// Sinusoidal position table with `rows` positions.
pub fn positional_encoding(rows: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; rows * dim];
    for pos in 0..rows {
        for i in 0..dim {
            let pair = (i / 2) as f64 * 2.0;
            let angle = pos as f64 / 10000f64.powf(pair / dim as f64);
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(rows, dim, data).expect("positional table shape")
}

pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone, Copy)]
struct FeedForward {
    l1: Linear,
    l2: Linear,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    attn_norm: Norm,
    attn: Attention,
    ff_norm: Norm,
    ff: FeedForward,
}

#[derive(Debug, Clone, Copy)]
struct DecoderLayer {
    self_norm: Norm,
    self_attn: Attention,
    cross_norm: Norm,
    cross_attn: Attention,
    ff_norm: Norm,
    ff: FeedForward,
}

pub struct Encoded {
    pub memory: Var,
    pub ctc_logprobs: Var,
}

/// Pre-norm transformer encoder-decoder with a CTC recognition head on the
/// encoder and a translation head whose weight doubles as the decoder's
/// input embedding.
#[derive(Debug, Clone)]
pub struct TransformerModel {
    config: ModelConfig,
    pub params: ParamStore,
    frame: Linear,
    encoder: Vec<EncoderLayer>,
    encoder_norm: Norm,
    recognition: Linear,
    decoder: Vec<DecoderLayer>,
    decoder_norm: Norm,
    translation: Linear,
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut Rng,
}

impl Builder<'_> {
    fn linear(&mut self, name: &str, fan_in: usize, out: usize) -> Result<Linear> {
        Ok(Linear {
            w: self.store.add(format!("{name}.weight"), vec![out, fan_in], fan_in, Init::Uniform, self.rng)?,
            b: self.store.add(format!("{name}.bias"), vec![out], fan_in, Init::Uniform, self.rng)?,
        })
    }

    fn norm(&mut self, name: &str, dim: usize) -> Result<Norm> {
        Ok(Norm {
            g: self.store.add(format!("{name}.weight"), vec![dim], dim, Init::Ones, self.rng)?,
            b: self.store.add(format!("{name}.bias"), vec![dim], dim, Init::Zeros, self.rng)?,
        })
    }

    fn attention(&mut self, name: &str, d: usize) -> Result<Attention> {
        Ok(Attention {
            q: self.linear(&format!("{name}.q"), d, d)?,
            k: self.linear(&format!("{name}.k"), d, d)?,
            v: self.linear(&format!("{name}.v"), d, d)?,
            o: self.linear(&format!("{name}.o"), d, d)?,
        })
    }

    fn ff(&mut self, name: &str, d: usize, ff: usize) -> Result<FeedForward> {
        Ok(FeedForward {
            l1: self.linear(&format!("{name}.linear1"), d, ff)?,
            l2: self.linear(&format!("{name}.linear2"), ff, d)?,
        })
    }
}

impl TransformerModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::derived(seed, "init");
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut r,
        };
        let d = config.hidden_dim;
        let frame = b.linear("embed.frame", config.feature_dim(), d)?;
        let mut encoder = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            let p = format!("encoder.layers.{i}");
            encoder.push(EncoderLayer {
                attn_norm: b.norm(&format!("{p}.attn_norm"), d)?,
                attn: b.attention(&format!("{p}.self_attn"), d)?,
                ff_norm: b.norm(&format!("{p}.ff_norm"), d)?,
                ff: b.ff(&format!("{p}.ff"), d, config.ff_dim)?,
            });
        }
        let encoder_norm = b.norm("encoder.norm", d)?;
        let recognition = b.linear("recognition_head", d, config.gloss_classes)?;
        let mut decoder = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            let p = format!("decoder.layers.{i}");
            decoder.push(DecoderLayer {
                self_norm: b.norm(&format!("{p}.self_attn_norm"), d)?,
                self_attn: b.attention(&format!("{p}.self_attn"), d)?,
                cross_norm: b.norm(&format!("{p}.cross_attn_norm"), d)?,
                cross_attn: b.attention(&format!("{p}.cross_attn"), d)?,
                ff_norm: b.norm(&format!("{p}.ff_norm"), d)?,
                ff: b.ff(&format!("{p}.ff"), d, config.ff_dim)?,
            });
        }
        let decoder_norm = b.norm("decoder.norm", d)?;
        let translation = b.linear("translation_head", d, config.text_vocab)?;
        Ok(Self {
            params: b.store,
            config,
            frame,
            encoder,
            encoder_norm,
            recognition,
            decoder,
            decoder_norm,
            translation,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blank_id(&self) -> usize {
        crate::corpus::GlossVocabulary::BLANK
    }

    fn linear(&self, g: &mut Graph, x: Var, l: Linear) -> Var {
        let w = g.param(&self.params, l.w);
        let b = g.param(&self.params, l.b);
        let y = g.matmul_t(x, w);
        g.add_row(y, b)
    }

    fn norm(&self, g: &mut Graph, x: Var, n: Norm) -> Var {
        let gm = g.param(&self.params, n.g);
        let b = g.param(&self.params, n.b);
        g.layer_norm(x, gm, b)
    }

    fn dropout(&self, g: &mut Graph, x: Var, mode: &mut Mode) -> Var {
        let p = self.config.dropout;
        match mode {
            Mode::Train(r) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = (0..g.value(x).numel())
                    .map(|_| if r.gen::<f64>() < p { 0.0 } else { keep })
                    .collect();
                g.dropout(x, mask)
            }
            _ => x,
        }
    }

    fn attention(&self, g: &mut Graph, a: &Attention, q_in: Var, kv_in: Var, causal: bool) -> Var {
        let q = self.linear(g, q_in, a.q);
        let k = self.linear(g, kv_in, a.k);
        let v = self.linear(g, kv_in, a.v);
        let heads = self.config.num_heads;
        let dk = self.config.hidden_dim / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dk, dk),
                    g.slice_cols(k, h * dk, dk),
                    g.slice_cols(v, h * dk, dk),
                )
            };
            let s = g.matmul_t(qh, kh);
            let s = g.scale(s, scale);
            let p = g.softmax(s, causal);
            outs.push(g.matmul(p, vh));
        }
        let o = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.linear(g, o, a.o)
    }

    fn feed_forward(&self, g: &mut Graph, x: Var, f: &FeedForward, mode: &mut Mode) -> Var {
        let h = self.linear(g, x, f.l1);
        let h = g.relu(h);
        let h = self.dropout(g, h, mode);
        self.linear(g, h, f.l2)
    }

    fn check(g: &Graph, v: Var, layer: impl Into<String>) -> Result<()> {
        if g.value(v).is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { layer: layer.into() })
        }
    }

    /// Projects pooled frame features (`T × feature_dim`) and adds positions.
    pub fn embed(&self, g: &mut Graph, features: &Tensor) -> Result<Var> {
        let (t, f) = features.dims2();
        if features.shape().len() != 2 || f != self.config.feature_dim() || t == 0 {
            return Err(Error::Shape(format!(
                "features {:?} do not match T x {}",
                features.shape(),
                self.config.feature_dim()
            )));
        }
        let x = g.constant(features.clone());
        let x = self.linear(g, x, self.frame);
        let pe = g.constant(positional_encoding(t, self.config.hidden_dim));
        let x = g.add(x, pe);
        Self::check(g, x, "embed.frame")?;
        Ok(x)
    }

    /// Pools raw frames and embeds them.
    pub fn frame_embed(&self, g: &mut Graph, frames: &[FrameImage]) -> Result<Var> {
        let c = &self.config;
        if let Some(f) = frames.iter().find(|f| f.dims() != (c.frame_height, c.frame_width, c.channels)) {
            return Err(Error::Shape(format!(
                "frame dims {:?} differ from the model's {:?}",
                f.dims(),
                (c.frame_height, c.frame_width, c.channels)
            )));
        }
        let features = pool_frames(frames, c.pool)?;
        self.embed(g, &features)
    }

    pub fn encode(&self, g: &mut Graph, embedded: Var, mode: &mut Mode) -> Result<Encoded> {
        let mut x = self.dropout(g, embedded, mode);
        for (i, layer) in self.encoder.iter().enumerate() {
            let h = self.norm(g, x, layer.attn_norm);
            let h = self.attention(g, &layer.attn, h, h, false);
            let h = self.dropout(g, h, mode);
            x = g.add(x, h);
            let h = self.norm(g, x, layer.ff_norm);
            let h = self.feed_forward(g, h, &layer.ff, mode);
            let h = self.dropout(g, h, mode);
            x = g.add(x, h);
            Self::check(g, x, format!("encoder.layers.{i}"))?;
        }
        let memory = self.norm(g, x, self.encoder_norm);
        Self::check(g, memory, "encoder.norm")?;
        let logits = self.linear(g, memory, self.recognition);
        let ctc_logprobs = g.log_softmax(logits);
        Self::check(g, ctc_logprobs, "recognition_head")?;
        Ok(Encoded { memory, ctc_logprobs })
    }

    /// Log-probabilities over the text vocabulary for every input position.
    pub fn decode(&self, g: &mut Graph, memory: Var, inputs: &[usize], mode: &mut Mode) -> Result<Var> {
        let d = self.config.hidden_dim;
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty decoder input".into()));
        }
        if let Some(bad) = inputs.iter().find(|&&i| i >= self.config.text_vocab) {
            return Err(Error::InvalidArgument(format!("text id {bad} outside the vocabulary")));
        }
        let table = g.param(&self.params, self.translation.w);
        let x = g.gather_rows(table, inputs, (d as f64).sqrt());
        let pe = g.constant(positional_encoding(inputs.len(), d));
        let x = g.add(x, pe);
        let mut x = self.dropout(g, x, mode);
        for (i, layer) in self.decoder.iter().enumerate() {
            let h = self.norm(g, x, layer.self_norm);
            let h = self.attention(g, &layer.self_attn, h, h, true);
            let h = self.dropout(g, h, mode);
            x = g.add(x, h);
            let h = self.norm(g, x, layer.cross_norm);
            let h = self.attention(g, &layer.cross_attn, h, memory, false);
            let h = self.dropout(g, h, mode);
            x = g.add(x, h);
            let h = self.norm(g, x, layer.ff_norm);
            let h = self.feed_forward(g, h, &layer.ff, mode);
            let h = self.dropout(g, h, mode);
            x = g.add(x, h);
            Self::check(g, x, format!("decoder.layers.{i}"))?;
        }
        let x = self.norm(g, x, self.decoder_norm);
        let logits = self.linear(g, x, self.translation);
        let lp = g.log_softmax(logits);
        Self::check(g, lp, "translation_head")?;
        Ok(lp)
    }

    pub fn set_frozen(&mut self, frozen: impl Fn(&str) -> bool) {
        for p in self.params.iter_mut() {
            p.frozen = frozen(&p.name);
        }
    }
}
