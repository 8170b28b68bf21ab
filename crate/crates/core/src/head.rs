//! Pixel attention over the fused map and the classification head.

use rand::{Rng, RngCore};

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::ops::{dropout_mask, Conv2dSpec, Mode};
use crate::param::{Builder, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Hidden width of the pixel-attention bottleneck for `channels` inputs.
pub fn attention_width(channels: usize) -> usize {
    (channels / 8).max(8)
}

#[derive(Clone, Debug)]
pub struct PixelAttentionParams {
    /// `[A, C, 1, 1]` over the fused map.
    pub w_x: ParamId,
    /// `[A, 1, 1, 1]` over the channel-mean descriptor.
    pub w_sa: ParamId,
    pub b_sa: ParamId,
    /// `[1, A, 1, 1]` gate projection.
    pub f: ParamId,
    pub b_f: ParamId,
    pub hidden: usize,
}

impl PixelAttentionParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, prefix: &str, channels: usize) -> Result<Self> {
        let hidden = attention_width(channels);
        Ok(PixelAttentionParams {
            w_x: b.conv(&format!("{prefix}.w_x"), hidden, channels, 1, 1)?,
            w_sa: b.conv(&format!("{prefix}.w_sa"), hidden, 1, 1, 1)?,
            b_sa: b.bias(&format!("{prefix}.b_sa"), hidden)?,
            f: b.conv(&format!("{prefix}.f"), 1, hidden, 1, 1)?,
            b_f: b.bias(&format!("{prefix}.b_f"), 1)?,
            hidden,
        })
    }

    pub fn param_count(channels: usize) -> usize {
        let a = attention_width(channels);
        a * channels + a + a + a + 1
    }
}

/// Returns `(gated map, gate)`. The gate is `[1, 1, H, W]` with every entry
/// in (0, 1), broadcast over channels.
pub fn pixel_attention<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    p: &PixelAttentionParams,
) -> Result<(NodeId, NodeId)> {
    tape.value(x).dims4()?;
    let descriptor = tape.mean_axis(x, 1)?;
    let w_x = tape.param(store, p.w_x)?;
    let b_sa = tape.param(store, p.b_sa)?;
    let from_map = tape.conv2d(x, w_x, Some(b_sa), Conv2dSpec::default())?;
    let w_sa = tape.param(store, p.w_sa)?;
    let from_desc = tape.conv2d(descriptor, w_sa, None, Conv2dSpec::default())?;
    let pre = tape.add(from_map, from_desc)?;
    let hidden = tape.relu(pre)?;
    let f = tape.param(store, p.f)?;
    let b_f = tape.param(store, p.b_f)?;
    let logit = tape.conv2d(hidden, f, Some(b_f), Conv2dSpec::default())?;
    let gate = tape.sigmoid(logit)?;
    let out = tape.mul_broadcast(x, gate, 1)?;
    Ok((out, gate))
}

#[derive(Clone, Debug)]
pub struct ClassifierParams {
    /// Layer norm over the pooled channels.
    pub norm: (ParamId, ParamId),
    pub weight: ParamId,
    pub bias: ParamId,
    pub dropout: f64,
}

impl ClassifierParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        prefix: &str,
        channels: usize,
        classes: usize,
        dropout: f64,
    ) -> Result<Self> {
        Ok(ClassifierParams {
            norm: b.norm(&format!("{prefix}.norm"), channels)?,
            weight: b.zero_linear(&format!("{prefix}.weight"), classes, channels)?,
            bias: b.bias(&format!("{prefix}.bias"), classes)?,
            dropout,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// `[1, classes]`.
    pub logits: NodeId,
    pub probs: NodeId,
    /// `[1, channels]` normalised pooled features, before dropout.
    pub penultimate: NodeId,
}

/// Global average pool → layer norm → dropout (train mode) → linear →
/// softmax.
/// Train mode with a positive dropout rate needs `rng`.
pub fn classify<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    p: &ClassifierParams,
    mode: Mode,
    rng: Option<&mut dyn RngCore>,
) -> Result<HeadOutput> {
    let (n, c, h, w) = tape.value(x).dims4()?;
    let flat = tape.reshape(x, &[n, c, h * w])?;
    let pooled = tape.mean_axis(flat, 2)?;
    let pooled = tape.reshape(pooled, &[n, c])?;
    let g = tape.param(store, p.norm.0)?;
    let beta = tape.param(store, p.norm.1)?;
    let penultimate = tape.layer_norm(pooled, g, beta, 1)?;
    let features = if mode == Mode::Train && p.dropout > 0.0 {
        let rng = rng.ok_or_else(|| Error::Contract("train-mode dropout needs an rng".into()))?;
        let mask = dropout_mask(&[n, c], p.dropout, rng);
        tape.mask(penultimate, mask)?
    } else {
        penultimate
    };
    let wt = tape.param(store, p.weight)?;
    let b = tape.param(store, p.bias)?;
    let logits = tape.linear(features, wt, Some(b))?;
    let probs = tape.softmax(logits, 1)?;
    Ok(HeadOutput { logits, probs, penultimate })
}
