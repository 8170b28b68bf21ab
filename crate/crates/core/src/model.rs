//! Model configuration, parameter layout and the end-to-end forward pass.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::backbone::{backbone, BackboneParams, FeaturePyramid};
use crate::error::{shape_err, Error, Result};
use crate::head::{classify, pixel_attention, ClassifierParams, PixelAttentionParams};
use crate::ops::Mode;
use crate::param::{Builder, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Every architectural hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub input_size: usize,
    pub stage_dims: [usize; 4],
    pub stage_depths: [usize; 4],
    pub stage_heads: [usize; 4],
    pub irffn_ratio: usize,
    pub kv_stride: usize,
    pub residual_dims: [usize; 4],
    pub num_classes: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelConfig {
    /// Full-size 224×224 configuration.
    pub fn paper() -> Self {
        ModelConfig {
            input_channels: 1,
            input_size: 224,
            stage_dims: [64, 128, 256, 512],
            stage_depths: [2, 2, 2, 2],
            stage_heads: [1, 2, 4, 8],
            irffn_ratio: 4,
            kv_stride: 2,
            residual_dims: [64, 128, 192, 256],
            num_classes: 4,
            dropout: 0.3,
        }
    }

    /// 64×64 single-core configuration.
    pub fn desk() -> Self {
        ModelConfig {
            input_channels: 1,
            input_size: 64,
            stage_dims: [16, 32, 64, 128],
            stage_depths: [1, 1, 1, 1],
            stage_heads: [1, 2, 4, 8],
            irffn_ratio: 4,
            kv_stride: 2,
            residual_dims: [16, 32, 48, 64],
            num_classes: 4,
            dropout: 0.3,
        }
    }

    /// 32×32 configuration for end-to-end finite-difference checks.
    pub fn micro() -> Self {
        ModelConfig {
            input_channels: 1,
            input_size: 32,
            stage_dims: [8, 16, 32, 64],
            stage_depths: [1, 1, 1, 1],
            stage_heads: [1, 2, 2, 4],
            irffn_ratio: 2,
            kv_stride: 2,
            residual_dims: [8, 8, 16, 16],
            num_classes: 4,
            dropout: 0.3,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            "micro" => Ok(Self::micro()),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected paper, desk or micro)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.input_channels > 0
            && self.input_size > 0
            && self.irffn_ratio > 0
            && self.kv_stride > 0
            && self.num_classes > 0
            && self.stage_dims.iter().chain(&self.stage_heads).chain(&self.residual_dims).all(|&v| v > 0);
        if !positive {
            return Err(Error::Config("all model extents must be positive".into()));
        }
        if !self.input_size.is_multiple_of(32) {
            return Err(Error::Config(format!("input_size {} must be divisible by 32", self.input_size)));
        }
        for i in 0..4 {
            if !self.stage_dims[i].is_multiple_of(self.stage_heads[i]) {
                return Err(Error::Config(format!(
                    "stage {i}: dim {} not divisible by {} heads",
                    self.stage_dims[i], self.stage_heads[i]
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn stem_width(&self) -> usize {
        self.stage_dims[0]
    }

    /// Side of the token grid that stage `i` attends over.
    pub fn stage_grid(&self, i: usize) -> usize {
        self.input_size >> (i + 1)
    }

    /// Side of stage `i`'s output map (after its /2 refinement).
    pub fn stage_output_side(&self, i: usize) -> usize {
        self.input_size >> (i + 2)
    }

    pub fn fused_side(&self) -> usize {
        self.input_size / 32
    }

    pub fn fused_channels(&self) -> usize {
        self.stage_dims[3] + self.residual_dims[3]
    }
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub backbone: BackboneParams,
    pub pixel_attention: PixelAttentionParams,
    pub classifier: ClassifierParams,
}

/// A configured network and its parameters.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub params: ModelParams,
}

/// Node handles from one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub image: NodeId,
    pub pyramid: FeaturePyramid,
    pub gated: NodeId,
    pub gate: NodeId,
    pub logits: NodeId,
    pub probs: NodeId,
    pub penultimate: NodeId,
}

impl<T: Scalar> Model<T> {
    /// He-normal weights, zero biases and bias tables, unit/zero norm affine,
    /// all drawn from a stream seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut b = Builder::new(&mut store, &mut rng);
        let backbone = BackboneParams::build(&mut b, &config)?;
        let fused = config.fused_channels();
        let pixel_attention = PixelAttentionParams::build(&mut b, "head.pixel_attention", fused)?;
        let classifier = ClassifierParams::build(&mut b, "head.classifier", fused, config.num_classes, config.dropout)?;
        Ok(Model { config, store, params: ModelParams { backbone, pixel_attention, classifier } })
    }

    /// Records one sample's forward pass. `image` is `[1, C, S, S]` or
    /// `[C, S, S]`.
    pub fn forward(&self, tape: &mut Tape<T>, image: &Tensor<T>, mode: Mode, rng: Option<&mut dyn RngCore>) -> Result<Forward> {
        let image = self.check_image(image)?;
        let x = tape.input(image)?;
        let pyramid = backbone(tape, &self.store, x, &self.params.backbone)?;
        let (gated, gate) = pixel_attention(tape, &self.store, pyramid.fused, &self.params.pixel_attention)?;
        let head = classify(tape, &self.store, gated, &self.params.classifier, mode, rng)?;
        Ok(Forward {
            image: x,
            pyramid,
            gated,
            gate,
            logits: head.logits,
            probs: head.probs,
            penultimate: head.penultimate,
        })
    }

    /// Eval-mode class probabilities and penultimate features.
    pub fn predict(&self, image: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, image, Mode::Eval, None)?;
        Ok((tape.value(f.probs).data().to_vec(), tape.value(f.penultimate).data().to_vec()))
    }

    fn check_image(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, s) = (self.config.input_channels, self.config.input_size);
        let ok = match image.shape() {
            [1, ic, h, w] | [ic, h, w] => (*ic, *h, *w) == (c, s, s),
            _ => false,
        };
        if !ok {
            return Err(shape_err!("model expects a {c}x{s}x{s} image, got {:?}", image.shape()));
        }
        image.clone().reshape(&[1, c, s, s])
    }

    /// Same network in another precision (parameter values are converted).
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { config: self.config.clone(), store: self.store.cast(), params: self.params.clone() }
    }
}
