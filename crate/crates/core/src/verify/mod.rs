//! Named 64-bit finite-difference checks for every layer type and a small
//! end-to-end model. Each case registers its input as a parameter too, so
//! input gradients are checked alongside weight gradients.

pub mod oracles;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{lmhsa, AttentionConfig, LmhsaParams};
use crate::autodiff::{grad_check, projection_loss, GradCheckOptions, GradCheckReport, NodeId, Tape};
use crate::backbone::{hs_refine, patch_embed, residual_block_m, residual_block_n, ConvLayer, HsRefineParams, PatchEmbedParams, ResidualM, ResidualN};
use crate::cmt::{cmt_block, irffn, lpu, CmtBlockConfig, CmtBlockParams, IrffnParams};
use crate::error::{Error, Result};
use crate::head::{classify, pixel_attention, ClassifierParams, PixelAttentionParams};
use crate::model::{Model, ModelConfig};
use crate::ops::{Conv2dSpec, Mode};
use crate::param::{Builder, ParamKind, ParamStore};
use crate::tensor::Tensor;

/// Tolerance on the maximum relative error for single layers.
pub const LAYER_TOL: f64 = 1e-4;
/// Tolerance for the end-to-end model.
pub const END_TO_END_TOL: f64 = 5e-4;

/// Case names in execution order.
pub const GRADIENT_CASES: [&str; 19] = [
    "conv",
    "depthwise_conv",
    "pooling",
    "layer_norm",
    "linear",
    "gelu",
    "softmax",
    "cross_entropy",
    "lmhsa",
    "lpu",
    "irffn",
    "cmt_block",
    "patch_embed",
    "hs_refine",
    "pixel_attention",
    "classifier",
    "residual_m",
    "residual_n",
    "end_to_end",
];

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: &'static str,
    pub report: GradCheckReport,
    pub tolerance: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.report.passed(self.tolerance)
    }
}

type Build = Box<dyn Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<NodeId>>;

/// Moves zero/unit initialisations (biases, norm affine, bias tables, zeroed
/// output weights) off
/// their special values so every gradient path is exercised.
fn perturb(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    for p in store.iter_mut() {
        if p.kind != ParamKind::Weight || p.tensor.max_abs() == 0.0 {
            let noise = Tensor::<f64>::randn(p.tensor.shape(), 0.2, rng);
            p.tensor.add_assign(&noise);
        }
    }
}

fn input(store: &mut ParamStore<f64>, shape: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
    store.add("input", Tensor::randn(shape, 1.0, rng), ParamKind::Weight).map(|_| ())
}

fn x(t: &mut Tape<f64>, s: &ParamStore<f64>) -> Result<NodeId> {
    t.param(s, s.id("input").expect("case registers an input"))
}

fn case(name: &str) -> Result<(ParamStore<f64>, Build, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ name.len() as u64);
    let mut s = ParamStore::new();
    let build: Build = {
        let mut b = Builder::new(&mut s, &mut rng);
        match name {
            "conv" => {
                let l = ConvLayer::build(&mut b, "conv", 3, 4, 3, 2, 1, true)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let y = l.apply(t, s, xi)?;
                    projection_loss(t, y, 1)
                })
            }
            "depthwise_conv" => {
                let w = b.conv("dw.weight", 4, 1, 3, 3)?;
                let bias = b.bias("dw.bias", 4)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let (wn, bn) = (t.param(s, w)?, t.param(s, bias)?);
                    let y = t.conv2d(xi, wn, Some(bn), Conv2dSpec::depthwise(4, 2, 1))?;
                    projection_loss(t, y, 2)
                })
            }
            "pooling" => Box::new(|t, s| {
                let xi = x(t, s)?;
                let m = t.max_pool2d(xi, 2, 2)?;
                let a = t.avg_pool2d(xi, 3, 1)?;
                let lm = projection_loss(t, m, 3)?;
                let la = projection_loss(t, a, 4)?;
                t.add(lm, la)
            }),
            "layer_norm" => {
                let (g, be) = b.norm("ln", 6)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let (gn, bn) = (t.param(s, g)?, t.param(s, be)?);
                    let y = t.layer_norm(xi, gn, bn, 1)?;
                    projection_loss(t, y, 5)
                })
            }
            "linear" => {
                let w = b.linear("fc.weight", 4, 6)?;
                let bias = b.bias("fc.bias", 4)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let (wn, bn) = (t.param(s, w)?, t.param(s, bias)?);
                    let y = t.linear(xi, wn, Some(bn))?;
                    projection_loss(t, y, 6)
                })
            }
            "gelu" => Box::new(|t, s| {
                let xi = x(t, s)?;
                let y = t.gelu(xi)?;
                projection_loss(t, y, 7)
            }),
            "softmax" => Box::new(|t, s| {
                let xi = x(t, s)?;
                let y = t.softmax(xi, 1)?;
                projection_loss(t, y, 8)
            }),
            "cross_entropy" => Box::new(|t, s| {
                let xi = x(t, s)?;
                t.cross_entropy(xi, &[1, 0, 3, 2, 1])
            }),
            "lmhsa" => {
                let p = LmhsaParams::build(&mut b, "attn", AttentionConfig::new(8, 2, 2), (4, 4))?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let y = lmhsa(t, s, xi, &p)?;
                    projection_loss(t, y, 9)
                })
            }
            "lpu" => {
                let k = b.conv("lpu.weight", 4, 1, 3, 3)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let kn = t.param(s, k)?;
                    let y = lpu(t, xi, kn)?;
                    projection_loss(t, y, 10)
                })
            }
            "irffn" => {
                let p = IrffnParams::build(&mut b, "ffn", 4, 2)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let y = irffn(t, s, xi, (4, 4), &p)?;
                    projection_loss(t, y, 11)
                })
            }
            "cmt_block" => {
                let cfg = CmtBlockConfig { dim: 8, heads: 2, irffn_ratio: 2, kv_stride: 2 };
                let p = CmtBlockParams::build(&mut b, "block", cfg, (4, 4))?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let y = cmt_block(t, s, xi, &p)?;
                    projection_loss(t, y, 12)
                })
            }
            "patch_embed" => {
                let p = PatchEmbedParams::build(&mut b, "embed", 3, 6)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let y = patch_embed(t, s, xi, &p)?;
                    projection_loss(t, y, 13)
                })
            }
            "hs_refine" => {
                let p = HsRefineParams { conv: ConvLayer::build(&mut b, "hs.conv", 3, 3, 3, 1, 1, true)? };
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let y = hs_refine(t, s, xi, &p)?;
                    projection_loss(t, y, 14)
                })
            }
            "pixel_attention" => {
                let p = PixelAttentionParams::build(&mut b, "pa", 6)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let (y, _) = pixel_attention(t, s, xi, &p)?;
                    projection_loss(t, y, 15)
                })
            }
            "classifier" => {
                let p = ClassifierParams::build(&mut b, "cls", 6, 4, 0.3)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let h = classify(t, s, xi, &p, Mode::Eval, None)?;
                    projection_loss(t, h.probs, 16)
                })
            }
            "residual_m" => {
                let p = ResidualM::build(&mut b, "m", 3, 5, 2)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let y = residual_block_m(t, s, xi, &p)?;
                    projection_loss(t, y, 17)
                })
            }
            "residual_n" => {
                let p = ResidualN::build(&mut b, "n", 4)?;
                Box::new(move |t, s| {
                    let xi = x(t, s)?;
                    let y = residual_block_n(t, s, xi, &p)?;
                    projection_loss(t, y, 18)
                })
            }
            "end_to_end" => {
                let model = Model::<f64>::new(ModelConfig::micro(), 11)?;
                let mut store = model.store.clone();
                perturb(&mut store, &mut rng);
                let image = Tensor::rand_uniform(&[1, 1, 32, 32], 0.0, 1.0, &mut rng);
                let (config, params) = (model.config.clone(), model.params.clone());
                let build: Build = Box::new(move |t, s| {
                    let m = Model { config: config.clone(), store: s.clone(), params: params.clone() };
                    let f = m.forward(t, &image, Mode::Eval, None)?;
                    t.cross_entropy(f.logits, &[2])
                });
                return Ok((store, build, END_TO_END_TOL));
            }
            other => return Err(Error::Config(format!("unknown gradient case `{other}`; known: {}", GRADIENT_CASES.join(", ")))),
        }
    };
    let input_shape: &[usize] = match name {
        "conv" | "hs_refine" | "patch_embed" | "residual_m" => &[1, 3, 6, 6],
        "depthwise_conv" | "lpu" | "residual_n" => &[1, 4, 5, 5],
        "pooling" => &[1, 2, 6, 6],
        "layer_norm" | "gelu" | "softmax" => &[5, 6],
        "linear" => &[3, 6],
        "cross_entropy" => &[5, 4],
        "lmhsa" | "cmt_block" => &[16, 8],
        "irffn" => &[16, 4],
        _ => &[1, 6, 3, 4],
    };
    input(&mut s, input_shape, &mut rng)?;
    perturb(&mut s, &mut rng);
    Ok((s, build, LAYER_TOL))
}

/// Runs one named case. `analytic_scale` other than 1.0 deliberately
/// corrupts the analytic gradient (harness self-test).
pub fn run_case(name: &str, analytic_scale: f64) -> Result<CaseResult> {
    let (mut store, build, tolerance) = case(name)?;
    let name = GRADIENT_CASES.iter().copied().find(|&c| c == name).expect("validated by case()");
    let coords = if name == "end_to_end" { 4 } else { 24 };
    let opts = GradCheckOptions { coords_per_param: coords, seed: 7, analytic_scale, ..Default::default() };
    let report = grad_check(&mut store, build, opts)?;
    Ok(CaseResult { name, report, tolerance })
}
