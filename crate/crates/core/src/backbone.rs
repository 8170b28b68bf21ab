//! Two-stream feature extractor: convolutional stem + four CMT stages, a
//! parallel residual CNN branch, and channel concatenation of their outputs.

use rand::Rng;

use crate::autodiff::{NodeId, Tape};
use crate::cmt::{cmt_block, CmtBlockConfig, CmtBlockParams};
use crate::error::{shape_err, Error, Result};
use crate::model::ModelConfig;
use crate::ops::Conv2dSpec;
use crate::param::{Builder, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: Conv2dSpec,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        Ok(ConvLayer {
            weight: b.conv(&format!("{name}.weight"), c_out, c_in, kernel, kernel)?,
            bias: if bias { Some(b.bias(&format!("{name}.bias"), c_out)?) } else { None },
            spec: Conv2dSpec::new(stride, padding),
        })
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId) -> Result<NodeId> {
        let w = tape.param(store, self.weight)?;
        let b = self.bias.map(|id| tape.param(store, id)).transpose()?;
        tape.conv2d(x, w, b, self.spec)
    }
}

#[derive(Clone, Debug)]
pub struct StemParams {
    pub convs: [ConvLayer; 3],
}

impl StemParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, c_in: usize, width: usize) -> Result<Self> {
        Ok(StemParams {
            convs: [
                ConvLayer::build(b, "stem.conv0", c_in, width, 3, 2, 1, true)?,
                ConvLayer::build(b, "stem.conv1", width, width, 3, 1, 1, true)?,
                ConvLayer::build(b, "stem.conv2", width, width, 3, 1, 1, true)?,
            ],
        })
    }
}

/// 3×3/2 conv → GELU → 3×3 conv → GELU → 3×3 conv → GELU.
pub fn stem<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, p: &StemParams) -> Result<NodeId> {
    let mut h = x;
    for conv in &p.convs {
        h = conv.apply(tape, store, h)?;
        h = tape.gelu(h)?;
    }
    Ok(h)
}

#[derive(Clone, Debug)]
pub struct PatchEmbedParams {
    pub conv: ConvLayer,
    pub norm: (ParamId, ParamId),
}

impl PatchEmbedParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, prefix: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(PatchEmbedParams {
            conv: ConvLayer::build(b, &format!("{prefix}.conv"), c_in, c_out, 3, 1, 1, true)?,
            norm: b.norm(&format!("{prefix}.norm"), c_out)?,
        })
    }
}

/// 3×3 conv (stride 1) → tokens → layer norm over channels.
pub fn patch_embed<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, p: &PatchEmbedParams) -> Result<NodeId> {
    let h = p.conv.apply(tape, store, x)?;
    let t = tape.to_tokens(h)?;
    let g = tape.param(store, p.norm.0)?;
    let b = tape.param(store, p.norm.1)?;
    tape.layer_norm(t, g, b, 1)
}

#[derive(Clone, Debug)]
pub struct HsRefineParams {
    pub conv: ConvLayer,
}

/// 3×3 conv + GELU, then the mean of 2×2/2 max and average pooling.
pub fn hs_refine<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, p: &HsRefineParams) -> Result<NodeId> {
    let (_, _, h, w) = tape.value(x).dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!("hs_refine needs even spatial extent, got {h}x{w}"));
    }
    let c = p.conv.apply(tape, store, x)?;
    let c = tape.gelu(c)?;
    let mx = tape.max_pool2d(c, 2, 2)?;
    let av = tape.avg_pool2d(c, 2, 2)?;
    let s = tape.add(mx, av)?;
    tape.scale(s, T::lit(0.5))
}

#[derive(Clone, Debug)]
pub struct StageParams {
    pub index: usize,
    pub grid: (usize, usize),
    pub embed: PatchEmbedParams,
    pub blocks: Vec<CmtBlockParams>,
    pub refine: HsRefineParams,
}

impl StageParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, cfg: &ModelConfig, index: usize) -> Result<Self> {
        let c_in = if index == 0 { cfg.stem_width() } else { cfg.stage_dims[index - 1] };
        let dim = cfg.stage_dims[index];
        let side = cfg.stage_grid(index);
        let grid = (side, side);
        let prefix = format!("stage{index}");
        let embed = PatchEmbedParams::build(b, &format!("{prefix}.embed"), c_in, dim)?;
        let block_cfg = CmtBlockConfig {
            dim,
            heads: cfg.stage_heads[index],
            irffn_ratio: cfg.irffn_ratio,
            kv_stride: cfg.kv_stride,
        };
        let blocks = (0..cfg.stage_depths[index])
            .map(|i| CmtBlockParams::build(b, &format!("{prefix}.block{i}"), block_cfg, grid))
            .collect::<Result<Vec<_>>>()?;
        let refine = HsRefineParams { conv: ConvLayer::build(b, &format!("{prefix}.refine.conv"), dim, dim, 3, 1, 1, true)? };
        Ok(StageParams { index, grid, embed, blocks, refine })
    }
}

/// Patch embedding → CMT blocks → map layout → HS refinement (halves extent).
pub fn hscmt_stage<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, p: &StageParams) -> Result<NodeId> {
    let (_, _, h, w) = tape.value(x).dims4()?;
    if (h, w) != p.grid {
        return Err(shape_err!("stage {} expects a {:?} grid, got {h}x{w}", p.index, p.grid));
    }
    let mut t = patch_embed(tape, store, x, &p.embed)?;
    for block in &p.blocks {
        t = cmt_block(tape, store, t, block)?;
    }
    let m = tape.to_map(t, h, w)?;
    hs_refine(tape, store, m, &p.refine)
}

/// Projection-shortcut block: `relu(T(x) + W_s x)` with
/// `T = conv3x3/stride(relu(conv1x1(x)))`.
#[derive(Clone, Debug)]
pub struct ResidualM {
    pub pwc: ConvLayer,
    pub conv: ConvLayer,
    pub shortcut: ConvLayer,
}

impl ResidualM {
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
    ) -> Result<Self> {
        Ok(ResidualM {
            pwc: ConvLayer::build(b, &format!("{prefix}.pwc"), c_in, c_out, 1, 1, 0, true)?,
            conv: ConvLayer::build(b, &format!("{prefix}.conv"), c_out, c_out, 3, stride, 1, true)?,
            shortcut: ConvLayer::build(b, &format!("{prefix}.shortcut"), c_in, c_out, 1, stride, 0, false)?,
        })
    }
}

pub fn residual_block_m<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, p: &ResidualM) -> Result<NodeId> {
    let h = p.pwc.apply(tape, store, x)?;
    let h = tape.relu(h)?;
    let t = p.conv.apply(tape, store, h)?;
    let s = p.shortcut.apply(tape, store, x)?;
    let y = tape.add(t, s)?;
    tape.relu(y)
}

/// Identity-shortcut block: `relu(conv3x3(relu(conv3x3(x))) + x)`.
#[derive(Clone, Debug)]
pub struct ResidualN {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
}

impl ResidualN {
    pub fn build<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, prefix: &str, c: usize) -> Result<Self> {
        Ok(ResidualN {
            conv1: ConvLayer::build(b, &format!("{prefix}.conv1"), c, c, 3, 1, 1, true)?,
            conv2: ConvLayer::build(b, &format!("{prefix}.conv2"), c, c, 3, 1, 1, true)?,
        })
    }
}

pub fn residual_block_n<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, p: &ResidualN) -> Result<NodeId> {
    let h = p.conv1.apply(tape, store, x)?;
    let h = tape.relu(h)?;
    let t = p.conv2.apply(tape, store, h)?;
    let y = tape.add(t, x)?;
    tape.relu(y)
}

#[derive(Clone, Debug)]
pub struct ResidualBranchParams {
    pub entry: ConvLayer,
    pub blocks: Vec<(ResidualM, ResidualN)>,
}

impl ResidualBranchParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, cfg: &ModelConfig) -> Result<Self> {
        let entry = ConvLayer::build(b, "residual.entry", cfg.input_channels, cfg.residual_dims[0], 3, 2, 1, true)?;
        let mut c_in = cfg.residual_dims[0];
        let mut blocks = Vec::with_capacity(4);
        for (i, &c_out) in cfg.residual_dims.iter().enumerate() {
            let m = ResidualM::build(b, &format!("residual.block{i}.m"), c_in, c_out, 2)?;
            let n = ResidualN::build(b, &format!("residual.block{i}.n"), c_out)?;
            blocks.push((m, n));
            c_in = c_out;
        }
        Ok(ResidualBranchParams { entry, blocks })
    }
}

/// 3×3/2 entry conv + ReLU, then four (M stride 2, N) pairs.
pub fn residual_branch<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, image: NodeId, p: &ResidualBranchParams) -> Result<NodeId> {
    let h = p.entry.apply(tape, store, image)?;
    let mut h = tape.relu(h)?;
    for (m, n) in &p.blocks {
        h = residual_block_m(tape, store, h, m)?;
        h = residual_block_n(tape, store, h, n)?;
    }
    Ok(h)
}

/// Channel concatenation, transformer stream first.
pub fn fme_fuse<T: Scalar>(tape: &mut Tape<T>, hscmt: NodeId, residual: NodeId) -> Result<NodeId> {
    let (a, b) = (tape.value(hscmt).dims4()?, tape.value(residual).dims4()?);
    if (a.0, a.2, a.3) != (b.0, b.2, b.3) {
        return Err(Error::Shape(format!(
            "fme_fuse spatial mismatch: hscmt {:?} vs residual {:?}",
            tape.shape(hscmt),
            tape.shape(residual)
        )));
    }
    tape.concat_channels(hscmt, residual)
}

#[derive(Clone, Debug)]
pub struct BackboneParams {
    pub stem: StemParams,
    pub stages: Vec<StageParams>,
    pub residual: ResidualBranchParams,
}

impl BackboneParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, cfg: &ModelConfig) -> Result<Self> {
        let stem = StemParams::build(b, cfg.input_channels, cfg.stem_width())?;
        let stages = (0..4).map(|i| StageParams::build(b, cfg, i)).collect::<Result<Vec<_>>>()?;
        let residual = ResidualBranchParams::build(b, cfg)?;
        Ok(BackboneParams { stem, stages, residual })
    }
}

/// Per-stage outputs of the transformer stream plus the residual and fused maps.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub stem: NodeId,
    pub stages: Vec<NodeId>,
    pub residual: NodeId,
    pub fused: NodeId,
}

pub fn backbone<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, image: NodeId, p: &BackboneParams) -> Result<FeaturePyramid> {
    let s = stem(tape, store, image, &p.stem)?;
    let mut h = s;
    let mut stages = Vec::with_capacity(p.stages.len());
    for stage in &p.stages {
        h = hscmt_stage(tape, store, h, stage)?;
        stages.push(h);
    }
    let residual = residual_branch(tape, store, image, &p.residual)?;
    let fused = fme_fuse(tape, h, residual)?;
    Ok(FeaturePyramid { stem: s, stages, residual, fused })
}
