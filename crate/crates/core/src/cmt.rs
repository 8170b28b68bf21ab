//! CMT block: local perception unit, pre-norm lightweight attention and an
//! inverted residual feed-forward network, each with a skip connection.
//!
//! ```text
//! y   = LPU(x)              = DWConv3x3(x) + x
//! z   = LMHSA(LN(y)) + y
//! out = IRFFN(LN(z)) + z
//! ```

use rand::Rng;

use crate::attention::{lmhsa, AttentionConfig, LmhsaParams};
use crate::autodiff::{NodeId, Tape};
use crate::error::{shape_err, Error, Result};
use crate::ops::Conv2dSpec;
use crate::param::{Builder, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CmtBlockConfig {
    pub dim: usize,
    pub heads: usize,
    pub irffn_ratio: usize,
    pub kv_stride: usize,
}

impl CmtBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.irffn_ratio == 0 {
            return Err(Error::Config("irffn ratio must be at least 1".into()));
        }
        self.attention().validate()
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig::new(self.dim, self.heads, self.kv_stride)
    }
}

#[derive(Clone, Debug)]
pub struct IrffnParams {
    pub expand_w: ParamId,
    pub expand_b: ParamId,
    pub dw: ParamId,
    pub project_w: ParamId,
    pub project_b: ParamId,
    pub hidden: usize,
}

impl IrffnParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, prefix: &str, dim: usize, ratio: usize) -> Result<Self> {
        let hidden = dim * ratio;
        Ok(IrffnParams {
            expand_w: b.linear(&format!("{prefix}.expand.weight"), hidden, dim)?,
            expand_b: b.bias(&format!("{prefix}.expand.bias"), hidden)?,
            dw: b.conv(&format!("{prefix}.dw.weight"), hidden, 1, 3, 3)?,
            project_w: b.linear(&format!("{prefix}.project.weight"), dim, hidden)?,
            project_b: b.bias(&format!("{prefix}.project.bias"), dim)?,
            hidden,
        })
    }

    pub fn param_count(dim: usize, ratio: usize) -> usize {
        let hidden = dim * ratio;
        hidden * dim + hidden + hidden * 9 + dim * hidden + dim
    }
}

#[derive(Clone, Debug)]
pub struct CmtBlockParams {
    pub cfg: CmtBlockConfig,
    pub grid: (usize, usize),
    pub lpu: ParamId,
    pub norm1: (ParamId, ParamId),
    pub attn: LmhsaParams,
    pub norm2: (ParamId, ParamId),
    pub ffn: IrffnParams,
}

impl CmtBlockParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        prefix: &str,
        cfg: CmtBlockConfig,
        grid: (usize, usize),
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(CmtBlockParams {
            cfg,
            grid,
            lpu: b.conv(&format!("{prefix}.lpu.weight"), cfg.dim, 1, 3, 3)?,
            norm1: b.norm(&format!("{prefix}.norm1"), cfg.dim)?,
            attn: LmhsaParams::build(b, &format!("{prefix}.lmhsa"), cfg.attention(), grid)?,
            norm2: b.norm(&format!("{prefix}.norm2"), cfg.dim)?,
            ffn: IrffnParams::build(b, &format!("{prefix}.irffn"), cfg.dim, cfg.irffn_ratio)?,
        })
    }

    pub fn param_count(cfg: &CmtBlockConfig, grid: (usize, usize)) -> usize {
        cfg.dim * 9 + 4 * cfg.dim + LmhsaParams::param_count(&cfg.attention(), grid) + IrffnParams::param_count(cfg.dim, cfg.irffn_ratio)
    }
}

/// `DWConv3x3(x) + x` on a `[1, C, H, W]` map.
pub fn lpu<T: Scalar>(tape: &mut Tape<T>, x: NodeId, dw_kernel: NodeId) -> Result<NodeId> {
    let (_, c, _, _) = tape.value(x).dims4()?;
    let kc = tape.shape(dw_kernel)[0];
    if kc != c || tape.shape(dw_kernel)[1..] != [1, 3, 3] {
        return Err(shape_err!("lpu kernel {:?} does not match {c} channels", tape.shape(dw_kernel)));
    }
    let local = tape.conv2d(x, dw_kernel, None, Conv2dSpec::depthwise(c, 1, 1))?;
    tape.add(local, x)
}

/// Pointwise expand → GELU → (DWConv3x3 + skip) → GELU → pointwise project,
/// on `n × d` tokens laid out on `grid`.
pub fn irffn<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    grid: (usize, usize),
    p: &IrffnParams,
) -> Result<NodeId> {
    let (n, _) = tape.value(x).dims2()?;
    if n != grid.0 * grid.1 {
        return Err(shape_err!("{n} tokens do not match a {}x{} grid", grid.0, grid.1));
    }
    let ew = tape.param(store, p.expand_w)?;
    let eb = tape.param(store, p.expand_b)?;
    let h = tape.linear(x, ew, Some(eb))?;
    let h = tape.gelu(h)?;
    let m = tape.to_map(h, grid.0, grid.1)?;
    let dw = tape.param(store, p.dw)?;
    let local = tape.conv2d(m, dw, None, Conv2dSpec::depthwise(p.hidden, 1, 1))?;
    let m = tape.add(local, m)?;
    let h = tape.to_tokens(m)?;
    let h = tape.gelu(h)?;
    let pw = tape.param(store, p.project_w)?;
    let pb = tape.param(store, p.project_b)?;
    tape.linear(h, pw, Some(pb))
}

/// Intermediate nodes of one block, for inspection.
#[derive(Clone, Copy, Debug)]
pub struct CmtTrace {
    pub y: NodeId,
    pub z: NodeId,
    pub ffn: NodeId,
    pub out: NodeId,
}

pub fn cmt_block_traced<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    x: NodeId,
    p: &CmtBlockParams,
) -> Result<CmtTrace> {
    let (h, w) = p.grid;
    let (n, d) = tape.value(x).dims2()?;
    if n != h * w || d != p.cfg.dim {
        return Err(shape_err!("cmt block expects {}x{} tokens, got {:?}", h * w, p.cfg.dim, tape.shape(x)));
    }
    let map = tape.to_map(x, h, w)?;
    let k = tape.param(store, p.lpu)?;
    let y = lpu(tape, map, k)?;
    let y = tape.to_tokens(y)?;

    let (g1, b1) = (tape.param(store, p.norm1.0)?, tape.param(store, p.norm1.1)?);
    let yn = tape.layer_norm(y, g1, b1, 1)?;
    let a = lmhsa(tape, store, yn, &p.attn)?;
    let z = tape.add(a, y)?;

    let (g2, b2) = (tape.param(store, p.norm2.0)?, tape.param(store, p.norm2.1)?);
    let zn = tape.layer_norm(z, g2, b2, 1)?;
    let ffn = irffn(tape, store, zn, p.grid, &p.ffn)?;
    let out = tape.add(ffn, z)?;
    Ok(CmtTrace { y, z, ffn, out })
}

/// One block on `n × d` tokens.
pub fn cmt_block<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, p: &CmtBlockParams) -> Result<NodeId> {
    cmt_block_traced(tape, store, x, p).map(|t| t.out)
}

/// One block on a `[1, d, H, W]` map.
pub fn cmt_block_map<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, p: &CmtBlockParams) -> Result<NodeId> {
    let t = tape.to_tokens(x)?;
    let out = cmt_block(tape, store, t, p)?;
    tape.to_map(out, p.grid.0, p.grid.1)
}
