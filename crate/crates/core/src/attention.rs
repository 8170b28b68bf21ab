//! Lightweight multi-head self-attention.
//!
//! Queries come from every token of the stage grid; keys and values are
//! first projected, then spatially reduced by a strided 3×3 depthwise
//! convolution, so the score matrix is `n × n'` with `n' ≈ n / stride²`.
//! A learnable relative position bias, indexed by the offset between a query
//! cell and a reduced key cell, is added to the scaled scores.

use std::cell::Cell;
use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{NodeId, Tape};
use crate::error::{shape_err, Error, Result};
use crate::ops::Conv2dSpec;
use crate::param::{Builder, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionConfig {
    pub dim: usize,
    pub heads: usize,
    pub kv_stride: usize,
    pub kv_kernel: usize,
    pub bias_enabled: bool,
    /// Reserved for a windowed variant; global attention ignores it.
    pub window: Option<usize>,
}

impl AttentionConfig {
    pub fn new(dim: usize, heads: usize, kv_stride: usize) -> Self {
        AttentionConfig { dim, heads, kv_stride, kv_kernel: 3, bias_enabled: true, window: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.kv_stride == 0 {
            return Err(Error::Config("attention dim, heads and kv_stride must be positive".into()));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("attention dim {} not divisible by {} heads", self.dim, self.heads)));
        }
        if self.kv_kernel != 3 {
            return Err(Error::Config(format!("kv reduction kernel must be 3, got {}", self.kv_kernel)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Reduced key/value grid for a `(h, w)` query grid.
    pub fn reduced_grid(&self, (h, w): (usize, usize)) -> (usize, usize) {
        (h.div_ceil(self.kv_stride), w.div_ceil(self.kv_stride))
    }
}

/// Index map from (query cell, reduced key cell) pairs into a per-head bias
/// table of `(2H-1) × (2W-1)` offsets.
///
/// A reduced key cell `(r, c)` sits at `(r·s, c·s)` on the query grid, so
/// every row/column offset lies in `[-(H-1), H-1]` × `[-(W-1), W-1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelativeBias {
    pub grid: (usize, usize),
    pub reduced: (usize, usize),
    pub stride: usize,
}

impl RelativeBias {
    pub fn new(grid: (usize, usize), stride: usize) -> Self {
        let reduced = (grid.0.div_ceil(stride), grid.1.div_ceil(stride));
        RelativeBias { grid, reduced, stride }
    }

    pub fn table_len(&self) -> usize {
        (2 * self.grid.0 - 1) * (2 * self.grid.1 - 1)
    }

    pub fn lookup(&self, query: (usize, usize), key: (usize, usize)) -> usize {
        let (h, w) = self.grid;
        let dr = query.0 as isize - (key.0 * self.stride) as isize + (h as isize - 1);
        let dc = query.1 as isize - (key.1 * self.stride) as isize + (w as isize - 1);
        debug_assert!(dr >= 0 && dc >= 0);
        dr as usize * (2 * w - 1) + dc as usize
    }

    /// Row-major `n × n'` table positions for head `head`, offset into a
    /// `[heads, table_len]` parameter.
    pub fn indices(&self, head: usize) -> Arc<[u32]> {
        let (h, w) = self.grid;
        let (rh, rw) = self.reduced;
        let base = head * self.table_len();
        let mut out = Vec::with_capacity(h * w * rh * rw);
        for qr in 0..h {
            for qc in 0..w {
                for kr in 0..rh {
                    for kc in 0..rw {
                        out.push((base + self.lookup((qr, qc), (kr, kc))) as u32);
                    }
                }
            }
        }
        out.into()
    }
}

thread_local! {
    static LARGEST_SCORES: Cell<usize> = const { Cell::new(0) };
}

/// Largest attention score matrix (in elements) built on this thread since
/// the last [`reset_score_probe`].
pub fn score_probe() -> usize {
    LARGEST_SCORES.with(Cell::get)
}

pub fn reset_score_probe() {
    LARGEST_SCORES.with(|c| c.set(0));
}

fn record_scores(elems: usize) {
    LARGEST_SCORES.with(|c| c.set(c.get().max(elems)));
}

#[derive(Clone, Debug)]
pub struct LmhsaParams {
    pub cfg: AttentionConfig,
    pub grid: (usize, usize),
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub k_reduce: ParamId,
    pub v_reduce: ParamId,
    pub rel_bias: Option<ParamId>,
    bias_index: Vec<Arc<[u32]>>,
}

impl LmhsaParams {
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        prefix: &str,
        cfg: AttentionConfig,
        grid: (usize, usize),
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let wq = b.linear(&format!("{prefix}.wq"), d, d)?;
        let wk = b.linear(&format!("{prefix}.wk"), d, d)?;
        let wv = b.linear(&format!("{prefix}.wv"), d, d)?;
        let k_reduce = b.conv(&format!("{prefix}.k_reduce"), d, 1, 3, 3)?;
        let v_reduce = b.conv(&format!("{prefix}.v_reduce"), d, 1, 3, 3)?;
        let wo = b.linear(&format!("{prefix}.wo"), d, d)?;
        let rb = RelativeBias::new(grid, cfg.kv_stride);
        let (rel_bias, bias_index) = if cfg.bias_enabled {
            let id = b.relative_bias(&format!("{prefix}.rel_bias"), &[cfg.heads, rb.table_len()])?;
            (Some(id), (0..cfg.heads).map(|h| rb.indices(h)).collect())
        } else {
            (None, Vec::new())
        };
        Ok(LmhsaParams { cfg, grid, wq, wk, wv, wo, k_reduce, v_reduce, rel_bias, bias_index })
    }

    /// Number of scalars registered by [`LmhsaParams::build`].
    pub fn param_count(cfg: &AttentionConfig, grid: (usize, usize)) -> usize {
        let d = cfg.dim;
        let bias = if cfg.bias_enabled { cfg.heads * RelativeBias::new(grid, cfg.kv_stride).table_len() } else { 0 };
        4 * d * d + 2 * d * 9 + bias
    }
}

/// Three bias-free projections `x·Wᵀ` of `n × d` tokens.
pub fn qkv_project<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
) -> Result<(NodeId, NodeId, NodeId)> {
    Ok((tape.linear(x, wq, None)?, tape.linear(x, wk, None)?, tape.linear(x, wv, None)?))
}

/// Depthwise 3×3 reduction (stride `kv_stride`, padding 1) of key and value
/// tokens on their `(h, w)` grid. Returns the reduced tokens.
pub fn reduce_kv<T: Scalar>(
    tape: &mut Tape<T>,
    k: NodeId,
    v: NodeId,
    grid: (usize, usize),
    cfg: &AttentionConfig,
    k_kernel: NodeId,
    v_kernel: NodeId,
) -> Result<(NodeId, NodeId)> {
    let (n, d) = tape.value(k).dims2()?;
    if n != grid.0 * grid.1 {
        return Err(shape_err!("{n} tokens do not match a {}x{} grid", grid.0, grid.1));
    }
    if tape.shape(v) != tape.shape(k) {
        return Err(shape_err!("key {:?} and value {:?} shapes differ", tape.shape(k), tape.shape(v)));
    }
    let spec = Conv2dSpec::depthwise(d, cfg.kv_stride, 1);
    let mut reduce = |t: NodeId, kernel: NodeId| -> Result<NodeId> {
        let m = tape.to_map(t, grid.0, grid.1)?;
        let r = tape.conv2d(m, kernel, None, spec)?;
        tape.to_tokens(r)
    };
    Ok((reduce(k, k_kernel)?, reduce(v, v_kernel)?))
}

/// `softmax(q·k'ᵀ/√d_k + B)·v'` for one head; `bias` is the head's slice of
/// the relative table given as (table node, index map).
pub fn light_attention<T: Scalar>(
    tape: &mut Tape<T>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    bias: Option<(NodeId, Arc<[u32]>)>,
) -> Result<NodeId> {
    let (n, dk) = tape.value(q).dims2()?;
    let (nk, dk2) = tape.value(k).dims2()?;
    let (nv, _) = tape.value(v).dims2()?;
    if dk != dk2 || nk != nv {
        return Err(shape_err!(
            "attention shapes q {:?}, k {:?}, v {:?} are incompatible",
            tape.shape(q),
            tape.shape(k),
            tape.shape(v)
        ));
    }
    record_scores(n * nk);
    let scores = tape.matmul_nt(q, k)?;
    let scale = T::one() / T::from_usize_lossy(dk).sqrt();
    let probs = tape.biased_softmax(scores, scale, bias)?;
    tape.matmul(probs, v)
}

/// Full multi-head block on `n × d` tokens laid out on `params.grid`.
pub fn lmhsa<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: NodeId, params: &LmhsaParams) -> Result<NodeId> {
    let cfg = &params.cfg;
    let (_, d) = tape.value(x).dims2()?;
    if d != cfg.dim {
        return Err(shape_err!("lmhsa expects dim {}, tokens have {d}", cfg.dim));
    }
    let wq = tape.param(store, params.wq)?;
    let wk = tape.param(store, params.wk)?;
    let wv = tape.param(store, params.wv)?;
    let (q, k, v) = qkv_project(tape, x, wq, wk, wv)?;
    let kk = tape.param(store, params.k_reduce)?;
    let vk = tape.param(store, params.v_reduce)?;
    let (k, v) = reduce_kv(tape, k, v, params.grid, cfg, kk, vk)?;
    let table = params.rel_bias.map(|id| tape.param(store, id)).transpose()?;

    let dk = cfg.head_dim();
    let mut merged: Option<NodeId> = None;
    for h in 0..cfg.heads {
        let (qh, kh, vh) = if cfg.heads == 1 {
            (q, k, v)
        } else {
            (tape.slice(q, 1, h * dk, dk)?, tape.slice(k, 1, h * dk, dk)?, tape.slice(v, 1, h * dk, dk)?)
        };
        let bias = table.map(|t| (t, params.bias_index[h].clone()));
        let out = light_attention(tape, qh, kh, vh, bias)?;
        merged = Some(match merged {
            None => out,
            Some(m) => tape.concat(m, out, 1)?,
        });
    }
    let wo = tape.param(store, params.wo)?;
    tape.linear(merged.expect("at least one head"), wo, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(AttentionConfig::new(8, 3, 2).validate().is_err());
        assert!(AttentionConfig::new(8, 2, 0).validate().is_err());
        assert!(AttentionConfig::new(8, 2, 2).validate().is_ok());
    }

    #[test]
    fn reduced_grid_rounds_up() {
        let c = AttentionConfig::new(8, 2, 2);
        assert_eq!(c.reduced_grid((4, 4)), (2, 2));
        assert_eq!(c.reduced_grid((7, 5)), (4, 3));
        assert_eq!(c.reduced_grid((1, 1)), (1, 1));
    }

    #[test]
    fn bias_lookup_is_total_and_in_range() {
        for &(h, w, s) in &[(4, 4, 2), (5, 3, 2), (7, 7, 1), (1, 1, 2), (6, 2, 3)] {
            let rb = RelativeBias::new((h, w), s);
            let idx = rb.indices(0);
            assert_eq!(idx.len(), h * w * rb.reduced.0 * rb.reduced.1);
            assert!(idx.iter().all(|&i| (i as usize) < rb.table_len()));
        }
    }

    #[test]
    fn bias_lookup_depends_only_on_offset() {
        let rb = RelativeBias::new((5, 5), 1);
        assert_eq!(rb.lookup((1, 1), (0, 0)), rb.lookup((3, 4), (2, 3)));
        assert_ne!(rb.lookup((1, 1), (0, 0)), rb.lookup((0, 0), (1, 1)));
    }
}
