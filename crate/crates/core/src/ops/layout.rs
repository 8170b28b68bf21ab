//! Axis concatenation/slicing and map <-> token layout conversion.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{split_axis, Tensor};

/// Concatenates `a` then `b` along `axis`; all other extents must agree.
pub fn concat_axis<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    let compatible = sa.len() == sb.len()
        && axis < sa.len()
        && sa.iter().zip(sb).enumerate().all(|(i, (x, y))| i == axis || x == y);
    if !compatible {
        return Err(shape_err!("cannot concatenate {sa:?} and {sb:?} along axis {axis}"));
    }
    let (outer, ea, inner) = split_axis(sa, axis)?;
    let eb = sb[axis];
    let mut out = Vec::with_capacity(a.len() + b.len());
    for o in 0..outer {
        out.extend_from_slice(&a.data()[o * ea * inner..(o + 1) * ea * inner]);
        out.extend_from_slice(&b.data()[o * eb * inner..(o + 1) * eb * inner]);
    }
    let mut shape = sa.to_vec();
    shape[axis] = ea + eb;
    Tensor::from_parts(&shape, out)
}

/// Channels (axis 1) of two NCHW maps, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (na, _, ha, wa) = a.dims4()?;
    let (nb, _, hb, wb) = b.dims4()?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(shape_err!(
            "concat_channels needs equal batch/spatial extents, got {:?} and {:?}",
            a.shape(),
            b.shape()
        ));
    }
    concat_axis(a, b, 1)
}

/// Entries `start..start+len` along `axis`.
pub fn slice_axis<T: Scalar>(x: &Tensor<T>, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
    let (outer, extent, inner) = split_axis(x.shape(), axis)?;
    if start + len > extent {
        return Err(shape_err!("slice {start}..{} out of range for extent {extent}", start + len));
    }
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * extent + start) * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    Tensor::from_parts(&shape, out)
}

/// Adds `g` into the `start..` window along `axis` of `acc` (slice backward).
pub(crate) fn scatter_axis<T: Scalar>(acc: &mut Tensor<T>, g: &Tensor<T>, axis: usize, start: usize) -> Result<()> {
    let (outer, extent, inner) = split_axis(acc.shape(), axis)?;
    let len = g.shape()[axis];
    let d = acc.data_mut();
    for o in 0..outer {
        let base = (o * extent + start) * inner;
        for (v, &gv) in d[base..base + len * inner].iter_mut().zip(&g.data()[o * len * inner..]) {
            *v += gv;
        }
    }
    Ok(())
}

/// `[1, C, H, W]` map to `[H*W, C]` tokens.
pub fn map_to_tokens<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if n != 1 {
        return Err(shape_err!("token layout holds a single sample, got batch {n}"));
    }
    let hw = h * w;
    let d = x.data();
    let mut out = vec![T::zero(); hw * c];
    for ch in 0..c {
        for p in 0..hw {
            out[p * c + ch] = d[ch * hw + p];
        }
    }
    Tensor::from_parts(&[hw, c], out)
}

/// `[H*W, C]` tokens to a `[1, C, H, W]` map.
pub fn tokens_to_map<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (n, c) = x.dims2()?;
    if n != h * w {
        return Err(shape_err!("{n} tokens do not form a {h}x{w} grid"));
    }
    let d = x.data();
    let mut out = vec![T::zero(); n * c];
    for p in 0..n {
        for ch in 0..c {
            out[ch * n + p] = d[p * c + ch];
        }
    }
    Tensor::from_parts(&[1, c, h, w], out)
}

/// Mean over `axis`, keeping it with extent 1.
pub fn mean_axis<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, extent, inner) = split_axis(x.shape(), axis)?;
    let inv = T::one() / T::from_usize_lossy(extent);
    let d = x.data();
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        for a in 0..extent {
            let row = &d[(o * extent + a) * inner..][..inner];
            for (v, &x) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                *v += x;
            }
        }
    }
    for v in &mut out {
        *v *= inv;
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = 1;
    Tensor::from_parts(&shape, out)
}
