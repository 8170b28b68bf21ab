//! Direct 2-D cross-correlation over NCHW maps, with groups.

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2dSpec {
    pub const fn new(stride: usize, padding: usize) -> Self {
        Conv2dSpec { stride, padding, groups: 1 }
    }

    /// Depthwise: one filter per channel.
    pub const fn depthwise(channels: usize, stride: usize, padding: usize) -> Self {
        Conv2dSpec { stride, padding, groups: channels }
    }
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec::new(1, 0)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvGeom {
    fn in_per_group(&self) -> usize {
        self.c_in / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.c_out / self.groups
    }

    /// Output columns `ox` whose input column `ox*stride + kx - pad` is in range.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        axis_range(kx, self.pad, self.stride, self.w, self.ow)
    }

    #[inline]
    fn row_range(&self, ky: usize) -> (usize, usize) {
        axis_range(ky, self.pad, self.stride, self.h, self.oh)
    }
}

#[inline]
fn axis_range(k: usize, pad: usize, stride: usize, extent: usize, out: usize) -> (usize, usize) {
    // need 0 <= o*stride + k - pad < extent
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if extent + pad > k { ((extent + pad - k - 1) / stride + 1).min(out) } else { 0 };
    (lo, hi.max(lo))
}

pub(crate) fn conv_geometry(x: &[usize], k: &[usize], spec: Conv2dSpec) -> Result<ConvGeom> {
    let [n, c_in, h, w] = *x else {
        return Err(shape_err!("conv2d input must be NCHW, got {x:?}"));
    };
    let [c_out, k_in, kh, kw] = *k else {
        return Err(shape_err!("conv2d kernel must be (out, in/groups, kh, kw), got {k:?}"));
    };
    if spec.stride == 0 || spec.groups == 0 {
        return Err(Error::Config("conv2d stride and groups must be positive".into()));
    }
    if c_in % spec.groups != 0 || c_out % spec.groups != 0 {
        return Err(Error::Config(format!(
            "conv2d channels in={c_in} out={c_out} not divisible by groups={}",
            spec.groups
        )));
    }
    if k_in != c_in / spec.groups {
        return Err(shape_err!(
            "conv2d kernel {k:?} expects {} input channels per group, input {x:?} with groups={} gives {}",
            k_in,
            spec.groups,
            c_in / spec.groups
        ));
    }
    let (hp, wp) = (h + 2 * spec.padding, w + 2 * spec.padding);
    if hp < kh || wp < kw {
        return Err(shape_err!(
            "conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        ));
    }
    Ok(ConvGeom {
        n,
        c_in,
        h,
        w,
        c_out,
        kh,
        kw,
        oh: (hp - kh) / spec.stride + 1,
        ow: (wp - kw) / spec.stride + 1,
        stride: spec.stride,
        pad: spec.padding,
        groups: spec.groups,
    })
}

/// Cross-correlation (no kernel flip) plus optional per-channel bias.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: Conv2dSpec,
) -> Result<Tensor<T>> {
    let g = conv_geometry(x.shape(), kernel.shape(), spec)?;
    if let Some(b) = bias {
        if b.len() != g.c_out {
            return Err(shape_err!("conv2d bias has {} entries, need {}", b.len(), g.c_out));
        }
    }
    if g.stride == 1 {
        return conv2d_unit_stride(&g, x.data(), kernel.data(), bias.map(|b| b.data()));
    }
    let (xd, kd) = (x.data(), kernel.data());
    let plane_in = g.h * g.w;
    let plane_out = g.oh * g.ow;
    let (ipg, opg) = (g.in_per_group(), g.out_per_group());
    let mut out = vec![T::zero(); g.n * g.c_out * plane_out];

    for ni in 0..g.n {
        for oc in 0..g.c_out {
            let grp = oc / opg;
            let o = &mut out[(ni * g.c_out + oc) * plane_out..][..plane_out];
            if let Some(b) = bias {
                o.fill(b.data()[oc]);
            }
            for icg in 0..ipg {
                let ic = grp * ipg + icg;
                let xin = &xd[(ni * g.c_in + ic) * plane_in..][..plane_in];
                let kbase = (oc * ipg + icg) * g.kh * g.kw;
                for ky in 0..g.kh {
                    let (oy0, oy1) = g.row_range(ky);
                    for kx in 0..g.kw {
                        let wv = kd[kbase + ky * g.kw + kx];
                        let (ox0, ox1) = g.col_range(kx);
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let orow = &mut o[oy * g.ow + ox0..oy * g.ow + ox1];
                            let ix0 = ox0 * g.stride + kx - g.pad;
                            let irow = &xin[iy * g.w..(iy + 1) * g.w];
                            if g.stride == 1 {
                                axpy(wv, &irow[ix0..ix0 + orow.len()], orow);
                            } else {
                                for (j, ov) in orow.iter_mut().enumerate() {
                                    *ov += wv * irow[ix0 + j * g.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(&[g.n, g.c_out, g.oh, g.ow], out)
}

/// Gradients of [`conv2d`] with respect to input, kernel and (if present) bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    with_bias: bool,
    spec: Conv2dSpec,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Option<Tensor<T>>)> {
    let g = conv_geometry(x.shape(), kernel.shape(), spec)?;
    let plane_in = g.h * g.w;
    let plane_out = g.oh * g.ow;
    if grad_out.shape() != [g.n, g.c_out, g.oh, g.ow] {
        return Err(shape_err!("conv2d grad_out shape {:?} mismatch", grad_out.shape()));
    }
    if g.stride == 1 {
        let (gx, gk, gb) = conv2d_unit_stride_backward(&g, x.data(), kernel.data(), grad_out.data(), with_bias);
        return Ok((
            Tensor::from_parts(x.shape(), gx)?,
            Tensor::from_parts(kernel.shape(), gk)?,
            gb.map(|v| Tensor::from_parts(&[g.c_out], v)).transpose()?,
        ));
    }
    let (xd, kd, gd) = (x.data(), kernel.data(), grad_out.data());
    let (ipg, opg) = (g.in_per_group(), g.out_per_group());
    let mut gx = vec![T::zero(); x.len()];
    let mut gk = vec![T::zero(); kernel.len()];
    let mut gb = with_bias.then(|| vec![T::zero(); g.c_out]);

    for ni in 0..g.n {
        for oc in 0..g.c_out {
            let grp = oc / opg;
            let go = &gd[(ni * g.c_out + oc) * plane_out..][..plane_out];
            if let Some(gb) = gb.as_mut() {
                gb[oc] += sum(go);
            }
            for icg in 0..ipg {
                let ic = grp * ipg + icg;
                let xoff = (ni * g.c_in + ic) * plane_in;
                let xin = &xd[xoff..xoff + plane_in];
                let gxin = &mut gx[xoff..xoff + plane_in];
                let kbase = (oc * ipg + icg) * g.kh * g.kw;
                for ky in 0..g.kh {
                    let (oy0, oy1) = g.row_range(ky);
                    for kx in 0..g.kw {
                        let kidx = kbase + ky * g.kw + kx;
                        let wv = kd[kidx];
                        let (ox0, ox1) = g.col_range(kx);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let mut acc = T::zero();
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let grow = &go[oy * g.ow + ox0..oy * g.ow + ox1];
                            let ix0 = ox0 * g.stride + kx - g.pad;
                            let rs = iy * g.w;
                            if g.stride == 1 {
                                let len = grow.len();
                                acc += dot(grow, &xin[rs + ix0..rs + ix0 + len]);
                                axpy(wv, grow, &mut gxin[rs + ix0..rs + ix0 + len]);
                            } else {
                                for (j, &gv) in grow.iter().enumerate() {
                                    let ix = rs + ix0 + j * g.stride;
                                    acc += gv * xin[ix];
                                    gxin[ix] += wv * gv;
                                }
                            }
                        }
                        gk[kidx] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_parts(x.shape(), gx)?,
        Tensor::from_parts(kernel.shape(), gk)?,
        gb.map(|v| Tensor::from_parts(&[g.c_out], v)).transpose()?,
    ))
}

/// Zero-padded copy of one input plane, `(h + 2p) × (w + 2p)`.
fn pad_plane<T: Scalar>(src: &[T], g: &ConvGeom, dst: &mut [T]) {
    let wp = g.w + 2 * g.pad;
    dst.fill(T::zero());
    for y in 0..g.h {
        let row = (y + g.pad) * wp + g.pad;
        dst[row..row + g.w].copy_from_slice(&src[y * g.w..(y + 1) * g.w]);
    }
}

// Stride-1 convolution on "wide" rows: with the input padded to width
// wp = w + 2p, output (oy, ox) reads padded input (oy + ky, ox + kx), so each
// kernel tap is a single contiguous axpy of length (oh - 1)·wp + ow over
// an output buffer with row stride wp. Columns ow..wp of that buffer are
// scratch and are dropped when compacting.
fn conv2d_unit_stride<T: Scalar>(g: &ConvGeom, xd: &[T], kd: &[T], bias: Option<&[T]>) -> Result<Tensor<T>> {
    let (hp, wp) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    let span = (g.oh - 1) * wp + g.ow;
    let wide_plane = g.oh * wp;
    let (ipg, opg) = (g.in_per_group(), g.out_per_group());
    let taps = g.kh * g.kw;
    let mut xp = vec![T::zero(); hp * wp];
    let mut wide = vec![T::zero(); g.c_out * wide_plane];
    let mut out = vec![T::zero(); g.n * g.c_out * g.oh * g.ow];
    for ni in 0..g.n {
        wide.fill(T::zero());
        for ic in 0..g.c_in {
            let (grp, icg) = (ic / ipg, ic % ipg);
            pad_plane(&xd[(ni * g.c_in + ic) * g.h * g.w..][..g.h * g.w], g, &mut xp);
            for oc in grp * opg..(grp + 1) * opg {
                let o = &mut wide[oc * wide_plane..][..span];
                let kbase = (oc * ipg + icg) * taps;
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        axpy(kd[kbase + ky * g.kw + kx], &xp[ky * wp + kx..][..span], o);
                    }
                }
            }
        }
        for oc in 0..g.c_out {
            let b = bias.map_or(T::zero(), |b| b[oc]);
            let dst = &mut out[(ni * g.c_out + oc) * g.oh * g.ow..][..g.oh * g.ow];
            for oy in 0..g.oh {
                let src = &wide[oc * wide_plane + oy * wp..][..g.ow];
                for (d, &v) in dst[oy * g.ow..(oy + 1) * g.ow].iter_mut().zip(src) {
                    *d = v + b;
                }
            }
        }
    }
    Tensor::from_parts(&[g.n, g.c_out, g.oh, g.ow], out)
}

#[allow(clippy::type_complexity)]
fn conv2d_unit_stride_backward<T: Scalar>(
    g: &ConvGeom,
    xd: &[T],
    kd: &[T],
    gd: &[T],
    with_bias: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let (hp, wp) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    let span = (g.oh - 1) * wp + g.ow;
    let wide_plane = g.oh * wp;
    let (ipg, opg) = (g.in_per_group(), g.out_per_group());
    let taps = g.kh * g.kw;
    let mut xp = vec![T::zero(); hp * wp];
    let mut gxp = vec![T::zero(); hp * wp];
    let mut gwide = vec![T::zero(); g.c_out * wide_plane];
    let mut gx = vec![T::zero(); g.n * g.c_in * g.h * g.w];
    let mut gk = vec![T::zero(); kd.len()];
    let mut gb = with_bias.then(|| vec![T::zero(); g.c_out]);
    for ni in 0..g.n {
        // scratch columns stay zero so they contribute nothing below
        gwide.fill(T::zero());
        for oc in 0..g.c_out {
            let src = &gd[(ni * g.c_out + oc) * g.oh * g.ow..][..g.oh * g.ow];
            if let Some(gb) = gb.as_mut() {
                gb[oc] += sum(src);
            }
            for oy in 0..g.oh {
                gwide[oc * wide_plane + oy * wp..][..g.ow].copy_from_slice(&src[oy * g.ow..(oy + 1) * g.ow]);
            }
        }
        for ic in 0..g.c_in {
            let (grp, icg) = (ic / ipg, ic % ipg);
            pad_plane(&xd[(ni * g.c_in + ic) * g.h * g.w..][..g.h * g.w], g, &mut xp);
            gxp.fill(T::zero());
            for oc in grp * opg..(grp + 1) * opg {
                let go = &gwide[oc * wide_plane..][..span];
                let kbase = (oc * ipg + icg) * taps;
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let k = kbase + ky * g.kw + kx;
                        let off = ky * wp + kx;
                        gk[k] += dot(go, &xp[off..off + span]);
                        axpy(kd[k], go, &mut gxp[off..off + span]);
                    }
                }
            }
            let dst = &mut gx[(ni * g.c_in + ic) * g.h * g.w..][..g.h * g.w];
            for y in 0..g.h {
                let row = (y + g.pad) * wp + g.pad;
                dst[y * g.w..(y + 1) * g.w].copy_from_slice(&gxp[row..row + g.w]);
            }
        }
    }
    (gx, gk, gb)
}

#[inline]
pub(crate) fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn sum<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut c = a.chunks_exact(8);
    for x in &mut c {
        for l in 0..8 {
            acc[l] += x[l];
        }
    }
    let tail: T = c.remainder().iter().copied().sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
