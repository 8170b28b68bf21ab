//! Layer normalization over one axis (the channel axis of the layout in use).

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{split_axis, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-position statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct NormStats<T> {
    /// Normalized input before the affine transform.
    pub xhat: Tensor<T>,
    /// `1 / sqrt(var + eps)` per `(outer, inner)` position.
    pub rstd: Vec<T>,
}

pub fn layer_norm_with_stats<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    axis: usize,
) -> Result<(Tensor<T>, NormStats<T>)> {
    let (outer, extent, inner) = split_axis(x.shape(), axis)?;
    if gamma.len() != extent || beta.len() != extent {
        return Err(shape_err!(
            "layer_norm affine lengths {}/{} do not match channel extent {extent}",
            gamma.len(),
            beta.len()
        ));
    }
    let xd = x.data();
    let (gd, bd) = (gamma.data(), beta.data());
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(outer * inner);
    let inv_n = T::one() / T::from_usize_lossy(extent);
    let eps = T::lit(LAYER_NORM_EPS);
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| (o * extent + a) * inner + i;
            let mut mean = T::zero();
            for a in 0..extent {
                mean += xd[at(a)];
            }
            mean *= inv_n;
            let mut var = T::zero();
            for a in 0..extent {
                let d = xd[at(a)] - mean;
                var += d * d;
            }
            var *= inv_n;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for a in 0..extent {
                let h = (xd[at(a)] - mean) * r;
                xhat[at(a)] = h;
                out[at(a)] = h * gd[a] + bd[a];
            }
        }
    }
    Ok((
        Tensor::from_parts(x.shape(), out)?,
        NormStats { xhat: Tensor::from_parts(x.shape(), xhat)?, rstd },
    ))
}

pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    axis: usize,
) -> Result<Tensor<T>> {
    layer_norm_with_stats(x, gamma, beta, axis).map(|(y, _)| y)
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn layer_norm_backward<T: Scalar>(
    stats: &NormStats<T>,
    gamma: &Tensor<T>,
    axis: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let shape = stats.xhat.shape();
    let (outer, extent, inner) = split_axis(shape, axis)?;
    let (hd, gd, gam) = (stats.xhat.data(), grad_out.data(), gamma.data());
    let mut gx = vec![T::zero(); hd.len()];
    let mut ggamma = vec![T::zero(); extent];
    let mut gbeta = vec![T::zero(); extent];
    let inv_n = T::one() / T::from_usize_lossy(extent);
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| (o * extent + a) * inner + i;
            let r = stats.rstd[o * inner + i];
            let mut mean_g = T::zero();
            let mut mean_gh = T::zero();
            for a in 0..extent {
                let (h, g) = (hd[at(a)], gd[at(a)]);
                ggamma[a] += g * h;
                gbeta[a] += g;
                let gh = g * gam[a];
                mean_g += gh;
                mean_gh += gh * h;
            }
            mean_g *= inv_n;
            mean_gh *= inv_n;
            for a in 0..extent {
                let gh = gd[at(a)] * gam[a];
                gx[at(a)] = r * (gh - mean_g - hd[at(a)] * mean_gh);
            }
        }
    }
    Ok((
        Tensor::from_parts(shape, gx)?,
        Tensor::from_parts(&[extent], ggamma)?,
        Tensor::from_parts(&[extent], gbeta)?,
    ))
}
