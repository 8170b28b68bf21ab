//! Max and average pooling over square windows (no padding).

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn pool_dims(shape: &[usize], window: usize, stride: usize) -> Result<(usize, usize, usize, usize, usize)> {
    let [n, c, h, w] = *shape else {
        return Err(shape_err!("pooling input must be NCHW, got {shape:?}"));
    };
    if window == 0 || stride == 0 {
        return Err(shape_err!("pooling window and stride must be positive"));
    }
    if window > h || window > w {
        return Err(shape_err!("pooling window {window} larger than input {h}x{w}"));
    }
    Ok((n * c, h, w, (h - window) / stride + 1, (w - window) / stride + 1))
}

/// Returns the pooled map and, per output cell, the flat input index of the
/// selected maximum (first on ties), which the backward pass routes to.
pub fn max_pool2d_with_indices<T: Scalar>(
    x: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (planes, h, w, oh, ow) = pool_dims(x.shape(), window, stride)?;
    let xd = x.data();
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for dy in 0..window {
                    let row = base + (oy * stride + dy) * w + ox * stride;
                    for idx in row..row + window {
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                }
                out.push(xd[best]);
                arg.push(best);
            }
        }
    }
    let (n, c) = (x.shape()[0], x.shape()[1]);
    Ok((Tensor::from_parts(&[n, c, oh, ow], out)?, arg))
}

pub fn max_pool2d<T: Scalar>(x: &Tensor<T>, window: usize, stride: usize) -> Result<Tensor<T>> {
    max_pool2d_with_indices(x, window, stride).map(|(t, _)| t)
}

pub fn avg_pool2d<T: Scalar>(x: &Tensor<T>, window: usize, stride: usize) -> Result<Tensor<T>> {
    let (planes, h, w, oh, ow) = pool_dims(x.shape(), window, stride)?;
    let xd = x.data();
    let inv = T::one() / T::from_usize_lossy(window * window);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for dy in 0..window {
                    let row = base + (oy * stride + dy) * w + ox * stride;
                    for &v in &xd[row..row + window] {
                        acc += v;
                    }
                }
                out.push(acc * inv);
            }
        }
    }
    let (n, c) = (x.shape()[0], x.shape()[1]);
    Tensor::from_parts(&[n, c, oh, ow], out)
}

pub fn avg_pool2d_backward<T: Scalar>(
    in_shape: &[usize],
    window: usize,
    stride: usize,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (planes, h, w, oh, ow) = pool_dims(in_shape, window, stride)?;
    let inv = T::one() / T::from_usize_lossy(window * window);
    let gd = grad_out.data();
    let mut gx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gd[(p * oh + oy) * ow + ox] * inv;
                for dy in 0..window {
                    let row = base + (oy * stride + dy) * w + ox * stride;
                    for v in &mut gx[row..row + window] {
                        *v += g;
                    }
                }
            }
        }
    }
    Tensor::from_parts(in_shape, gx)
}

pub fn max_pool2d_backward<T: Scalar>(
    in_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut gx = vec![T::zero(); crate::tensor::numel(in_shape)];
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        gx[i] += g;
    }
    Tensor::from_parts(in_shape, gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_window() {
        let x = Tensor::<f32>::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(max_pool2d(&x, 2, 2).unwrap().data(), &[4.0]);
        assert_eq!(avg_pool2d(&x, 2, 2).unwrap().data(), &[2.5]);
    }

    #[test]
    fn constant_in_constant_out() {
        let x = Tensor::<f32>::full(&[2, 3, 6, 6], 0.75);
        assert!(max_pool2d(&x, 2, 2).unwrap().data().iter().all(|&v| v == 0.75));
        assert!(avg_pool2d(&x, 3, 1).unwrap().data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn window_larger_than_input_is_shape_error() {
        let x = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        assert!(max_pool2d(&x, 3, 1).is_err());
        assert!(avg_pool2d(&x, 3, 1).is_err());
    }
}
