//! Elementwise activations and the axis softmax.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{split_axis, Tensor};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1/sqrt(2*pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact-erf GELU: `0.5 x (1 + erf(x / sqrt 2))`.
#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    T::lit(0.5) * x * (T::one() + (x * T::lit(FRAC_1_SQRT_2)).erf())
}

#[inline]
pub fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let cdf = T::lit(0.5) * (T::one() + (x * T::lit(FRAC_1_SQRT_2)).erf());
    let pdf = T::lit(INV_SQRT_2PI) * (-(x * x) * T::lit(0.5)).exp();
    cdf + x * pdf
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(gelu_scalar)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Max-subtracted softmax over `axis`.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, extent, inner) = split_axis(x.shape(), axis)?;
    let mut out = x.clone();
    let d = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| (o * extent + a) * inner + i;
            let mut m = T::neg_infinity();
            for a in 0..extent {
                m = m.max(d[at(a)]);
            }
            let mut s = T::zero();
            for a in 0..extent {
                let e = (d[at(a)] - m).exp();
                d[at(a)] = e;
                s += e;
            }
            let inv = T::one() / s;
            for a in 0..extent {
                d[at(a)] *= inv;
            }
        }
    }
    Ok(out)
}

/// Given softmax output `y` and upstream `g`: `y * (g - sum(g * y))` per slice.
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, extent, inner) = split_axis(y.shape(), axis)?;
    let (yd, gd) = (y.data(), g.data());
    let mut gx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| (o * extent + a) * inner + i;
            let mut s = T::zero();
            for a in 0..extent {
                s += gd[at(a)] * yd[at(a)];
            }
            for a in 0..extent {
                gx[at(a)] = yd[at(a)] * (gd[at(a)] - s);
            }
        }
    }
    Tensor::from_parts(y.shape(), gx)
}

/// Log-softmax over the last axis of a `[rows, classes]` matrix.
pub fn log_softmax_rows<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, cols) = x.dims2()?;
    let mut out = x.clone();
    for r in 0..rows {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Ok(out)
}
