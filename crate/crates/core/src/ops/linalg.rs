//! Dense matrix products on row-major `[rows, cols]` tensors.

use super::conv::axpy;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `a[m,k] · b[k,n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(shape_err!("matmul inner dims differ: {:?} x {:?}", a.shape(), b.shape()));
    }
    let mut c = vec![T::zero(); m * n];
    matmul_into(a.data(), b.data(), &mut c, m, k, n);
    Tensor::from_parts(&[m, n], c)
}

pub(crate) fn matmul_into<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(a[i * k + p], &b[p * n..(p + 1) * n], crow);
        }
    }
}

/// `a[m,k] · b[n,k]ᵀ`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (n, k2) = b.dims2()?;
    if k != k2 {
        return Err(shape_err!("matmul_nt inner dims differ: {:?} x {:?}ᵀ", a.shape(), b.shape()));
    }
    let bt = transpose(b)?;
    let mut c = vec![T::zero(); m * n];
    matmul_into(a.data(), bt.data(), &mut c, m, k, n);
    Tensor::from_parts(&[m, n], c)
}

/// `a[k,m]ᵀ · b[k,n]`.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, m) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(shape_err!("matmul_tn inner dims differ: {:?}ᵀ x {:?}", a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut c = vec![T::zero(); m * n];
    for p in 0..k {
        let brow = &bd[p * n..(p + 1) * n];
        for i in 0..m {
            axpy(ad[p * m + i], brow, &mut c[i * n..(i + 1) * n]);
        }
    }
    Tensor::from_parts(&[m, n], c)
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, c) = a.dims2()?;
    let d = a.data();
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::from_parts(&[c, r], out)
}

/// Affine map `x · Wᵀ + b` with `x[n,in]`, `W[out,in]`, `b[out]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let mut y = matmul_nt(x, weight)?;
    if let Some(b) = bias {
        let (_, out) = y.dims2()?;
        if b.len() != out {
            return Err(shape_err!("linear bias has {} entries, need {out}", b.len()));
        }
        add_row_bias(&mut y, b);
    }
    Ok(y)
}

pub(crate) fn add_row_bias<T: Scalar>(y: &mut Tensor<T>, b: &Tensor<T>) {
    let cols = b.len();
    for row in y.data_mut().chunks_exact_mut(cols) {
        for (v, &bv) in row.iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
}

/// Column sums of a `[rows, cols]` matrix.
pub(crate) fn column_sums<T: Scalar>(g: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, cols) = g.dims2()?;
    let mut s = vec![T::zero(); cols];
    for row in g.data().chunks_exact(cols) {
        for (a, &v) in s.iter_mut().zip(row) {
            *a += v;
        }
    }
    Tensor::from_parts(&[cols], s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_small_case() {
        let x = Tensor::<f64>::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(&[1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::new(&[1], vec![0.5]).unwrap();
        assert_eq!(linear(&x, &w, Some(&b)).unwrap().data(), &[3.5]);
    }

    #[test]
    fn three_products_agree() {
        let a = Tensor::<f64>::from_fn(&[3, 4], |i| (i as f64 * 0.7).cos());
        let b = Tensor::<f64>::from_fn(&[4, 5], |i| (i as f64 * 0.3).sin());
        let ab = matmul(&a, &b).unwrap();
        let bt = transpose(&b).unwrap();
        assert_eq!(matmul_nt(&a, &bt).unwrap(), ab);
        let at = transpose(&a).unwrap();
        let ab2 = matmul_tn(&at, &b).unwrap();
        for (x, y) in ab.data().iter().zip(ab2.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_dim_mismatch() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        assert!(matmul(&a, &a).is_err());
    }
}
