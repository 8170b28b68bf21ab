//! Two-component PCA via a cyclic Jacobi eigen-solve of the covariance.

use log::warn;

use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// `N` rows of `(pc1, pc2)`.
    pub coords: Vec<[f64; 2]>,
    /// Unit principal axes, each with its largest-magnitude entry positive.
    pub components: [Vec<f64>; 2],
    /// Variance along each axis (covariance eigenvalues, `N − 1` normalised).
    pub explained_variance: [f64; 2],
    /// Fractions of the total variance.
    pub explained_ratio: [f64; 2],
    /// Set when the data has no variance; coordinates are then all zero.
    pub degenerate: bool,
}

/// Eigenvalues (unsorted) and column eigenvectors of a symmetric matrix by
/// cyclic Jacobi rotations, iterated until the off-diagonal Frobenius norm
/// falls below `tol` times the matrix norm.
pub(crate) fn jacobi_eigen(mut a: Vec<Vec<f64>>, tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off.sqrt() <= tol * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Projects mean-centred `features` (`N × D`) onto the top two principal
/// axes.
pub fn pca_project(features: &[Vec<f64>]) -> Result<Pca> {
    let n = features.len();
    let d = features.first().map_or(0, Vec::len);
    if n < 3 || d < 2 {
        return Err(Error::Contract(format!("PCA needs at least 3 samples of dimension >= 2, got {n} x {d}")));
    }
    if features.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("PCA rows have different lengths".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| features.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centred: Vec<Vec<f64>> = features.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centred {
        for i in 0..d {
            if r[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let total: f64 = (0..d).map(|i| cov[i][i]).sum();
    if total <= 0.0 {
        warn!("PCA input has zero variance; returning zero coordinates");
        let mut e1 = vec![0.0; d];
        let mut e2 = vec![0.0; d];
        e1[0] = 1.0;
        e2[1] = 1.0;
        return Ok(Pca {
            coords: vec![[0.0; 2]; n],
            components: [e1, e2],
            explained_variance: [0.0; 2],
            explained_ratio: [0.0; 2],
            degenerate: true,
        });
    }
    let (values, vectors) = jacobi_eigen(cov, JACOBI_TOL);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let component = |k: usize| -> Vec<f64> {
        let mut c: Vec<f64> = (0..d).map(|i| vectors[i][order[k]]).collect();
        let lead = c.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > c[best].abs() { i } else { best });
        if c[lead] < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        c
    };
    let components = [component(0), component(1)];
    let coords = centred
        .iter()
        .map(|r| {
            let dot = |c: &Vec<f64>| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    let ev = [values[order[0]].max(0.0), values[order[1]].max(0.0)];
    Ok(Pca { coords, components, explained_variance: ev, explained_ratio: [ev[0] / total, ev[1] / total], degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalises() {
        let a = vec![vec![4.0, 1.0, 2.0], vec![1.0, 3.0, 0.5], vec![2.0, 0.5, 1.0]];
        let (vals, vecs) = jacobi_eigen(a.clone(), 1e-12);
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * vecs[j][k]).sum();
                assert!((av - vals[k] * vecs[i][k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn points_on_x_axis() {
        let x: Vec<Vec<f64>> = [-2.0, -1.0, 0.5, 3.0].iter().map(|&v| vec![v, 0.0, 0.0]).collect();
        let p = pca_project(&x).unwrap();
        assert_eq!(p.components[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(p.explained_variance[1], 0.0);
        assert!(!p.degenerate);
    }

    #[test]
    fn degenerate_and_small_inputs() {
        let p = pca_project(&vec![vec![1.0, 2.0]; 4]).unwrap();
        assert!(p.degenerate);
        assert!(p.coords.iter().all(|c| *c == [0.0, 0.0]));
        assert!(pca_project(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(pca_project(&[vec![1.0], vec![2.0], vec![3.0]]).is_err());
    }
}
