//! Slow, obviously-correct reference implementations and randomised
//! comparison suites for the optimised kernels and evaluation metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::eval::{binary_curves, confusion, metrics};
use crate::ops::{avg_pool2d, conv2d, max_pool2d, Conv2dSpec};
use crate::tensor::Tensor;

/// Largest `|a − b| / max(1, |b|)`.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// Grouped, strided, zero-padded cross-correlation by direct summation.
/// Kernel layout `[C_out, C_in / groups, KH, KW]`.
pub fn conv_reference(x: &Tensor<f64>, k: &Tensor<f64>, bias: Option<&Tensor<f64>>, spec: Conv2dSpec) -> Vec<f64> {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, cig, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    let (stride, pad) = (spec.stride, spec.padding as isize);
    let oh = (h + 2 * spec.padding - kh) / stride + 1;
    let ow = (w + 2 * spec.padding - kw) / stride + 1;
    let cog = co / spec.groups;
    assert_eq!(cig * spec.groups, ci, "channels do not divide into groups");
    let mut out = Vec::with_capacity(n * co * oh * ow);
    for b in 0..n {
        for o in 0..co {
            let g = o / cog;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |t| t.data()[o]);
                    for c in 0..cig {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad;
                                let ix = (ox * stride + kx) as isize - pad;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += x.at(&[b, g * cig + c, iy as usize, ix as usize]) * k.at(&[o, c, ky, kx]);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Unpadded square-window max or average pooling by enumeration.
pub fn pool_reference(x: &Tensor<f64>, window: usize, stride: usize, max: bool) -> Vec<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut cells = Vec::with_capacity(window * window);
                    for dy in 0..window {
                        for dx in 0..window {
                            cells.push(x.at(&[b, ch, oy * stride + dy, ox * stride + dx]));
                        }
                    }
                    out.push(if max {
                        cells.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    } else {
                        cells.iter().sum::<f64>() / cells.len() as f64
                    });
                }
            }
        }
    }
    out
}

/// Outcome of one randomised kernel comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCheck {
    pub kernel: &'static str,
    pub shapes: usize,
    pub max_rel_error: f64,
}

/// Compares dense/grouped conv, depthwise conv, max pool and average pool
/// with the references on `shapes` random shapes each.
pub fn kernel_suite(shapes: usize, seed: u64) -> Result<Vec<KernelCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..shapes {
        let groups = [1, 1, 2, 3][rng.random_range(0..4)];
        let (ci, co) = (groups * rng.random_range(1..4), groups * rng.random_range(1..4));
        let k = rng.random_range(1..4);
        let spec = Conv2dSpec { stride: rng.random_range(1..3), padding: rng.random_range(0..k), groups };
        let (h, w) = (rng.random_range(k..10), rng.random_range(k..10));
        let x = Tensor::randn(&[rng.random_range(1..3), ci, h, w], 1.0, &mut rng);
        let kernel = Tensor::randn(&[co, ci / groups, k, k], 1.0, &mut rng);
        let bias = rng.random_bool(0.5).then(|| Tensor::randn(&[co], 1.0, &mut rng));
        let got = conv2d(&x, &kernel, bias.as_ref(), spec)?;
        worst[0] = worst[0].max(max_rel_error(got.data(), &conv_reference(&x, &kernel, bias.as_ref(), spec)));

        let c = rng.random_range(1..9);
        let k = [1, 3, 3, 5][rng.random_range(0..4)];
        let spec = Conv2dSpec::depthwise(c, rng.random_range(1..3), k / 2);
        let (h, w) = (rng.random_range(k..12), rng.random_range(k..12));
        let x = Tensor::randn(&[1, c, h, w], 1.0, &mut rng);
        let kernel = Tensor::randn(&[c, 1, k, k], 1.0, &mut rng);
        let got = conv2d(&x, &kernel, None, spec)?;
        worst[1] = worst[1].max(max_rel_error(got.data(), &conv_reference(&x, &kernel, None, spec)));

        let (window, stride) = (rng.random_range(1..4), rng.random_range(1..4));
        let (h, w) = (rng.random_range(window..11), rng.random_range(window..11));
        let x = Tensor::randn(&[rng.random_range(1..3), rng.random_range(1..5), h, w], 1.0, &mut rng);
        let got = max_pool2d(&x, window, stride)?;
        worst[2] = worst[2].max(max_rel_error(got.data(), &pool_reference(&x, window, stride, true)));
        let got = avg_pool2d(&x, window, stride)?;
        worst[3] = worst[3].max(max_rel_error(got.data(), &pool_reference(&x, window, stride, false)));
    }
    Ok(["conv2d", "depthwise_conv2d", "max_pool2d", "avg_pool2d"]
        .into_iter()
        .zip(worst)
        .map(|(kernel, max_rel_error)| KernelCheck { kernel, shapes, max_rel_error })
        .collect())
}

/// Per-class `(tp, fp, fn, tn)` by a single pass over the sample pairs.
pub fn count_outcomes(labels: &[usize], preds: &[usize], class: usize) -> (u64, u64, u64, u64) {
    let mut r = (0, 0, 0, 0);
    for (&l, &p) in labels.iter().zip(preds) {
        match (l == class, p == class) {
            (true, true) => r.0 += 1,
            (false, true) => r.1 += 1,
            (true, false) => r.2 += 1,
            (false, false) => r.3 += 1,
        }
    }
    r
}

/// Checks confusion counts and every per-class and overall metric against
/// direct counting on `cases` random label/prediction sets. Returns a
/// description of the first disagreement.
pub fn metrics_suite(cases: usize, seed: u64) -> Result<std::result::Result<(), String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let k = rng.random_range(2..6);
        let n = rng.random_range(1..200);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> =
            labels.iter().map(|&l| if rng.random_bool(0.6) { l } else { rng.random_range(0..k) }).collect();
        let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let cm = confusion(&labels, &preds, k, &names)?;
        for (i, row) in cm.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let direct = labels.iter().zip(&preds).filter(|&(&l, &p)| l == i && p == j).count() as u64;
                if v != direct {
                    return Ok(Err(format!("case {case}: cell ({i},{j}) is {v}, counted {direct}")));
                }
            }
        }
        let r = metrics(&cm)?;
        let hits = labels.iter().zip(&preds).filter(|(a, b)| a == b).count();
        if r.accuracy != 100.0 * hits as f64 / n as f64 {
            return Ok(Err(format!("case {case}: accuracy {}", r.accuracy)));
        }
        for (c, m) in r.classes.iter().enumerate() {
            let (tp, fp, fn_, tn) = count_outcomes(&labels, &preds, c);
            let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
            let (sen, pre) = (pct(tp, tp + fn_), pct(tp, tp + fp));
            let f1 = if pre + sen == 0.0 { 0.0 } else { 2.0 * pre * sen / (pre + sen) };
            let want = (tp, fp, fn_, tn, pct(tp + tn, n as u64), sen, pre, f1);
            let got = (m.tp, m.fp, m.fn_, m.tn, m.accuracy, m.sensitivity, m.precision, m.f1);
            if got != want {
                return Ok(Err(format!("case {case} class {c}: got {got:?}, counted {want:?}")));
            }
        }
    }
    Ok(Ok(()))
}

/// Mann–Whitney form of ROC AUC: `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)` over all
/// positive/negative pairs.
pub fn rank_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

/// Largest deviations found by [`auc_suite`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AucCheck {
    pub sets: usize,
    /// Against the pairwise rank statistic.
    pub max_rank_error: f64,
    /// Between scores and a strictly increasing transform of them.
    pub max_transform_error: f64,
}

/// Trapezoidal ROC AUC against [`rank_auc`] on `sets` random score sets
/// (every other set coarsely quantised to force ties), plus invariance
/// under a strictly increasing transform.
pub fn auc_suite(sets: usize, seed: u64) -> Result<AucCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = AucCheck { sets, max_rank_error: 0.0, max_transform_error: 0.0 };
    for set in 0..sets {
        let n = rng.random_range(10..200);
        let levels = if set % 2 == 0 { 1000.0 } else { 8.0 };
        let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        positive[0] = true;
        positive[1] = false;
        let scores: Vec<f64> = positive
            .iter()
            .map(|&p| ((rng.random::<f64>() + if p { 0.3 } else { 0.0 }) * levels).floor() / levels)
            .collect();
        let pair = binary_curves(&scores, &positive)?;
        check.max_rank_error = check.max_rank_error.max((pair.auc_roc - rank_auc(&scores, &positive)).abs());
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let warped = binary_curves(&warped, &positive)?;
        check.max_transform_error = check
            .max_transform_error
            .max((warped.auc_roc - pair.auc_roc).abs())
            .max((warped.auc_pr - pair.auc_pr).abs());
    }
    Ok(check)
}

/// Eigenvalues (descending) of a symmetric 3×3 matrix from the closed-form
/// roots of its characteristic polynomial.
pub fn sym3_eigenvalues(a: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return [q; 3];
    }
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [e1, 3.0 * q - e1 - e3, e3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn references_agree_on_hand_cases() {
        let x = Tensor::from_fn(&[1, 1, 3, 3], |i| i as f64);
        let ones = Tensor::from_fn(&[1, 1, 2, 2], |_| 1.0);
        assert_eq!(conv_reference(&x, &ones, None, Conv2dSpec::new(1, 0)), vec![8.0, 12.0, 20.0, 24.0]);
        assert_eq!(pool_reference(&x, 2, 1, true), vec![4.0, 5.0, 7.0, 8.0]);
        assert_eq!(pool_reference(&x, 3, 1, false), vec![4.0]);
        assert_eq!(rank_auc(&[0.9, 0.1, 0.5, 0.5], &[true, false, true, false]), 0.875);
        let e = sym3_eigenvalues([[2.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, -1.0]]);
        assert!((e[0] - 5.0).abs() < 1e-12 && (e[1] - 2.0).abs() < 1e-12 && (e[2] + 1.0).abs() < 1e-12);
    }
}
