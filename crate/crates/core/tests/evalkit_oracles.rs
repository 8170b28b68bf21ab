//! Metrics, ROC/PR and PCA against independent reference computations.

use hscmt::eval::{binary_curves, confidence_interval, confusion, f1_score, metrics, pca_project, roc_pr, ConfusionMatrix};
use hscmt::verify::oracles::{auc_suite, metrics_suite, rank_auc, sym3_eigenvalues};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

#[test]
fn metrics_match_counting_oracle_on_random_matrices() {
    metrics_suite(100, 25).unwrap().unwrap();
}

#[test]
fn f1_stays_between_precision_and_sensitivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..50 {
        let labels: Vec<usize> = (0..60).map(|_| rng.random_range(0..4)).collect();
        let preds: Vec<usize> = (0..60).map(|_| rng.random_range(0..4)).collect();
        let r = metrics(&confusion(&labels, &preds, 4, &names(4)).unwrap()).unwrap();
        for m in &r.classes {
            assert!(m.f1 >= m.precision.min(m.sensitivity) - 1e-12 && m.f1 <= m.precision.max(m.sensitivity) + 1e-12);
        }
    }
}

#[test]
fn accuracy_invariant_under_class_relabelling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let counts: Vec<Vec<u64>> = (0..4).map(|_| (0..4).map(|_| rng.random_range(0..20)).collect()).collect();
    let perm = [2, 0, 3, 1];
    let mut permuted = vec![vec![0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            permuted[perm[i]][perm[j]] = counts[i][j];
        }
    }
    let a = metrics(&ConfusionMatrix { counts, class_names: names(4) }).unwrap();
    let b = metrics(&ConfusionMatrix { counts: permuted, class_names: names(4) }).unwrap();
    assert_eq!(a.accuracy, b.accuracy);
}

#[test]
fn published_f1_pairs_are_consistent() {
    assert!((f1_score(98.60, 98.50) - 98.55).abs() < 0.01);
    assert!((f1_score(94.81, 94.52) - 94.67).abs() < 0.01);
}

#[test]
fn confidence_interval_matches_direct_evaluation() {
    let direct = |e: f64, n: f64| 1.96 * (e * (1.0 - e) / n).sqrt();
    assert_eq!(confidence_interval(0.0, 10).unwrap(), 0.0);
    assert!((confidence_interval(0.1, 1280).unwrap() - 0.016435).abs() < 1e-6);
    assert!((confidence_interval(0.5, 100).unwrap() - 0.098).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..100 {
        let (e, n) = (rng.random_range(0.0..=1.0), rng.random_range(1..5000));
        assert!((confidence_interval(e, n).unwrap() - direct(e, n as f64)).abs() < 1e-9);
        assert!(confidence_interval(e, n).unwrap() <= confidence_interval(0.5, n).unwrap());
        assert!(confidence_interval(e, n + 1).unwrap() <= confidence_interval(e, n).unwrap());
    }
}

#[test]
fn trapezoidal_auc_equals_rank_statistic() {
    let check = auc_suite(20, 6).unwrap();
    assert!(check.max_rank_error < 1e-9, "{check:?}");
    assert!(check.max_transform_error < 1e-12, "{check:?}");
}

#[test]
fn roc_endpoints_on_random_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let positive: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
    let scores: Vec<f64> = (0..50).map(|_| rng.random()).collect();
    let pair = binary_curves(&scores, &positive).unwrap();
    assert!((pair.auc_roc - rank_auc(&scores, &positive)).abs() < 1e-9);
    assert_eq!(pair.roc.points.first(), Some(&(0.0, 0.0)));
    assert_eq!(pair.roc.points.last(), Some(&(1.0, 1.0)));
    assert!(pair.roc.points.windows(2).all(|w| w[0].0 <= w[1].0));
}

#[test]
fn separations_give_exact_extremes() {
    let probs: Vec<Vec<f64>> = vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.3, 0.7], vec![0.1, 0.9]];
    let labels = [0, 0, 1, 1];
    assert_eq!(roc_pr(&probs, &labels, 0).unwrap().auc_roc, 1.0);
    assert_eq!(roc_pr(&probs, &labels, 1).unwrap().auc_roc, 1.0);
    let flipped = [1, 1, 0, 0];
    assert_eq!(roc_pr(&probs, &flipped, 0).unwrap().auc_roc, 0.0);
}

#[test]
fn pca_variances_match_characteristic_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..10 {
        let n = rng.random_range(5..40);
        let scale = [3.0, 1.5, 0.5];
        let x: Vec<Vec<f64>> =
            (0..n).map(|_| (0..3).map(|j| scale[j] * (rng.random::<f64>() - 0.5) + rng.random::<f64>() * 0.3).collect()).collect();
        let mean: Vec<f64> = (0..3).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let mut cov = [[0.0; 3]; 3];
        for r in &x {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n as f64 - 1.0);
                }
            }
        }
        let eig = sym3_eigenvalues(cov);
        let pca = pca_project(&x).unwrap();
        assert!((pca.explained_variance[0] - eig[0]).abs() < 1e-8, "case {case}: {:?} vs {eig:?}", pca.explained_variance);
        assert!((pca.explained_variance[1] - eig[1]).abs() < 1e-8, "case {case}");
        let projected: f64 =
            (0..2).map(|c| pca.coords.iter().map(|p| p[c] * p[c]).sum::<f64>() / (n as f64 - 1.0)).sum();
        assert!((projected - eig[0] - eig[1]).abs() < 1e-8, "case {case}");
        for comp in &pca.components {
            let big = comp.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }
}

#[test]
fn pca_is_translation_invariant_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // Integer data over a power-of-two row count: every mean, and so every
    // centred value, is exact, making the comparison bit-wise.
    let x: Vec<Vec<f64>> = (0..32).map(|_| (0..5).map(|_| rng.random_range(-20..20) as f64).collect()).collect();
    let shifted: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip([100.0, -64.0, 8.0, 0.0, 32.0]).map(|(v, c)| v + c).collect()).collect();
    let a = pca_project(&x).unwrap();
    let b = pca_project(&shifted).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, pca_project(&x).unwrap());
}
