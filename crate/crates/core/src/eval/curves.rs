//! Threshold sweeps: ROC with trapezoidal AUC, precision-recall with
//! step-interpolated AUC (average precision).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pr,
}

/// Ordered points with the score threshold that produced each one; the
/// first point has threshold `+∞` (nothing predicted positive).
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
}

impl Curve {
    /// `threshold,x,y` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,x,y\n");
        for (t, (x, y)) in self.thresholds.iter().zip(&self.points) {
            s += &format!("{t},{x},{y}\n");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePair {
    pub roc: Curve,
    pub pr: Curve,
    pub auc_roc: f64,
    pub auc_pr: f64,
}

/// Sweeps every distinct score (descending) as a `score ≥ t` threshold.
/// ROC goes from (0,0) to (1,1) and is integrated with the trapezoid rule;
/// PR starts at (recall 0, precision 1) and is integrated as
/// `Σ (Rᵢ − Rᵢ₋₁) · Pᵢ`.
pub fn binary_curves(scores: &[f64], positive: &[bool]) -> Result<CurvePair> {
    if scores.len() != positive.len() {
        return Err(Error::Contract(format!("{} scores vs {} labels", scores.len(), positive.len())));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Curve(format!("non-finite score {bad}")));
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Curve(format!("need both classes, got {pos} positive and {neg} negative samples")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut roc = Curve { kind: CurveKind::Roc, points: vec![(0.0, 0.0)], thresholds: vec![f64::INFINITY] };
    let mut pr = Curve { kind: CurveKind::Pr, points: vec![(0.0, 1.0)], thresholds: vec![f64::INFINITY] };
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut auc_roc, mut auc_pr) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (tpr, fpr) = (tp as f64 / pos as f64, fp as f64 / neg as f64);
        let precision = tp as f64 / (tp + fp) as f64;
        let (px, py) = *roc.points.last().expect("nonempty");
        auc_roc += (fpr - px) * (tpr + py) / 2.0;
        let (prev_recall, _) = *pr.points.last().expect("nonempty");
        auc_pr += (tpr - prev_recall) * precision;
        roc.points.push((fpr, tpr));
        roc.thresholds.push(t);
        pr.points.push((tpr, precision));
        pr.thresholds.push(t);
    }
    Ok(CurvePair { roc, pr, auc_roc, auc_pr })
}

/// One-vs-rest curves of class `positive_class` from per-sample class
/// probabilities.
pub fn roc_pr<S: Into<f64> + Copy>(probs: &[Vec<S>], labels: &[usize], positive_class: usize) -> Result<CurvePair> {
    let scores: Vec<f64> = probs
        .iter()
        .map(|p| {
            p.get(positive_class)
                .map(|&v| v.into())
                .ok_or_else(|| Error::Contract(format!("class {positive_class} missing from a probability row")))
        })
        .collect::<Result<_>>()?;
    let positive: Vec<bool> = labels.iter().map(|&l| l == positive_class).collect();
    binary_curves(&scores, &positive)
}

/// Unweighted mean `(ROC AUC, PR AUC)` over the classes whose one-vs-rest
/// curves are defined; `None` when no class has both outcomes.
pub fn macro_auc(pairs: &[Result<CurvePair>]) -> Option<(f64, f64)> {
    let ok: Vec<&CurvePair> = pairs.iter().filter_map(|p| p.as_ref().ok()).collect();
    (!ok.is_empty()).then(|| {
        let n = ok.len() as f64;
        (ok.iter().map(|p| p.auc_roc).sum::<f64>() / n, ok.iter().map(|p| p.auc_pr).sum::<f64>() / n)
    })
}
