//! Confusion matrices and one-vs-rest classification metrics.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// `true/pred` header followed by one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = format!("true/pred,{}\n", self.class_names.join(","));
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            s += &format!("{name},{}\n", cells.join(","));
        }
        s
    }
}

/// Tallies `(label, prediction)` pairs into a `k × k` matrix. Class names
/// default to the class index when `class_names` is empty.
pub fn confusion(labels: &[usize], preds: &[usize], k: usize, class_names: &[String]) -> Result<ConfusionMatrix> {
    if labels.len() != preds.len() {
        return Err(Error::Contract(format!("{} labels vs {} predictions", labels.len(), preds.len())));
    }
    if !class_names.is_empty() && class_names.len() != k {
        return Err(Error::Contract(format!("{} class names for {k} classes", class_names.len())));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in labels.iter().zip(preds) {
        if t >= k || p >= k {
            return Err(Error::Contract(format!("pair ({t}, {p}) out of range for {k} classes")));
        }
        counts[t][p] += 1;
    }
    let class_names = if class_names.is_empty() { (0..k).map(|i| i.to_string()).collect() } else { class_names.to_vec() };
    Ok(ConfusionMatrix { counts, class_names })
}

/// Harmonic mean of precision and sensitivity (any common unit); 0 when
/// both are 0.
pub fn f1_score(precision: f64, sensitivity: f64) -> f64 {
    if precision + sensitivity == 0.0 {
        0.0
    } else {
        2.0 * precision * sensitivity / (precision + sensitivity)
    }
}

/// `1.96 · sqrt(e (1 − e) / n)` for error rate `e ∈ [0, 1]`.
pub fn confidence_interval(error_rate: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(Error::Contract(format!("error rate {error_rate} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::Contract("confidence interval needs n >= 1".into()));
    }
    Ok(1.96 * (error_rate * (1.0 - error_rate) / n as f64).sqrt())
}

/// One-vs-rest counts and metrics (percent) for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub classes: Vec<ClassMetrics>,
    /// trace / total, percent.
    pub accuracy: f64,
    /// Unweighted means over classes, percent.
    pub macro_accuracy: f64,
    pub macro_sensitivity: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    /// 95% interval half-width on the error rate `1 − accuracy`, percent.
    pub ci95: f64,
    /// Zero-denominator cells reported as 0.
    pub warnings: Vec<String>,
}

fn ratio(num: u64, den: u64, what: &str, class: &str, warnings: &mut Vec<String>) -> f64 {
    if den == 0 {
        let msg = format!("{what} of class `{class}` has a zero denominator; reported as 0");
        warn!("{msg}");
        warnings.push(msg);
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Per-class and macro metrics. An all-zero matrix is a contract error.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract("metrics of an empty confusion matrix".into()));
    }
    let k = cm.num_classes();
    let mut warnings = Vec::new();
    let classes: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let fn_ = cm.counts[c].iter().sum::<u64>() - tp;
            let fp = cm.counts.iter().map(|row| row[c]).sum::<u64>() - tp;
            let tn = total - tp - fn_ - fp;
            let name = &cm.class_names[c];
            let sensitivity = ratio(tp, tp + fn_, "sensitivity", name, &mut warnings);
            let precision = ratio(tp, tp + fp, "precision", name, &mut warnings);
            ClassMetrics {
                name: name.clone(),
                tp,
                fp,
                fn_,
                tn,
                accuracy: 100.0 * (tp + tn) as f64 / total as f64,
                sensitivity,
                precision,
                f1: f1_score(precision, sensitivity),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / k as f64;
    let accuracy = 100.0 * cm.trace() as f64 / total as f64;
    let ci95 = 100.0 * confidence_interval(1.0 - cm.trace() as f64 / total as f64, total as usize)?;
    Ok(MetricsReport {
        samples: total,
        macro_accuracy: mean(|c| c.accuracy),
        macro_sensitivity: mean(|c| c.sensitivity),
        macro_precision: mean(|c| c.precision),
        macro_f1: mean(|c| c.f1),
        classes,
        accuracy,
        ci95,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_swapped_predictions() {
        let cm = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3, &[]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        let r = metrics(&cm).unwrap();
        assert_eq!(r.accuracy, 100.0);
        for c in &r.classes {
            assert_eq!((c.accuracy, c.sensitivity, c.precision, c.f1), (100.0, 100.0, 100.0, 100.0));
        }
        assert_eq!(r.ci95, 0.0);
        let anti = confusion(&[0, 1], &[1, 0], 2, &[]).unwrap();
        assert_eq!(anti.counts, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn contract_errors() {
        assert!(confusion(&[0], &[0, 1], 2, &[]).is_err());
        assert!(confusion(&[2], &[0], 2, &[]).is_err());
        assert!(metrics(&confusion(&[], &[], 2, &[]).unwrap()).is_err());
        assert!(confidence_interval(1.5, 10).is_err());
    }

    #[test]
    fn zero_denominators_warn() {
        // Class 1 is never predicted and never present.
        let r = metrics(&confusion(&[0, 0], &[0, 0], 2, &[]).unwrap()).unwrap();
        assert_eq!(r.classes[1].precision, 0.0);
        assert_eq!(r.classes[1].sensitivity, 0.0);
        assert_eq!(r.warnings.len(), 2);
    }

    #[test]
    fn csv_layout() {
        let names = vec!["a".to_string(), "b".to_string()];
        let cm = confusion(&[0, 1, 1], &[0, 0, 1], 2, &names).unwrap();
        assert_eq!(cm.to_csv(), "true/pred,a,b\na,1,0\nb,1,1\n");
    }
}
