//! Report files for an evaluated split.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{confusion, macro_auc, metrics, pca_project, roc_pr, svg, ConfusionMatrix, MetricsReport, Pca};
use crate::error::{Error, Result};

/// `metrics.json` contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    /// Per-class `(ROC AUC, PR AUC)`; `None` where the class lacks
    /// positives or negatives.
    pub class_auc: Vec<Option<(f64, f64)>>,
    pub macro_auc_roc: Option<f64>,
    pub macro_auc_pr: Option<f64>,
    pub notes: Vec<String>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `confusion.csv`, `metrics.json`, `roc_<class>.csv|svg` and
/// `pr_<class>.csv|svg` into `dir`.
pub fn write_eval_report(dir: &Path, labels: &[usize], preds: &[usize], probs: &[Vec<f32>], class_names: &[String]) -> Result<EvalReport> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let k = class_names.len();
    let cm = confusion(labels, preds, k, class_names)?;
    let report = metrics(&cm)?;
    let pairs: Vec<_> = (0..k).map(|c| roc_pr(probs, labels, c)).collect();
    let mut notes = vec![
        "ROC AUC: trapezoid rule. PR AUC: step interpolation, sum of recall increments times precision.".to_string(),
        "Macro metrics are unweighted class means; accuracy is trace / total.".to_string(),
        "ci95 is 1.96 * sqrt(e (1 - e) / n) for error rate e = 1 - accuracy, in percent.".to_string(),
    ];
    for (c, pair) in pairs.iter().enumerate() {
        let stem = file_stem(&class_names[c]);
        match pair {
            Ok(p) => {
                write(&dir.join(format!("roc_{stem}.csv")), &p.roc.to_csv())?;
                write(&dir.join(format!("pr_{stem}.csv")), &p.pr.to_csv())?;
                let roc_title = format!("ROC {} (AUC {:.4})", class_names[c], p.auc_roc);
                let pr_title = format!("PR {} (AUC {:.4})", class_names[c], p.auc_pr);
                let name = class_names[c].as_str();
                write(&dir.join(format!("roc_{stem}.svg")), &svg::line_chart(&roc_title, "false positive rate", "true positive rate", &[(name, &p.roc.points)]))?;
                write(&dir.join(format!("pr_{stem}.svg")), &svg::line_chart(&pr_title, "recall", "precision", &[(name, &p.pr.points)]))?;
            }
            Err(e) => notes.push(format!("no curves for class `{}`: {e}", class_names[c])),
        }
    }
    let macro_pair = macro_auc(&pairs);
    let out = EvalReport {
        metrics: report,
        class_auc: pairs.iter().map(|p| p.as_ref().ok().map(|p| (p.auc_roc, p.auc_pr))).collect(),
        macro_auc_roc: macro_pair.map(|m| m.0),
        macro_auc_pr: macro_pair.map(|m| m.1),
        confusion: cm,
        notes,
    };
    write(&dir.join("confusion.csv"), &out.confusion.to_csv())?;
    write(&dir.join("metrics.json"), &serde_json::to_string_pretty(&out)?)?;
    Ok(out)
}

/// Writes `pca.csv` (`pc1,pc2,label`) and `pca.svg` into `dir`.
pub fn write_pca_report(dir: &Path, features: &[Vec<f32>], labels: &[usize], class_names: &[String]) -> Result<Pca> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows: Vec<Vec<f64>> = features.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let pca = pca_project(&rows)?;
    let mut csv = String::from("pc1,pc2,label\n");
    for (c, &l) in pca.coords.iter().zip(labels) {
        csv += &format!("{},{},{l}\n", c[0], c[1]);
    }
    write(&dir.join("pca.csv"), &csv)?;
    let points: Vec<(f64, f64)> = pca.coords.iter().map(|c| (c[0], c[1])).collect();
    let names: Vec<&str> = class_names.iter().map(String::as_str).collect();
    let title = format!("PCA of penultimate features ({:.1}% + {:.1}% variance)", 100.0 * pca.explained_ratio[0], 100.0 * pca.explained_ratio[1]);
    write(&dir.join("pca.svg"), &svg::scatter(&title, "pc1", "pc2", &points, labels, &names))?;
    Ok(pca)
}
