//! Confusion matrices, per-class metrics and report rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::lexicon::SentimentLabel;
use crate::{Error, Result};

const K: usize = SentimentLabel::COUNT;

/// Rows are true classes, columns predicted classes, both in label-code order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= K || p >= K {
            return Err(Error::Data(format!("class pair ({t}, {p}) outside 0..{K}")));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: SentimentLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Rows whose true class is this one.
    pub support: u64,
    /// Set when any of the three metrics hit a zero denominator and was reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub accuracy: f64,
    /// Mean per-row loss; absent when no losses were supplied.
    pub loss: Option<f64>,
    pub classes: [ClassMetrics; K],
    pub confusion: ConfusionMatrix,
    pub total: u64,
}

impl ClassReport {
    pub fn warnings(&self) -> Vec<String> {
        self.classes
            .iter()
            .filter(|c| c.undefined)
            .map(|c| format!("{}: zero denominator, metric reported as 0.00", c.label))
            .collect()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn class_report(cm: &ConfusionMatrix, losses: &[f64]) -> Result<ClassReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data(
            "cannot report on an empty confusion matrix".into(),
        ));
    }
    let classes = SentimentLabel::ALL.map(|label| {
        let j = label.code();
        let hit = cm.counts[j][j];
        let precision = ratio(hit, cm.col_sum(j));
        let recall = ratio(hit, cm.row_sum(j));
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        ClassMetrics {
            label,
            precision: precision.unwrap_or(0.0),
            recall: recall.unwrap_or(0.0),
            f1: f1.unwrap_or(0.0),
            support: cm.row_sum(j),
            undefined: precision.is_none() || recall.is_none() || f1.is_none(),
        }
    });
    for w in classes.iter().filter(|c| c.undefined) {
        log::warn!("{}: zero denominator in metrics, reporting 0", w.label);
    }
    let loss = (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
    Ok(ClassReport {
        accuracy: cm.trace() as f64 / total as f64,
        loss,
        classes,
        confusion: *cm,
        total,
    })
}

/// Renders the accuracy/loss table, the per-class table and each model's
/// confusion matrix. Accuracy is a percentage; per-class metrics are
/// fractions; all to two decimals.
pub fn render_report(reports: &[(String, ClassReport)]) -> String {
    let name_w = reports
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("Model".len()))
        .max()
        .unwrap_or(5);
    let labels = SentimentLabel::ALL;
    let mut out = String::new();

    let _ = writeln!(
        out,
        "{:<name_w$}  {:>9}  {:>9}",
        "Model", "Accuracy%", "Test Loss"
    );
    for (name, r) in reports {
        let loss = r.loss.map_or("-".to_string(), |l| format!("{l:.4}"));
        let _ = writeln!(
            out,
            "{name:<name_w$}  {:>9.2}  {loss:>9}",
            r.accuracy * 100.0
        );
    }

    out.push('\n');
    let _ = write!(out, "{:<name_w$}", "Model");
    for metric in ["Precision", "Recall", "F1"] {
        for l in labels {
            let _ = write!(out, "  {:>18}", format!("{metric}:{}", l.name()));
        }
    }
    out.push('\n');
    for (name, r) in reports {
        let _ = write!(out, "{name:<name_w$}");
        let picks: [fn(&ClassMetrics) -> f64; 3] = [|c| c.precision, |c| c.recall, |c| c.f1];
        for pick in picks {
            for c in &r.classes {
                let flag = if c.undefined { "*" } else { "" };
                let _ = write!(out, "  {:>18}", format!("{:.2}{flag}", pick(c)));
            }
        }
        out.push('\n');
    }

    for (name, r) in reports {
        out.push('\n');
        let _ = writeln!(
            out,
            "{name} confusion (rows true, columns predicted), n = {}",
            r.total
        );
        let _ = write!(out, "{:<10}", "");
        for l in labels {
            let _ = write!(out, "{:>10}", l.name());
        }
        let _ = writeln!(out, "{:>10}", "support");
        for (i, l) in labels.iter().enumerate() {
            let _ = write!(out, "{:<10}", l.name());
            for j in 0..K {
                let _ = write!(out, "{:>10}", r.confusion.counts[i][j]);
            }
            let _ = writeln!(out, "{:>10}", r.classes[i].support);
        }
        for w in r.warnings() {
            let _ = writeln!(out, "* {w}");
        }
    }
    out
}

#[derive(Serialize)]
struct ReportRecord<'a> {
    model: &'a str,
    #[serde(flatten)]
    report: &'a ClassReport,
}

/// One JSON record per model with every metric and the confusion matrix.
pub fn render_report_json(reports: &[(String, ClassReport)]) -> Result<String> {
    let records: Vec<ReportRecord> = reports
        .iter()
        .map(|(model, report)| ReportRecord { model, report })
        .collect();
    let mut s = serde_json::to_string_pretty(&records)?;
    s.push('\n');
    Ok(s)
}
