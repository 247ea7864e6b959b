//! Confusion-matrix accumulation and macro-averaged classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C x C` counts; rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds a matrix from row-major nested counts.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::dim("confusion_matrix", "rows must form a square matrix"));
        }
        Ok(ConfusionMatrix {
            classes: c,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn update(&mut self, truth: &[usize], predicted: &[usize]) -> Result<()> {
        if truth.len() != predicted.len() {
            return Err(Error::dim(
                "confusion_matrix",
                format!("{} true labels vs {} predictions", truth.len(), predicted.len()),
            ));
        }
        if let Some(&bad) = truth.iter().chain(predicted).find(|&&l| l >= self.classes) {
            return Err(Error::Labeling(format!(
                "label {bad} outside {} classes",
                self.classes
            )));
        }
        for (&t, &p) in truth.iter().zip(predicted) {
            self.counts[t * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::dim("confusion_matrix", "class counts differ"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn compute(&self) -> Result<MetricsReport> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Evaluation("confusion matrix is empty".into()));
        }
        let c = self.classes;
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let mut precision = Vec::with_capacity(c);
        let mut recall = Vec::with_capacity(c);
        let mut f1 = Vec::with_capacity(c);
        let mut support = Vec::with_capacity(c);
        let mut trace = 0;
        for k in 0..c {
            let tp = self.get(k, k);
            let row: u64 = (0..c).map(|j| self.get(k, j)).sum();
            let col: u64 = (0..c).map(|i| self.get(i, k)).sum();
            let p = ratio(tp, col);
            let r = ratio(tp, row);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
            support.push(row);
            trace += tp;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / c as f64;
        Ok(MetricsReport {
            accuracy: trace as f64 / total as f64,
            macro_precision: mean(&precision),
            macro_recall: mean(&recall),
            macro_f1: mean(&f1),
            precision,
            recall,
            f1,
            support,
            total,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub total: u64,
}

fn fixed4(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

impl MetricsReport {
    /// JSON object with every metric in 4-decimal fixed point. `extra` entries
    /// (already JSON-encoded values) are appended verbatim.
    pub fn to_json_document(&self, extra: &[(&str, String)]) -> String {
        let support: Vec<String> = self.support.iter().map(|s| s.to_string()).collect();
        let mut fields = vec![
            ("accuracy".to_string(), format!("{:.4}", self.accuracy)),
            ("macro_precision".to_string(), format!("{:.4}", self.macro_precision)),
            ("macro_recall".to_string(), format!("{:.4}", self.macro_recall)),
            ("macro_f1".to_string(), format!("{:.4}", self.macro_f1)),
            ("precision".to_string(), fixed4(&self.precision)),
            ("recall".to_string(), fixed4(&self.recall)),
            ("f1".to_string(), fixed4(&self.f1)),
            ("support".to_string(), format!("[{}]", support.join(", "))),
            ("total".to_string(), self.total.to_string()),
        ];
        fields.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        let body: Vec<String> = fields
            .iter()
            .map(|(k, v)| format!("  \"{k}\": {v}"))
            .collect();
        format!("{{\n{}\n}}\n", body.join(",\n"))
    }

    pub fn from_json_document(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            what: "metrics report",
            detail: e.to_string(),
        })
    }
}
