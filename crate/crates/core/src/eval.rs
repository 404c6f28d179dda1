//! Metric suite, confusion matrices and the multi-run instability report.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Variant;

/// Counts indexed `[gold][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::Shape {
                expected: k,
                got: row.len(),
            });
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn off_diagonal(&self) -> u64 {
        self.total() - self.diagonal()
    }

    /// Instances of class `gold` predicted as `predicted`.
    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold][predicted]
    }

    pub fn row_total(&self, gold: usize) -> u64 {
        self.counts[gold].iter().sum()
    }

    pub fn column_total(&self, predicted: usize) -> u64 {
        self.counts.iter().map(|r| r[predicted]).sum()
    }

    pub fn render_text(&self, class_names: &[String]) -> String {
        let width = class_names.iter().map(|n| n.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = write!(out, "{:>width$}", "gold\\pred");
        for name in class_names {
            let _ = write!(out, "  {name:>width$}");
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.counts) {
            let _ = write!(out, "{name:>width$}");
            for c in row {
                let _ = write!(out, "  {c:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(gold: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch(gold.len(), predicted.len()));
    }
    let mut m = ConfusionMatrix::zeros(num_classes);
    for (&g, &p) in gold.iter().zip(predicted) {
        for index in [g, p] {
            if index >= num_classes {
                return Err(Error::ClassOutOfRange {
                    index,
                    classes: num_classes,
                });
            }
        }
        m.counts[g][p] += 1;
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// (TP + TN) / total for the class treated as a binary problem.
    pub ovr_accuracy: f64,
    pub support: u64,
    /// Set when any of precision, recall or F1 had a zero denominator and was reported as 0.
    pub undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn metrics(matrix: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix".into()));
    }
    let n = total as f64;
    let k = matrix.num_classes();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = matrix.get(c, c) as f64;
            let support = matrix.row_total(c);
            let predicted = matrix.column_total(c) as f64;
            let fp = predicted - tp;
            let fn_ = support as f64 - tp;
            let (precision, p_undef) = ratio(tp, predicted);
            let (recall, r_undef) = ratio(tp, support as f64);
            let (f1, f_undef) = ratio(2.0 * tp, 2.0 * tp + fp + fn_);
            ClassMetrics {
                precision,
                recall,
                f1,
                ovr_accuracy: (n - fp - fn_) / n,
                support,
                undefined: p_undef || r_undef || f_undef,
            }
        })
        .collect();
    let accuracy = matrix.diagonal() as f64 / n;
    // Pooled TP/FP/FN over classes: every error is one FP and one FN.
    let tp = matrix.diagonal() as f64;
    let errors = matrix.off_diagonal() as f64;
    let micro_f1 = 2.0 * tp / (2.0 * tp + 2.0 * errors);
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / k as f64;
    let weighted_f1 = per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / n;
    Ok(MetricsReport {
        total,
        accuracy,
        macro_f1,
        micro_f1,
        weighted_f1,
        per_class,
    })
}

impl MetricsReport {
    pub fn render_text(&self, class_names: &[String]) -> String {
        let width = class_names.iter().map(|n| n.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>7}",
            "class", "precision", "recall", "f1", "accuracy", "support"
        );
        for (name, c) in class_names.iter().zip(&self.per_class) {
            let _ = writeln!(
                out,
                "{name:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}{}",
                c.precision,
                c.recall,
                c.f1,
                c.ovr_accuracy,
                c.support,
                if c.undefined { "  (undefined)" } else { "" }
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "accuracy     {:.4}", self.accuracy);
        let _ = writeln!(out, "macro-F1     {:.4}", self.macro_f1);
        let _ = writeln!(out, "micro-F1     {:.4}", self.micro_f1);
        let _ = writeln!(out, "weighted-F1  {:.4}", self.weighted_f1);
        let _ = writeln!(out, "instances    {}", self.total);
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // Exact zero spread when every value is bitwise identical.
    if values.iter().all(|v| *v == values[0]) {
        return Summary { mean: values[0], std: 0.0 };
    }
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Summary { mean, std: var.sqrt() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Best validation loss of each expert in z-vector slot order.
    pub expert_losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertLabel {
    pub class: String,
    pub variant: Variant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityReport {
    pub runs: Vec<RunRecord>,
    pub experts: Vec<ExpertLabel>,
    pub accuracy: Summary,
    pub macro_f1: Summary,
    /// Set when a run failed and the report covers only the runs before it.
    pub partial: bool,
    pub failure: Option<String>,
}

impl InstabilityReport {
    pub fn new(runs: Vec<RunRecord>, experts: Vec<ExpertLabel>) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let f1: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
        InstabilityReport {
            accuracy: summarize(&acc),
            macro_f1: summarize(&f1),
            runs,
            experts,
            partial: false,
            failure: None,
        }
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    /// Run, Accuracy, Macro-F1 rows in percent followed by a `Mean (Std)` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["Run", "Seed", "Accuracy", "Macro-F1"])?;
        for r in &self.runs {
            w.write_record([
                r.run.to_string(),
                r.seed.to_string(),
                format!("{:.2}", 100.0 * r.accuracy),
                format!("{:.2}", 100.0 * r.macro_f1),
            ])?;
        }
        w.write_record([
            "Mean (Std)".to_string(),
            String::new(),
            format!("{:.2} ({:.2})", 100.0 * self.accuracy.mean, 100.0 * self.accuracy.std),
            format!("{:.2} ({:.2})", 100.0 * self.macro_f1.mean, 100.0 * self.macro_f1.std),
        ])?;
        w.flush()?;
        Ok(())
    }

    /// One row per expert with its best validation loss in every run.
    pub fn write_expert_losses_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["Expert".to_string()];
        header.extend(self.runs.iter().map(|r| format!("Run {}", r.run)));
        header.push("Mean (Std)".into());
        w.write_record(&header)?;
        for (e, label) in self.experts.iter().enumerate() {
            let losses: Vec<f64> = self.runs.iter().map(|r| r.expert_losses[e]).collect();
            let s = summarize(&losses);
            let mut row = vec![format!("{}-{}", label.variant, label.class)];
            row.extend(losses.iter().map(|l| format!("{l:.4}")));
            row.push(format!("{:.4} ({:.4})", s.mean, s.std));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_diagonal() {
        let m = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let r = metrics(&m).unwrap();
        assert_eq!((r.accuracy, r.macro_f1, r.micro_f1, r.weighted_f1), (1.0, 1.0, 1.0, 1.0));
        assert!(r.per_class.iter().all(|c| !c.undefined && c.ovr_accuracy == 1.0));
    }

    #[test]
    fn empty_and_errors() {
        let m = confusion(&[], &[], 3).unwrap();
        assert_eq!(m, ConfusionMatrix::zeros(3));
        assert!(metrics(&m).is_err());
        assert!(matches!(confusion(&[0], &[0, 1], 3), Err(Error::LengthMismatch(1, 2))));
        assert!(confusion(&[3], &[0], 3).is_err());
        assert!(ConfusionMatrix::from_counts(vec![vec![1, 2], vec![3]]).is_err());
    }

    #[test]
    fn absent_class_flagged() {
        let m = confusion(&[0, 1, 0], &[0, 1, 1], 3).unwrap();
        let r = metrics(&m).unwrap();
        assert_eq!(r.per_class[2].f1, 0.0);
        assert!(r.per_class[2].undefined);
        assert!(!r.per_class[0].undefined);
        assert!((r.macro_f1 - (2.0 / 3.0 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_binary() {
        // gold 0: 3 right, 1 wrong; gold 1: 2 right, 2 wrong
        let m = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![2, 2]]).unwrap();
        let r = metrics(&m).unwrap();
        assert!((r.per_class[0].precision - 0.6).abs() < 1e-15);
        assert!((r.per_class[0].recall - 0.75).abs() < 1e-15);
        assert!((r.per_class[0].f1 - 2.0 * 0.6 * 0.75 / 1.35).abs() < 1e-15);
        assert!((r.per_class[1].f1 - 2.0 * (2.0 / 3.0) * 0.5 / (2.0 / 3.0 + 0.5)).abs() < 1e-15);
        assert!((r.accuracy - 5.0 / 8.0).abs() < 1e-15);
        assert!((r.per_class[0].ovr_accuracy - 5.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn summary_of_equal_values_has_zero_std() {
        let s = summarize(&[0.1 + 0.2; 10]);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean, 0.1 + 0.2);
        let s = summarize(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn instability_csv_shape() {
        let runs = (1..=3)
            .map(|i| RunRecord {
                run: i,
                seed: i as u64,
                accuracy: 0.9,
                macro_f1: 0.85,
                expert_losses: vec![0.3, 0.4],
            })
            .collect();
        let experts = vec![
            ExpertLabel {
                class: "A".into(),
                variant: Variant::Domain,
            },
            ExpertLabel {
                class: "A".into(),
                variant: Variant::General,
            },
        ];
        let report = InstabilityReport::new(runs, experts);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "Run,Seed,Accuracy,Macro-F1");
        assert_eq!(lines[4], "Mean (Std),,90.00 (0.00),85.00 (0.00)");
        let mut buf = Vec::new();
        report.write_expert_losses_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
