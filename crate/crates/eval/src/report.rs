//! Evaluation reports: machine-readable JSON plus plain-text tables.

use std::fmt::Write as _;
use std::path::PathBuf;

use reflect_core::domain::EmotionLabel;
use reflect_core::inference::{classify, decode_image_bytes, preprocess, ClassifierBackend, InferenceError, Normalization};
use serde::{Deserialize, Serialize};

use crate::manifest::LabeledManifest;
use crate::metrics::{
    class_metrics, macro_average, overall_accuracy, per_class_accuracy, score_pairs, AccuracyGain, ClassMetrics,
    ConfusionMatrix, Ratio,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("manifest has no rows")]
    EmptyManifest,
    #[error("cannot read `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("`{path}`: {source}")]
    Inference { path: PathBuf, source: InferenceError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
    pub value: f64,
    /// Half-up to two decimals, or `"n/a"`.
    pub percent: String,
}

impl From<Ratio> for Accuracy {
    fn from(r: Ratio) -> Self {
        Self { correct: r.numerator, total: r.denominator, value: r.value(), percent: r.render_percent() }
    }
}

impl Accuracy {
    pub fn ratio(&self) -> Ratio {
        Ratio::new(self.correct, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: EmotionLabel,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
    /// Per-class accuracy (recall).
    pub accuracy: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<EmotionLabel>,
    /// Rows are true labels, columns predicted labels.
    pub matrix: ConfusionMatrix,
    pub accuracy: Accuracy,
    pub classes: Vec<ClassRow>,
    pub macro_avg: ClassMetrics,
}

impl EvalReport {
    pub fn from_matrix(matrix: ConfusionMatrix) -> Self {
        let accuracy = per_class_accuracy(&matrix);
        let classes = EmotionLabel::ALL
            .into_iter()
            .map(|label| ClassRow {
                label,
                metrics: class_metrics(&matrix, label),
                accuracy: accuracy[label.index()].into(),
            })
            .collect();
        Self {
            labels: EmotionLabel::ALL.to_vec(),
            matrix,
            accuracy: overall_accuracy(&matrix).into(),
            classes,
            macro_avg: macro_average(&matrix),
        }
    }

    pub fn class(&self, label: EmotionLabel) -> &ClassRow {
        &self.classes[label.index()]
    }

    /// Confusion matrix, precision/recall/F1, per-class accuracy and the
    /// overall accuracy as aligned text tables.
    pub fn render_tables(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = EmotionLabel::ALL.iter().map(|l| l.as_str()).collect();

        let _ = writeln!(out, "Confusion matrix (rows: true, columns: predicted)");
        let _ = write!(out, "{:<10}", "");
        for n in &names {
            let _ = write!(out, "{n:>9}");
        }
        let _ = writeln!(out);
        for t in EmotionLabel::ALL {
            let _ = write!(out, "{:<10}", t.as_str());
            for p in EmotionLabel::ALL {
                let _ = write!(out, "{:>9}", self.matrix.cell(t, p));
            }
            let _ = writeln!(out);
        }

        let _ = writeln!(out, "\nPrecision, recall and F1");
        let _ = writeln!(out, "{:<12}{:>10}{:>10}{:>10}{:>9}", "Class", "Precision", "Recall", "F1", "Support");
        for row in self.classes.iter().filter(|r| r.metrics.support > 0) {
            let m = &row.metrics;
            let flag = if m.warnings.is_empty() { "" } else { "  *" };
            let _ = writeln!(
                out,
                "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>9}{flag}",
                row.label.as_str(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let m = &self.macro_avg;
        let _ = writeln!(out, "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>9}", "Macro avg.", m.precision, m.recall, m.f1, m.support);
        for row in &self.classes {
            for w in &row.metrics.warnings {
                if row.metrics.support > 0 {
                    let _ = writeln!(out, "  * {}: {w}", row.label);
                }
            }
        }
        for w in &self.macro_avg.warnings {
            let _ = writeln!(out, "  * macro: {w}");
        }

        let _ = writeln!(out, "\nPer-class accuracy");
        let _ = writeln!(out, "{:<12}{:>9}{:>9}{:>10}", "Class", "Correct", "Total", "Accuracy");
        for row in &self.classes {
            let a = &row.accuracy;
            let _ = writeln!(out, "{:<12}{:>9}{:>9}{:>10}", row.label.as_str(), a.correct, a.total, a.percent);
        }

        let a = &self.accuracy;
        let _ = writeln!(out, "\nOverall accuracy: {} / {} = {}", a.correct, a.total, a.percent);
        out
    }
}

/// Scores every row. Scoring-mode manifests never touch `backend`; image
/// rows are decoded, preprocessed and classified in manifest order.
pub fn run_inference_eval(
    manifest: &LabeledManifest,
    backend: Option<(&mut dyn ClassifierBackend, &Normalization)>,
) -> Result<EvalReport, EvalError> {
    if manifest.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let matrix = match manifest {
        LabeledManifest::Scoring(pairs) => score_pairs(pairs.iter().copied()),
        LabeledManifest::Inference(rows) => {
            let Some((backend, norm)) = backend else {
                return Err(EvalError::Inference {
                    path: rows[0].0.clone(),
                    source: InferenceError::BackendUnavailable("no backend configured".into()),
                });
            };
            let mut pairs = Vec::with_capacity(rows.len());
            for (path, truth) in rows {
                let bytes = std::fs::read(path).map_err(|source| EvalError::Io { path: path.clone(), source })?;
                let predicted = decode_image_bytes(&bytes)
                    .and_then(|image| preprocess(&image, norm))
                    .and_then(|tensor| classify(&tensor, backend))
                    .map_err(|source| EvalError::Inference { path: path.clone(), source })?;
                pairs.push((*truth, predicted.label));
            }
            score_pairs(pairs)
        }
    };
    Ok(EvalReport::from_matrix(matrix))
}

/// Overall and per-class accuracy of two runs side by side with the gain
/// in percentage points.
pub fn render_comparison(baseline: &EvalReport, candidate: &EvalReport) -> String {
    let mut out = String::new();
    let overall = AccuracyGain { baseline: baseline.accuracy.ratio(), candidate: candidate.accuracy.ratio() };
    let _ = writeln!(out, "{:<12}{:>9}{:>9}{:>11}", "Model", "Correct", "Total", "Accuracy");
    for (name, a) in [("baseline", &baseline.accuracy), ("candidate", &candidate.accuracy)] {
        let _ = writeln!(out, "{name:<12}{:>9}{:>9}{:>11}", a.correct, a.total, a.percent);
    }
    let _ = writeln!(out, "Gain: {} points", overall.render_gain());

    let _ = writeln!(out, "\n{:<12}{:>9}{:>11}{:>11}{:>9}", "Class", "Support", "Baseline", "Candidate", "Gain");
    for label in EmotionLabel::ALL {
        let b = &baseline.class(label).accuracy;
        let c = &candidate.class(label).accuracy;
        let gain = AccuracyGain { baseline: b.ratio(), candidate: c.ratio() };
        let _ = writeln!(out, "{:<12}{:>9}{:>11}{:>11}{:>9}", label.as_str(), c.total, b.percent, c.percent, gain.render_gain());
    }
    out
}
