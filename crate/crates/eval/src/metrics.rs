//! Confusion matrices and the metrics derived from them.

use std::fmt;

use reflect_core::domain::EmotionLabel;
use serde::{Deserialize, Serialize};

const K: usize = EmotionLabel::COUNT;

/// Counts indexed `(true, predicted)` in canonical label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; K]; K]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, truth: EmotionLabel, predicted: EmotionLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn cell(&self, truth: EmotionLabel, predicted: EmotionLabel) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    /// Row sums: how many pairs carry each true label.
    pub fn supports(&self) -> [u64; K] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn support(&self, label: EmotionLabel) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    /// Column sum: how many pairs were predicted as `label`.
    pub fn predicted(&self, label: EmotionLabel) -> u64 {
        self.counts.iter().map(|row| row[label.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    /// The pairs this matrix tallies, in row-major order.
    pub fn to_pairs(&self) -> Vec<(EmotionLabel, EmotionLabel)> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for t in EmotionLabel::ALL {
            for p in EmotionLabel::ALL {
                out.extend(std::iter::repeat_n((t, p), self.cell(t, p) as usize));
            }
        }
        out
    }
}

/// Tallies `(true, predicted)` pairs.
pub fn score_pairs<I>(pairs: I) -> ConfusionMatrix
where
    I: IntoIterator<Item = (EmotionLabel, EmotionLabel)>,
{
    let mut matrix = ConfusionMatrix::default();
    for (t, p) in pairs {
        matrix.record(t, p);
    }
    matrix
}

/// A count ratio. A zero denominator is undefined and evaluates to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        Self { numerator, denominator }
    }

    pub fn is_defined(&self) -> bool {
        self.denominator > 0
    }

    pub fn value(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }

    /// The percentage in hundredths of a point, rounded half-up, computed
    /// in integers so that e.g. 94.485 never rounds down through binary error.
    pub fn percent_hundredths(&self) -> Option<u64> {
        if self.denominator == 0 {
            return None;
        }
        let n = self.numerator as u128 * 20_000 + self.denominator as u128;
        Some((n / (2 * self.denominator as u128)) as u64)
    }

    /// `"94.49%"`, or `"n/a"` when undefined.
    pub fn render_percent(&self) -> String {
        match self.percent_hundredths() {
            Some(h) => format!("{}%", format_hundredths(h as i64)),
            None => "n/a".to_string(),
        }
    }
}

/// Renders a value held in hundredths with exactly two decimals.
pub fn format_hundredths(h: i64) -> String {
    let sign = if h < 0 { "-" } else { "" };
    let a = h.unsigned_abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

pub fn overall_accuracy(matrix: &ConfusionMatrix) -> Ratio {
    Ratio::new(matrix.trace(), matrix.total())
}

/// Headline comparison of two accuracies. The gain is the difference of
/// the two rounded percentages, as a published table would show it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyGain {
    pub baseline: Ratio,
    pub candidate: Ratio,
}

impl AccuracyGain {
    pub fn gain_hundredths(&self) -> Option<i64> {
        let b = self.baseline.percent_hundredths()? as i64;
        let c = self.candidate.percent_hundredths()? as i64;
        Some(c - b)
    }

    pub fn render_gain(&self) -> String {
        match self.gain_hundredths() {
            Some(g) if g >= 0 => format!("+{}", format_hundredths(g)),
            Some(g) => format_hundredths(g),
            None => "n/a".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricWarning {
    /// Nothing was predicted as this class; precision set to 0.
    NoPredictions,
    /// No pair carries this true label; recall set to 0.
    NoSupport,
    /// No class had support, so the macro average is empty.
    NoClasses,
}

impl fmt::Display for MetricWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricWarning::NoPredictions => "precision undefined (no predictions), reported as 0",
            MetricWarning::NoSupport => "recall undefined (no support), reported as 0",
            MetricWarning::NoClasses => "no class has support, macro average reported as 0",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<MetricWarning>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn class_metrics(matrix: &ConfusionMatrix, label: EmotionLabel) -> ClassMetrics {
    let tp = matrix.cell(label, label);
    let precision = Ratio::new(tp, matrix.predicted(label));
    let recall = Ratio::new(tp, matrix.support(label));
    let mut warnings = Vec::new();
    if !precision.is_defined() {
        warnings.push(MetricWarning::NoPredictions);
    }
    if !recall.is_defined() {
        warnings.push(MetricWarning::NoSupport);
    }
    ClassMetrics {
        precision: precision.value(),
        recall: recall.value(),
        f1: f1_score(precision.value(), recall.value()),
        support: recall.denominator,
        warnings,
    }
}

/// Unweighted mean over classes with support; `support` is the matrix total.
pub fn macro_average(matrix: &ConfusionMatrix) -> ClassMetrics {
    let present: Vec<ClassMetrics> = EmotionLabel::ALL
        .into_iter()
        .filter(|&l| matrix.support(l) > 0)
        .map(|l| class_metrics(matrix, l))
        .collect();
    if present.is_empty() {
        return ClassMetrics {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            support: 0,
            warnings: vec![MetricWarning::NoClasses],
        };
    }
    let n = present.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(f).sum::<f64>() / n;
    ClassMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        support: matrix.total(),
        warnings: Vec::new(),
    }
}

/// Per-class accuracy, defined as recall: diagonal over row sum.
pub fn per_class_accuracy(matrix: &ConfusionMatrix) -> [Ratio; K] {
    EmotionLabel::ALL.map(|l| Ratio::new(matrix.cell(l, l), matrix.support(l)))
}
