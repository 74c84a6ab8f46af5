//! Published reference numbers used as oracles.
#![allow(dead_code)]

use reflect_core::domain::EmotionLabel;
use reflect_eval::ConfusionMatrix;

/// Diagnostic subset: 500 pairs over three ground-truth classes. Rows for
/// the other classes are empty.
pub fn diagnostic_matrix() -> ConfusionMatrix {
    let mut counts = [[0u64; 7]; 7];
    counts[EmotionLabel::Disgust.index()] = [10, 117, 1, 6, 2, 2, 0];
    counts[EmotionLabel::Fear.index()] = [0, 0, 125, 1, 1, 2, 14];
    counts[EmotionLabel::Surprise.index()] = [0, 1, 7, 3, 1, 1, 206];
    ConfusionMatrix::from_counts(counts)
}

/// (label, precision, recall, f1) as published, four decimals.
pub const DIAGNOSTIC_CLASSES: [(EmotionLabel, f64, f64, f64); 3] = [
    (EmotionLabel::Disgust, 0.9915, 0.8478, 0.9141),
    (EmotionLabel::Fear, 0.9398, 0.8741, 0.9058),
    (EmotionLabel::Surprise, 0.9364, 0.9406, 0.9385),
];
pub const DIAGNOSTIC_MACRO: (f64, f64, f64) = (0.9559, 0.8875, 0.9195);
pub const DIAGNOSTIC_ACCURACY: &str = "89.60%";
pub const PUBLISHED_TOLERANCE: f64 = 5e-5;

/// Benchmark supports per class, canonical order.
pub const SUPPORTS: [u64; 7] = [1095, 686, 715, 1683, 594, 900, 1094];
pub const BENCHMARK_TOTAL: u64 = 6767;
/// Per-class accuracy in hundredths of a percent.
pub const BASELINE_PCT: [u64; 7] = [4356, 4985, 3622, 8853, 7071, 3522, 6691];
pub const FINETUNED_PCT: [u64; 7] = [9379, 9329, 9217, 9834, 9192, 9211, 9488];
pub const BASELINE_CORRECT: u64 = 4037;
pub const FINETUNED_CORRECT: u64 = 6394;

/// round(pct * support) with pct in hundredths of a percent, half-up.
pub fn reconstruct_counts(pct: &[u64; 7]) -> [u64; 7] {
    std::array::from_fn(|i| (pct[i] * SUPPORTS[i] * 2 + 10_000) / 20_000)
}

/// A matrix whose diagonal holds `correct` and whose errors are spread to
/// the next class, so rows sum to the supports.
pub fn matrix_from_correct(correct: &[u64; 7]) -> ConfusionMatrix {
    let mut counts = [[0u64; 7]; 7];
    for i in 0..7 {
        counts[i][i] = correct[i];
        counts[i][(i + 1) % 7] = SUPPORTS[i] - correct[i];
    }
    ConfusionMatrix::from_counts(counts)
}

/// Any matrix with the given trace over the benchmark total.
pub fn matrix_with_trace(trace: u64) -> ConfusionMatrix {
    let mut counts = [[0u64; 7]; 7];
    counts[0][0] = trace;
    counts[0][1] = BENCHMARK_TOTAL - trace;
    ConfusionMatrix::from_counts(counts)
}
