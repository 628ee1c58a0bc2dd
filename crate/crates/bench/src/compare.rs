//! Side-by-side iteration counts of two runs over the same samples.

use crate::error::{BenchError, Result};
use crate::sim::StepRecord;

/// Fraction of the peak tracking error above which a sample counts as
/// transient.
pub const TRANSIENT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub total_a: usize,
    pub total_b: usize,
    /// `b − a` SQP iterations per sample.
    pub deltas: Vec<i64>,
    /// Indices of the samples in the transient window.
    pub window: Vec<usize>,
    pub window_mean_a: f64,
    pub window_mean_b: f64,
    pub window_total_a: usize,
    pub window_total_b: usize,
}

impl Comparison {
    pub fn total_gain(&self) -> i64 {
        self.total_a as i64 - self.total_b as i64
    }

    pub fn window_gain(&self) -> i64 {
        self.window_total_a as i64 - self.window_total_b as i64
    }
}

/// Samples whose error exceeds `fraction` of the peak error. An all-zero
/// error sequence has no transient.
pub fn transient_window(errors: &[f64], fraction: f64) -> Vec<usize> {
    let peak = errors.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    (0..errors.len()).filter(|&i| errors[i] > fraction * peak).collect()
}

/// Compares two runs sample by sample. `errors` is the tracking error per
/// sample that defines the transient window; without it every sample is in
/// the window.
pub fn compare_runs(a: &[StepRecord], b: &[StepRecord], errors: Option<&[f64]>) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(BenchError::LengthMismatch(a.len(), b.len()));
    }
    let window = match errors {
        Some(e) if e.len() != a.len() => return Err(BenchError::LengthMismatch(a.len(), e.len())),
        Some(e) => transient_window(e, TRANSIENT_FRACTION),
        None => (0..a.len()).collect(),
    };
    let iters = |r: &[StepRecord], idx: &[usize]| idx.iter().map(|&i| r[i].sqp_iters).sum::<usize>();
    let all: Vec<usize> = (0..a.len()).collect();
    let window_total_a = iters(a, &window);
    let window_total_b = iters(b, &window);
    let mean = |total: usize| if window.is_empty() { 0.0 } else { total as f64 / window.len() as f64 };
    Ok(Comparison {
        total_a: iters(a, &all),
        total_b: iters(b, &all),
        deltas: a.iter().zip(b).map(|(x, y)| y.sqp_iters as i64 - x.sqp_iters as i64).collect(),
        window_mean_a: mean(window_total_a),
        window_mean_b: mean(window_total_b),
        window_total_a,
        window_total_b,
        window,
    })
}
