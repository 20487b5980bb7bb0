//! Summary statistics for reporting.

use crate::error::{CoreError, Result};

/// Arithmetic mean and sample standard deviation (n - 1 denominator).
/// Requires at least two values; fewer is an explicit error.
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(CoreError::TooFewSamples {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}
