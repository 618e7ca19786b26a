//! Helpers for equally spaced time series.

use crate::error::{Error, Result};

const SPACING_TOLERANCE: f64 = 1e-9;

/// Common spacing of `times`, which must hold at least three equally spaced,
/// increasing samples.
pub(crate) fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::TooFewSamples {
            required: 3,
            actual: times.len(),
        });
    }
    let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::UnequalSpacing(1));
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - step).abs() > SPACING_TOLERANCE * step.max(1.0) {
            return Err(Error::UnequalSpacing(i + 1));
        }
    }
    Ok(step)
}

/// Second-order centred differences at every interior sample.
pub(crate) fn centered_differences(values: &[Vec<f64>], step: f64) -> Vec<Vec<f64>> {
    values
        .windows(3)
        .map(|w| {
            w[2].iter()
                .zip(&w[0])
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect()
        })
        .collect()
}
