//! Convergence z-score comparing early and late segments of a chain trace.

use crate::error::{GfaError, Result};
use crate::stats::{mean, sample_variance};

/// Two-sided significance bound at the 5% level.
pub const GEWEKE_BOUND: f64 = 1.96;

/// z-score of mean(first 10%) against mean(last 50%).
///
/// Segment variances are plain sample variances divided by segment length
/// (no spectral correction); feed a pre-thinned trace so autocorrelation is
/// small. |z| below [`GEWEKE_BOUND`] is taken as converged. A trace whose
/// two segments are both constant scores 0.
pub fn geweke_diagnostic(trace: &[f64]) -> Result<f64> {
    const MIN_LEN: usize = 40;
    if trace.len() < MIN_LEN {
        return Err(GfaError::TraceTooShort {
            got: trace.len(),
            need: MIN_LEN,
        });
    }
    let n = trace.len();
    let n1 = n / 10;
    let n2 = n / 2;
    let seg1 = &trace[..n1];
    let seg2 = &trace[n - n2..];
    let v1 = sample_variance(seg1);
    let v2 = sample_variance(seg2);
    if v1 == 0.0 && v2 == 0.0 {
        return Ok(0.0);
    }
    let denom = (v1 / n1 as f64 + v2 / n2 as f64).sqrt();
    Ok((mean(seg1) - mean(seg2)) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trace_scores_zero() {
        let trace = vec![3.5; 100];
        assert_eq!(geweke_diagnostic(&trace).unwrap(), 0.0);
    }

    #[test]
    fn short_trace_rejected() {
        let err = geweke_diagnostic(&vec![1.0; 39]).unwrap_err();
        assert!(matches!(err, GfaError::TraceTooShort { got: 39, need: 40 }));
        assert!(geweke_diagnostic(&vec![1.0; 40]).is_ok());
    }

    #[test]
    fn linear_trend_is_flagged() {
        // direct computation: segments 1..=100 and 501..=1000 are far apart
        let trace: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let z = geweke_diagnostic(&trace).unwrap();
        assert!(z.abs() > 50.0, "z = {z}");
    }

    #[test]
    fn symmetric_segments_cancel() {
        // first 10% and last 50% drawn from the same deterministic pattern
        let trace: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let z = geweke_diagnostic(&trace).unwrap();
        assert!(z.abs() < 1e-10, "z = {z}");
    }
}
