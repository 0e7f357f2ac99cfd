//! Convergence-rate diagnostics from error sequences.

use serde::{Deserialize, Serialize};

use super::SolveTrace;
use crate::error::{Error, Result};
use crate::map::Vector;
use crate::sampling::least_squares_slope;

/// Final error ratio below which convergence counts as superlinear.
pub const SUPERLINEAR_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `e_{k+1}/e_k` for every `e_k` above the noise floor.
    pub ratios: Vec<f64>,
    /// Least-squares slope of `log e_{k+1}` against `log e_k`; needs three pairs.
    pub order: Option<f64>,
    pub superlinear: bool,
    /// The last error is at the noise floor (the root was hit).
    pub finite_termination: bool,
}

fn floor() -> f64 {
    10.0 * f64::EPSILON
}

/// Rate diagnostics of a raw error sequence `e_0, e_1, …`.
pub fn rate_from_errors(errors: &[f64]) -> Result<RateReport> {
    let eps = floor();
    let ratios: Vec<f64> = errors
        .windows(2)
        .filter(|w| w[0] > eps)
        .map(|w| w[1] / w[0])
        .collect();
    let Some(&last) = ratios.last() else {
        return Err(Error::InsufficientData(
            "no error above the noise floor".into(),
        ));
    };
    let pairs: Vec<(f64, f64)> = errors
        .windows(2)
        .filter(|w| w[0] > eps && w[1] > eps)
        .map(|w| (w[0].ln(), w[1].ln()))
        .collect();
    let order = if pairs.len() >= 3 {
        least_squares_slope(&pairs)
    } else {
        None
    };
    let finite_termination = errors.last().is_some_and(|e| *e <= eps);
    Ok(RateReport {
        ratios,
        order,
        superlinear: finite_termination || last < SUPERLINEAR_THRESHOLD,
        finite_termination,
    })
}

/// Rate diagnostics of a converged run against a known root.
pub fn rate_diagnostics(trace: &SolveTrace, root: &Vector) -> Result<RateReport> {
    if !trace.converged() {
        return Err(Error::InsufficientData(format!(
            "run ended with {}",
            trace.termination.label()
        )));
    }
    let errors: Vec<f64> = trace.iterates.iter().map(|x| (x - root).norm()).collect();
    rate_from_errors(&errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_sequence_is_linear() {
        let e: Vec<f64> = (0..20).map(|k| 2f64.powi(-k)).collect();
        let r = rate_from_errors(&e).unwrap();
        assert!(!r.superlinear);
        assert!((r.order.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_hit_is_superlinear() {
        let r = rate_from_errors(&[0.5, 0.0]).unwrap();
        assert!(r.superlinear && r.finite_termination);
        assert_eq!(r.order, None);
    }

    #[test]
    fn quadratic_sequence() {
        let e = [1e-1, 1e-2, 1e-4, 1e-8];
        let r = rate_from_errors(&e).unwrap();
        assert!((r.order.unwrap() - 2.0).abs() < 0.3);
    }

    #[test]
    fn nothing_to_measure() {
        assert!(rate_from_errors(&[0.0]).is_err());
    }
}
