use serde::{Deserialize, Serialize};

use crate::backends::{Backend, NliClass, NliLogits};
use crate::data::Label;
use crate::error::{Error, Result};

const LOG_T_MIN: f64 = -4.605_170_185_988_091; // ln 0.01
const LOG_T_MAX: f64 = 4.605_170_185_988_091; // ln 100
const GRID_POINTS: usize = 401;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub temperature: f64,
    /// NLL at `T = 1`.
    pub nll_before: f64,
    pub nll_after: f64,
    pub samples: usize,
}

fn target_class(label: Label) -> NliClass {
    match label {
        Label::Supports => NliClass::Entailment,
        Label::Refutes => NliClass::Contradiction,
        Label::Nei => NliClass::Neutral,
    }
}

/// Mean negative log-likelihood of `softmax(z / T)` at the gold class.
pub fn mean_nll(samples: &[(NliLogits, Label)], temperature: f64) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|(z, y)| {
            let z = z.as_array().map(|v| v / temperature);
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - z[target_class(*y) as usize]
        })
        .sum();
    total / samples.len() as f64
}

/// Fit a single temperature by minimising NLL over `log T`: a coarse grid,
/// then golden-section refinement inside the best grid cell.
pub fn calibrate_logits(samples: &[(NliLogits, Label)]) -> Result<CalibrationResult> {
    if samples.is_empty() {
        return Err(Error::Data("calibration needs at least one pair".into()));
    }
    if let Some((z, _)) = samples.iter().find(|(z, _)| !z.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite calibration logits {:?}",
            z.as_array()
        )));
    }
    let f = |u: f64| mean_nll(samples, u.exp());
    let step = (LOG_T_MAX - LOG_T_MIN) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| LOG_T_MIN + step * i as f64)
        .collect();
    let best = grid
        .iter()
        .map(|&u| f(u))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(GRID_POINTS - 1)];
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (f1 - f2).abs() < 1e-8 && hi - lo < 1e-6 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    let u = if f1 <= f2 { x1 } else { x2 };
    let nll_before = mean_nll(samples, 1.0);
    let mut temperature = u.exp();
    let mut nll_after = mean_nll(samples, temperature);
    if nll_after > nll_before {
        temperature = 1.0;
        nll_after = nll_before;
    }
    Ok(CalibrationResult {
        temperature,
        nll_before,
        nll_after,
        samples: samples.len(),
    })
}

/// Query the backend for `(premise, hypothesis)` logits and fit T.
pub fn calibrate_temperature(
    pairs: &[(String, String, Label)],
    backend: &dyn Backend,
) -> Result<CalibrationResult> {
    if pairs.is_empty() {
        return Err(Error::Data("calibration needs at least one pair".into()));
    }
    let refs: Vec<(&str, &str)> = pairs
        .iter()
        .map(|(p, h, _)| (p.as_str(), h.as_str()))
        .collect();
    let logits = backend.nli_logits_batch(&refs)?;
    let samples: Vec<(NliLogits, Label)> = logits
        .into_iter()
        .zip(pairs.iter().map(|(_, _, y)| *y))
        .collect();
    calibrate_logits(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_error() {
        assert!(calibrate_logits(&[]).is_err());
    }

    #[test]
    fn never_worse_than_identity() {
        let samples = vec![
            (NliLogits::new(3.0, 0.0, -1.0), Label::Supports),
            (NliLogits::new(3.0, 0.0, -1.0), Label::Refutes),
            (NliLogits::new(-2.0, 1.0, 0.5), Label::Nei),
        ];
        let r = calibrate_logits(&samples).unwrap();
        assert!(r.nll_after <= r.nll_before + 1e-12);
        assert!(r.temperature > 0.0);
    }

    #[test]
    fn nll_uniform() {
        let samples = vec![(NliLogits::new(0.0, 0.0, 0.0), Label::Nei)];
        assert!((mean_nll(&samples, 2.0) - 3f64.ln()).abs() < 1e-15);
    }
}
