use crate::{error::invalid, Result};

/// Default MAPE floor on |truth|, SI units.
pub const MAPE_FLOOR: f64 = 1e-15;

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(invalid(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(invalid("metric of an empty set"));
    }
    Ok(())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Mean absolute percentage error over entries with `|truth| >= floor`;
/// NaN when no entry qualifies.
pub fn mape(pred: &[f64], truth: &[f64], floor: f64) -> Result<f64> {
    check(pred, truth)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        if t.abs() >= floor {
            sum += ((p - t) / t).abs();
            n += 1;
        }
    }
    Ok(if n == 0 { f64::NAN } else { 100.0 * sum / n as f64 })
}
