//! Extrapolation of sampled schedules to `t -> 0`.

use crate::error::{Error, Result};

/// Intercept of the least-squares line through the three samples with the
/// smallest abscissae.
pub fn linear_to_zero(ts: &[f64], vals: &[f64]) -> Result<f64> {
    if ts.len() != vals.len() || ts.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "extrapolation needs at least 3 samples, got {} times and {} values",
            ts.len(),
            vals.len()
        )));
    }
    let mut idx: Vec<usize> = (0..ts.len()).collect();
    idx.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let pick = &idx[..3];
    let (x, y): (Vec<f64>, Vec<f64>) = pick.iter().map(|&i| (ts[i], vals[i])).unzip();
    Ok(fit_line(&x, &y).0)
}

/// Least-squares `(intercept, slope)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Geometric schedule `t_min * ratio^k` for `k = 0..count`.
pub fn geometric_schedule(t_min: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| t_min * ratio.powi(k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_data_is_recovered() {
        let ts = [0.4, 0.1, 0.2, 0.3];
        let v: Vec<f64> = ts.iter().map(|t| 2.5 - 3.0 * t).collect();
        assert!((linear_to_zero(&ts, &v).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn only_three_smallest_times_are_used() {
        let ts = [0.1, 0.2, 0.3, 5.0];
        let v = [1.0, 1.0, 1.0, 100.0];
        assert!((linear_to_zero(&ts, &v).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn short_schedules_are_rejected() {
        assert!(linear_to_zero(&[0.1, 0.2], &[1.0, 2.0]).is_err());
    }
}
