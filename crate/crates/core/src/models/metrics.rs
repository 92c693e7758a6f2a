//! Error metrics used to gate explanations: MAE, MAPE and range-scaled MAE,
//! with percentile bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub n: usize,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    /// Percent.
    pub rsmae: f64,
    pub mae_ci: Interval,
    pub mape_ci: Interval,
    pub rsmae_ci: Interval,
    pub bootstrap_seed: u64,
}

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != actual.len() {
        return Err(Error::InvalidParameter(format!(
            "metrics need equal-length non-empty vectors, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    Ok(())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / pred.len() as f64)
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    if actual.contains(&0.0) {
        return Err(Error::MetricUndefined("MAPE with a zero actual value"));
    }
    Ok(100.0 * pred.iter().zip(actual).map(|(p, a)| ((p - a) / a).abs()).sum::<f64>() / pred.len() as f64)
}

/// MAE divided by the range of the actuals, in percent.
pub fn rsmae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    let mae = mae(pred, actual)?;
    let (lo, hi) = actual
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
    if hi <= lo {
        return Err(Error::MetricUndefined("RSMAE with zero range of actual values"));
    }
    Ok(mae / (hi - lo) * 100.0)
}

fn percentile_interval(mut values: Vec<f64>) -> Interval {
    values.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (values.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        let j = (i + 1).min(values.len() - 1);
        values[i] + frac * (values[j] - values[i])
    };
    Interval {
        low: at(0.025),
        high: at(0.975),
    }
}

/// All three metrics plus 95% bootstrap intervals over rows.
pub fn compute_metrics(pred: &[f64], actual: &[f64], split: &str, bootstrap_seed: u64) -> Result<MetricsReport> {
    let (mae_v, mape_v, rsmae_v) = (mae(pred, actual)?, mape(pred, actual)?, rsmae(pred, actual)?);
    let n = pred.len();
    let mut rng = seed::rng(seed::derive_str(bootstrap_seed, "metrics-bootstrap"));
    let mut samples = (Vec::new(), Vec::new(), Vec::new());
    let (mut p, mut a) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for i in 0..n {
            let r = rng.random_range(0..n);
            p[i] = pred[r];
            a[i] = actual[r];
        }
        samples.0.push(mae(&p, &a)?);
        samples.1.push(mape(&p, &a)?);
        // a resample can collapse the range; it carries no RSMAE information
        if let Ok(v) = rsmae(&p, &a) {
            samples.2.push(v);
        }
    }
    let rsmae_ci = if samples.2.is_empty() {
        Interval {
            low: rsmae_v,
            high: rsmae_v,
        }
    } else {
        percentile_interval(samples.2)
    };
    Ok(MetricsReport {
        split: split.to_string(),
        n,
        mae: mae_v,
        mape: mape_v,
        rsmae: rsmae_v,
        mae_ci: percentile_interval(samples.0),
        mape_ci: percentile_interval(samples.1),
        rsmae_ci,
        bootstrap_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions_score_zero() {
        let y = [11.8, 11.9, 12.1, 12.3];
        let m = compute_metrics(&y, &y, "test", 1).unwrap();
        assert_eq!((m.mae, m.mape, m.rsmae), (0.0, 0.0, 0.0));
        assert_eq!(m.mae_ci, Interval { low: 0.0, high: 0.0 });
    }

    #[test]
    fn rsmae_is_mae_over_range() {
        let actual: Vec<f64> = (0..=100).map(f64::from).collect();
        let pred: Vec<f64> = actual.iter().map(|v| v + 1.0).collect();
        assert!((rsmae(&pred, &actual).unwrap() - 1.0).abs() < 1e-12);
        // zero actual value: MAPE is undefined but RSMAE is not
        assert!(matches!(mape(&pred, &actual), Err(Error::MetricUndefined(_))));
    }

    #[test]
    fn reported_forest_row_is_consistent() {
        // MAE 0.0037 g at RSMAE 0.79% implies a 0.468 g range
        let range: f64 = 0.0037 / 0.0079;
        assert!((range - 0.468).abs() < 1e-3);
        let actual = [11.7, 11.7 + range, 11.9];
        let pred = [11.7 + 0.0037, 11.7 + range - 0.0037, 11.9 + 0.0037];
        let m = compute_metrics(&pred, &actual, "test", 0).unwrap();
        assert!((m.mae - 0.0037).abs() < 1e-12);
        assert!((m.rsmae - 0.79).abs() < 1e-9);
    }

    #[test]
    fn undefined_metrics_are_errors() {
        assert!(matches!(
            rsmae(&[1.0, 2.0], &[3.0, 3.0]),
            Err(Error::MetricUndefined(_))
        ));
        assert!(compute_metrics(&[], &[], "x", 0).is_err());
        assert!(compute_metrics(&[1.0], &[1.0, 2.0], "x", 0).is_err());
    }

    #[test]
    fn interval_brackets_estimate() {
        let actual: Vec<f64> = (0..200).map(|i| 11.5 + i as f64 * 0.002).collect();
        let pred: Vec<f64> = actual
            .iter()
            .enumerate()
            .map(|(i, a)| a + if i % 3 == 0 { 0.004 } else { -0.002 })
            .collect();
        let m = compute_metrics(&pred, &actual, "test", 5).unwrap();
        assert!(m.mae_ci.low <= m.mae && m.mae <= m.mae_ci.high);
        assert!(m.rsmae_ci.low <= m.rsmae && m.rsmae <= m.rsmae_ci.high);
        assert_eq!(m, compute_metrics(&pred, &actual, "test", 5).unwrap());
    }

    proptest! {
        #[test]
        fn constant_offset_gives_mae_of_offset(c in -5.0f64..5.0, s in any::<u64>()) {
            let y: Vec<f64> = (0..20).map(|i| 10.0 + ((s >> (i % 60)) & 7) as f64).collect();
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            prop_assert!((mae(&shifted, &y).unwrap() - c.abs()).abs() < 1e-12);
        }
    }
}
