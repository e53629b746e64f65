//! Split conformal prediction intervals around any surrogate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::{interval_from_prediction, GpModel};
use crate::space::{FeatureSpace, Point};
use crate::surrogate::Surrogate;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibration {
    pub alpha: f64,
    /// Half-width in response units.
    pub q_alpha: f64,
    /// Absolute calibration residuals, ascending.
    pub residuals: Vec<f64>,
    pub n_cal: usize,
}

/// Uniform random `(train, calibration)` partition.
pub fn split(data: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    data.split(train_frac, seed)
}

/// 1-based rank `⌈(1 - α)(n + 1)⌉`, clamped to `n`.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    let x = (1.0 - alpha) * (n as f64 + 1.0);
    // guards products like 0.8 * 5 = 4.000000000000001
    let rank = (x - 1e-9 * x.max(1.0)).ceil().max(1.0) as usize;
    rank.min(n)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("alpha {alpha} must lie in (0, 1)")))
    }
}

/// Calibrates from `(y, ŷ)` pairs.
pub fn calibrate(pairs: &[(f64, f64)], alpha: f64) -> Result<ConformalCalibration> {
    check_alpha(alpha)?;
    if pairs.is_empty() {
        return Err(Error::validation("conformal calibration needs at least one point"));
    }
    let mut residuals: Vec<f64> = pairs.iter().map(|(y, yhat)| (y - yhat).abs()).collect();
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::validation("calibration residuals must be finite"));
    }
    residuals.sort_by(f64::total_cmp);
    let n = residuals.len();
    let q_alpha = residuals[conformal_rank(n, alpha) - 1];
    Ok(ConformalCalibration { alpha, q_alpha, residuals, n_cal: n })
}

pub fn calibrate_model(model: &dyn Surrogate, cal: &Dataset, alpha: f64) -> Result<ConformalCalibration> {
    let pairs = cal
        .points()
        .iter()
        .zip(cal.responses())
        .map(|(p, &y)| Ok((y, model.predict_point(p)?)))
        .collect::<Result<Vec<_>>>()?;
    calibrate(&pairs, alpha)
}

impl ConformalCalibration {
    pub fn interval(&self, yhat: f64) -> (f64, f64) {
        (yhat - self.q_alpha, yhat + self.q_alpha)
    }

    pub fn width(&self) -> f64 {
        2.0 * self.q_alpha
    }
}

/// One row of the interval table: GP and conformal bounds side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRow {
    pub point: Point,
    pub y_true: Option<f64>,
    pub mean: f64,
    pub gp_lower: f64,
    pub gp_upper: f64,
    pub conf_lower: f64,
    pub conf_upper: f64,
}

pub fn interval_table(
    model: &GpModel,
    calib: &ConformalCalibration,
    points: &[Point],
    y_true: Option<&[f64]>,
) -> Result<Vec<IntervalRow>> {
    if let Some(y) = y_true {
        if y.len() != points.len() {
            return Err(Error::validation(format!("{} points but {} responses", points.len(), y.len())));
        }
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let pred = model.predict(p)?;
            let (gp_lower, gp_upper) = interval_from_prediction(&pred, calib.alpha)?;
            let (conf_lower, conf_upper) = calib.interval(pred.mean);
            Ok(IntervalRow {
                point: p.clone(),
                y_true: y_true.map(|y| y[i]),
                mean: pred.mean,
                gp_lower,
                gp_upper,
                conf_lower,
                conf_upper,
            })
        })
        .collect()
}

/// Count of rows whose (GP, conformal) lower bound is negative.
pub fn negative_lower_counts(rows: &[IntervalRow]) -> (usize, usize) {
    (
        rows.iter().filter(|r| r.gp_lower < 0.0).count(),
        rows.iter().filter(|r| r.conf_lower < 0.0).count(),
    )
}

/// Fraction of rows with `y_true` inside the conformal interval.
pub fn empirical_coverage(rows: &[IntervalRow]) -> Option<f64> {
    let hits: Vec<bool> = rows
        .iter()
        .map(|r| r.y_true.map(|y| r.conf_lower <= y && y <= r.conf_upper))
        .collect::<Option<_>>()?;
    if hits.is_empty() {
        return None;
    }
    Some(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

pub fn write_interval_csv<W: Write>(space: &FeatureSpace, rows: &[IntervalRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = space.names().collect();
    header.extend(["y_true", "mean", "gp_lower", "gp_upper", "conf_lower", "conf_upper"]);
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.point.values().iter().map(|v| v.to_string()).collect();
        rec.push(r.y_true.map(|y| y.to_string()).unwrap_or_default());
        for v in [r.mean, r.gp_lower, r.gp_upper, r.conf_lower, r.conf_upper] {
            rec.push(v.to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
