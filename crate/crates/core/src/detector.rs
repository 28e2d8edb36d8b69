//! Residual-based leak detector.
//!
//! Each sensor is predicted linearly from all other sensors; the
//! prediction errors (residuals) feed one of two alarm rules:
//!
//! * `WeightedSum` — alarm when Σ_s q_s·r_s > 1, with q calibrated on a
//!   validation window so that clean data never alarms.
//! * `MaxThreshold` — alarm when any single r_s exceeds its per-sensor
//!   threshold, set to a multiple of the worst training residual.
//!
//! Both rules use strict inequalities: a residual exactly at the
//! threshold does not alarm.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::MeasurementSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    WeightedSum,
    MaxThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Rule {
    /// Alarm iff Σ_s q_s·r_s > 1.
    WeightedSum { q: Vec<f64> },
    /// Alarm iff ∃s: r_s > tau_s.
    MaxThreshold { tau: Vec<f64> },
}

impl Rule {
    /// Evaluate the alarm rule on a residual vector.
    pub fn alarms(&self, residuals: &[f64]) -> bool {
        match self {
            Rule::WeightedSum { q } => {
                let score: f64 = q.iter().zip(residuals).map(|(qi, ri)| qi * ri).sum();
                score > 1.0
            }
            Rule::MaxThreshold { tau } => residuals.iter().zip(tau).any(|(r, t)| r > t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    /// WeightedSum safety factor γ > 1; residual weights are sized so the
    /// validation score never exceeds 1/γ.
    pub gamma: f64,
    /// MaxThreshold multiplier c > 1 on the worst training residual.
    pub threshold_factor: f64,
    /// Ridge fallback strength for rank-deficient regressions.
    pub ridge: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            gamma: 1.1,
            threshold_factor: 1.5,
            ridge: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub train_rows: usize,
    pub val_rows: usize,
    /// RANK_DEFICIENT / ZERO_RESIDUAL notes from training; never fatal.
    pub warnings: Vec<String>,
}

/// Trained per-sensor linear predictors plus an alarm rule. Immutable
/// after training; all evaluation methods are pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub sensor_ids: Vec<String>,
    /// weights[s] has length S−1: coefficients over all other sensors in
    /// order (sensor s skipped).
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub rule: Rule,
    pub meta: TrainMeta,
}

/// Fit per-sensor ordinary least squares and calibrate the alarm rule.
///
/// `WeightedSum` requires a validation series. Rank-deficient designs
/// fall back to ridge regression (λ = `params.ridge`) with a warning;
/// all-zero residual maxima are floored at 1e-9 m with a warning.
pub fn train(
    train: &MeasurementSeries,
    val: Option<&MeasurementSeries>,
    kind: RuleKind,
    params: &TrainParams,
) -> Result<DetectorModel> {
    let s_count = train.num_sensors();
    let rows = train.num_steps();
    if rows < s_count + 1 {
        return Err(Error::Invalid(format!(
            "need at least {} training rows for {} sensors, got {rows}",
            s_count + 1,
            s_count
        )));
    }
    if !(params.gamma > 1.0) || !(params.threshold_factor > 1.0) {
        return Err(Error::Invalid(
            "gamma and threshold_factor must exceed 1".into(),
        ));
    }

    let mut warnings = Vec::new();
    let mut weights = Vec::with_capacity(s_count);
    let mut biases = Vec::with_capacity(s_count);
    for s in 0..s_count {
        let (w, b) = fit_sensor(train, s, params, &mut warnings)?;
        weights.push(w);
        biases.push(b);
    }

    let mut model = DetectorModel {
        sensor_ids: train.sensor_ids.clone(),
        weights,
        biases,
        rule: Rule::MaxThreshold { tau: vec![] },
        meta: TrainMeta {
            train_rows: rows,
            val_rows: 0,
            warnings: vec![],
        },
    };

    let rule = match kind {
        RuleKind::MaxThreshold => {
            let max_r = max_residuals(&model, train, &mut warnings)?;
            Rule::MaxThreshold {
                tau: max_r.iter().map(|m| params.threshold_factor * m).collect(),
            }
        }
        RuleKind::WeightedSum => {
            let val = val.ok_or_else(|| {
                Error::Invalid("WeightedSum calibration needs a validation series".into())
            })?;
            if val.num_sensors() != s_count {
                return Err(Error::DimMismatch {
                    want: s_count,
                    got: val.num_sensors(),
                });
            }
            model.meta.val_rows = val.num_steps();
            let max_r = max_residuals(&model, val, &mut warnings)?;
            Rule::WeightedSum {
                q: max_r
                    .iter()
                    .map(|m| 1.0 / (s_count as f64 * params.gamma * m))
                    .collect(),
            }
        }
    };

    model.rule = rule;
    model.meta.warnings = warnings;
    Ok(model)
}

/// OLS of sensor `s` on all other sensors via the normal equations.
fn fit_sensor(
    series: &MeasurementSeries,
    s: usize,
    params: &TrainParams,
    warnings: &mut Vec<String>,
) -> Result<(Vec<f64>, f64)> {
    let rows = series.num_steps();
    let s_count = series.num_sensors();
    let cols = s_count; // S−1 regressors + intercept

    let mut x = DMatrix::<f64>::zeros(rows, cols);
    let mut t = DVector::<f64>::zeros(rows);
    for (r, row) in series.values.iter().enumerate() {
        let mut c = 0;
        for (i, v) in row.iter().enumerate() {
            if i == s {
                continue;
            }
            x[(r, c)] = *v;
            c += 1;
        }
        x[(r, cols - 1)] = 1.0;
        t[r] = row[s];
    }

    let xtx = x.transpose() * &x;
    let xty = x.transpose() * t;

    let beta = match Cholesky::new(xtx.clone()) {
        Some(ch) => ch.solve(&xty),
        None => {
            warnings.push(format!(
                "RANK_DEFICIENT: sensor '{}' regression is rank-deficient; using ridge λ = {:.0e}",
                series.sensor_ids[s], params.ridge
            ));
            let ridge = &xtx + DMatrix::identity(cols, cols) * params.ridge;
            match Cholesky::new(ridge.clone()) {
                Some(ch) => ch.solve(&xty),
                None => xtx
                    .lu()
                    .solve(&xty)
                    .ok_or(Error::SingularSystem { step: 0 })?,
            }
        }
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { step: 0 });
    }

    let w = beta.iter().take(cols - 1).copied().collect();
    Ok((w, beta[cols - 1]))
}

/// Per-sensor max |residual| over a series, floored at 1e-9 m.
fn max_residuals(
    model: &DetectorModel,
    series: &MeasurementSeries,
    warnings: &mut Vec<String>,
) -> Result<Vec<f64>> {
    let mut max_r = vec![0.0f64; model.sensor_ids.len()];
    for row in &series.values {
        let r = model.residuals(row)?;
        for (m, ri) in max_r.iter_mut().zip(&r) {
            *m = m.max(*ri);
        }
    }
    for (s, m) in max_r.iter_mut().enumerate() {
        if *m == 0.0 {
            warnings.push(format!(
                "ZERO_RESIDUAL: sensor '{}' fits the data exactly; flooring its max residual at 1e-9 m",
                model.sensor_ids[s]
            ));
            *m = 1e-9;
        }
    }
    Ok(max_r)
}

impl DetectorModel {
    pub fn num_sensors(&self) -> usize {
        self.sensor_ids.len()
    }

    /// Predicted reading of sensor `s` given the full measurement row.
    pub fn predict(&self, s: usize, y: &[f64]) -> f64 {
        let mut acc = self.biases[s];
        let mut c = 0;
        for (i, v) in y.iter().enumerate() {
            if i == s {
                continue;
            }
            acc += self.weights[s][c] * v;
            c += 1;
        }
        acc
    }

    /// Absolute prediction error per sensor.
    pub fn residuals(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.num_sensors() {
            return Err(Error::DimMismatch {
                want: self.num_sensors(),
                got: y.len(),
            });
        }
        Ok((0..y.len())
            .map(|s| (self.predict(s, y) - y[s]).abs())
            .collect())
    }

    /// 1 iff the alarm rule fires on this measurement row.
    pub fn detect(&self, y: &[f64]) -> Result<bool> {
        Ok(self.rule.alarms(&self.residuals(y)?))
    }

    /// 1 iff any step in `{start, …, start + k}` (inclusive) alarms.
    pub fn detect_window(&self, m: &MeasurementSeries, start: usize, k: usize) -> Result<bool> {
        let end = start + k;
        if end >= m.num_steps() {
            return Err(Error::Range {
                start,
                end,
                len: m.num_steps(),
            });
        }
        for t in start..=end {
            if self.detect(m.row(t))? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("detector serializes")
    }

    pub fn from_json(text: &str) -> Result<DetectorModel> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("detector json: {e}")))
    }

    /// Number of alarm rows on a series (0 on clean calibration data).
    pub fn false_alarms(&self, m: &MeasurementSeries) -> Result<usize> {
        let mut n = 0;
        for row in &m.values {
            if self.detect(row)? {
                n += 1;
            }
        }
        Ok(n)
    }
}
