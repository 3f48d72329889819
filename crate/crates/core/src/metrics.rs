//! Quality measures on test-split predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed and predicted values, paired by position.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    observed: Vec<f64>,
    predicted: Vec<f64>,
}

impl EvalPair {
    pub fn new(observed: Vec<f64>, predicted: Vec<f64>) -> Result<Self> {
        if observed.len() != predicted.len() {
            return Err(Error::param(
                "predicted",
                format!("{} predictions for {} observations", predicted.len(), observed.len()),
            ));
        }
        if observed.is_empty() {
            return Err(Error::InsufficientData("no evaluation pairs".into()));
        }
        if observed.iter().chain(&predicted).any(|v| !v.is_finite()) {
            return Err(Error::param("predicted", "non-finite value in evaluation pair"));
        }
        Ok(Self { observed, predicted })
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.observed.iter().zip(&self.predicted).map(|(o, p)| o - p)
    }
}

pub fn rmse(e: &EvalPair) -> f64 {
    (e.residuals().map(|r| r * r).sum::<f64>() / e.len() as f64).sqrt()
}

pub fn mae(e: &EvalPair) -> f64 {
    e.residuals().map(f64::abs).sum::<f64>() / e.len() as f64
}

/// Coefficient of determination; negative when worse than predicting the mean.
pub fn r2(e: &EvalPair) -> Result<f64> {
    let n = e.len() as f64;
    let mean = e.observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = e.observed.iter().map(|o| (o - mean).powi(2)).sum();
    if e.len() < 2 || ss_tot == 0.0 {
        return Err(Error::ConstantObservations);
    }
    let ss_res: f64 = e.residuals().map(|r| r * r).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn delta_max(e: &EvalPair) -> f64 {
    e.residuals().map(f64::abs).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Mae,
    R2,
    DeltaMax,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Rmse, Metric::Mae, Metric::R2, Metric::DeltaMax];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
            Metric::R2 => "r2",
            Metric::DeltaMax => "delta_max",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::param("metrics", format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    /// `NaN` when the observations are constant.
    pub r2: f64,
    pub delta_max: f64,
}

impl MetricSet {
    pub fn compute(e: &EvalPair) -> Self {
        Self {
            rmse: rmse(e),
            mae: mae(e),
            r2: r2(e).unwrap_or(f64::NAN),
            delta_max: delta_max(e),
        }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rmse => self.rmse,
            Metric::Mae => self.mae,
            Metric::R2 => self.r2,
            Metric::DeltaMax => self.delta_max,
        }
    }
}
