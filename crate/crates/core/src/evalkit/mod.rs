//! Metrics (R², Pearson, RMSE) with overall and per-protein stratified
//! reports.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} points, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("metric undefined: zero variance in {0}")]
    ZeroVariance(&'static str),
}

/// A metric value that may be undefined (serialized as the literal string
/// "undefined", never NaN).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Defined(f64),
    Undefined,
}

impl MetricValue {
    pub fn as_option(self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(v),
            MetricValue::Undefined => None,
        }
    }

    pub fn to_field(self) -> String {
        match self {
            MetricValue::Defined(v) => format!("{v}"),
            MetricValue::Undefined => "undefined".to_string(),
        }
    }
}

impl Serialize for MetricValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MetricValue::Defined(v) => s.serialize_f64(*v),
            MetricValue::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => Ok(MetricValue::Defined(
                n.as_f64().ok_or_else(|| serde::de::Error::custom("bad number"))?,
            )),
            serde_json::Value::String(s) if s == "undefined" => Ok(MetricValue::Undefined),
            other => Err(serde::de::Error::custom(format!(
                "expected number or \"undefined\", got {other}"
            ))),
        }
    }
}

/// Coefficient of determination with the fixed convention x = predictions,
/// y = actuals: R² = 1 − Σ(xᵢ−yᵢ)² / Σ(yⱼ−ȳ)². May be negative.
pub fn r2(pred: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != actual.len() {
        return Err(MetricError::LengthMismatch(pred.len(), actual.len()));
    }
    if pred.len() < 2 {
        return Err(MetricError::TooFew {
            need: 2,
            got: pred.len(),
        });
    }
    let mean_y: f64 = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_res: f64 = pred
        .iter()
        .zip(actual)
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let ss_tot: f64 = actual.iter().map(|y| (y - mean_y).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ZeroVariance("actuals"));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Pearson correlation coefficient. The denominator is computed as a single
/// square root of the variance product so that exact rational results (e.g.
/// 0.8) come out exact in floating point.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFew { need: 2, got: x.len() });
    }
    let mx: f64 = x.iter().sum::<f64>() / x.len() as f64;
    let my: f64 = y.iter().sum::<f64>() / y.len() as f64;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 {
        return Err(MetricError::ZeroVariance("x"));
    }
    if vy == 0.0 {
        return Err(MetricError::ZeroVariance("y"));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Root mean squared error.
pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(MetricError::TooFew { need: 1, got: 0 });
    }
    let mse: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Overall,
    PerProtein(String),
}

impl Scope {
    pub fn csv_fields(&self) -> (&'static str, &str) {
        match self {
            Scope::Overall => ("overall", ""),
            Scope::PerProtein(u) => ("per_protein", u.as_str()),
        }
    }
}

/// One prediction tagged with its protein for stratification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedPrediction {
    pub structure_id: String,
    pub uniprot_id: String,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scope: Scope,
    pub n: usize,
    pub r2: MetricValue,
    pub pearson: MetricValue,
    pub rmse: MetricValue,
}

fn report_for(scope: Scope, pred: &[f64], actual: &[f64]) -> MetricsReport {
    let to_value = |r: Result<f64, MetricError>| match r {
        Ok(v) => MetricValue::Defined(v),
        Err(_) => MetricValue::Undefined,
    };
    MetricsReport {
        scope,
        n: pred.len(),
        r2: to_value(r2(pred, actual)),
        pearson: to_value(pearson(pred, actual)),
        rmse: to_value(rmse(pred, actual)),
    }
}

/// One Overall report pooling everything, then one PerProtein report per
/// UniProt (sorted). Proteins with fewer than two points report undefined
/// r2/pearson markers rather than NaN.
pub fn stratify(predictions: &[TaggedPrediction]) -> Vec<MetricsReport> {
    if predictions.is_empty() {
        return Vec::new();
    }
    let pred: Vec<f64> = predictions.iter().map(|p| p.y_pred).collect();
    let actual: Vec<f64> = predictions.iter().map(|p| p.y_true).collect();
    let mut reports = vec![report_for(Scope::Overall, &pred, &actual)];

    let mut by_protein: BTreeMap<&str, Vec<&TaggedPrediction>> = BTreeMap::new();
    for p in predictions {
        by_protein.entry(&p.uniprot_id).or_default().push(p);
    }
    for (uniprot, group) in by_protein {
        let pred: Vec<f64> = group.iter().map(|p| p.y_pred).collect();
        let actual: Vec<f64> = group.iter().map(|p| p.y_true).collect();
        reports.push(report_for(
            Scope::PerProtein(uniprot.to_string()),
            &pred,
            &actual,
        ));
    }
    reports
}
