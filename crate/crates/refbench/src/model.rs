//! Model cubes. Both expose one task, `infer`.

use std::path::Path;

use fedeval_core::yaml::{self, Yaml};

use crate::prep::vector;
use crate::site::FEATURES_FILE;
use crate::{contract, read_features, Error, FEATURES};

pub const PREDICTIONS_COLUMN: &str = "prediction";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub weights: [f64; FEATURES],
    pub bias: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            weights: [0.9, 0.7, 0.5, 0.3],
            bias: -0.25,
        }
    }
}

impl LinearParams {
    pub fn from_yaml(text: &str) -> Result<Self, Error> {
        let doc = yaml::parse(text).map_err(|e| Error::Contract(format!("parameters: {e}")))?;
        let bias = doc
            .get("bias")
            .and_then(Yaml::as_str)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Contract("parameters: bias must be a number".into()))?;
        Ok(LinearParams {
            weights: vector(&doc, "weights")?,
            bias,
        })
    }

    pub fn to_yaml(&self) -> String {
        yaml::to_string(&yaml::map([
            (
                "weights",
                Yaml::List(self.weights.iter().map(|w| w.to_string()).collect()),
            ),
            ("bias", yaml::scalar_value(self.bias.to_string())),
        ]))
    }

    /// `bias + Σ w_j x_j`, accumulated left to right.
    pub fn score(&self, row: &[f64; FEATURES]) -> f64 {
        let mut s = self.bias;
        for (w, x) in self.weights.iter().zip(row) {
            s += w * x;
        }
        s
    }

    pub fn predict(&self, row: &[f64; FEATURES]) -> u8 {
        u8::from(self.score(row) > 0.0)
    }
}

fn rows(prepared: &Path) -> Result<Vec<[f64; FEATURES]>, Error> {
    let rows = read_features(&prepared.join(FEATURES_FILE))?;
    if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return contract(format!("features.csv row {}: non-finite value", i + 1));
    }
    Ok(rows)
}

/// Always the training-prior majority class, 0.
pub fn majority(prepared: &Path) -> Result<Vec<u8>, Error> {
    Ok(vec![0; rows(prepared)?.len()])
}

pub fn linear(prepared: &Path, params: &LinearParams) -> Result<Vec<u8>, Error> {
    Ok(rows(prepared)?.iter().map(|r| params.predict(r)).collect())
}
