//! Metrics cube task `evaluate`.

use std::collections::BTreeMap;

use fedeval_core::yaml::{self, Yaml};

use crate::{contract, Error};

pub const RESULTS_FILE: &str = "results.yaml";
pub const METRIC_NAMES: [&str; 3] = ["accuracy", "sensitivity", "specificity"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_pairs(predictions: &[u8], labels: &[u8]) -> Result<Self, Error> {
        if predictions.len() != labels.len() {
            return contract(format!(
                "LENGTH_MISMATCH: {} predictions, {} labels",
                predictions.len(),
                labels.len()
            ));
        }
        let mut c = Confusion::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub metrics: BTreeMap<String, Option<f64>>,
    pub reasons: BTreeMap<String, String>,
    pub n: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn evaluate(c: &Confusion) -> Report {
    let mut metrics = BTreeMap::new();
    let mut reasons = BTreeMap::new();
    let entries = [
        ("accuracy", ratio(c.tp + c.tn, c.n()), "no samples"),
        (
            "sensitivity",
            ratio(c.tp, c.tp + c.fn_),
            "no positive labels (TP+FN = 0)",
        ),
        (
            "specificity",
            ratio(c.tn, c.tn + c.fp),
            "no negative labels (TN+FP = 0)",
        ),
    ];
    for (name, value, why) in entries {
        if value.is_none() {
            reasons.insert(name.to_string(), why.to_string());
        }
        metrics.insert(name.to_string(), value);
    }
    Report {
        metrics,
        reasons,
        n: c.n(),
    }
}

impl Report {
    pub fn to_yaml(&self) -> String {
        let mut entries: Vec<(String, Yaml)> = self
            .metrics
            .iter()
            .map(|(k, v)| {
                let text = v.map_or_else(|| "null".to_string(), |x| x.to_string());
                (k.clone(), yaml::scalar_value(text))
            })
            .collect();
        entries.push(("n".into(), yaml::scalar_value(self.n.to_string())));
        if !self.reasons.is_empty() {
            let reasons = self
                .reasons
                .iter()
                .map(|(k, v)| (k.clone(), yaml::scalar_value(v.clone())));
            entries.push(("reasons".into(), yaml::map(reasons)));
        }
        yaml::to_string(&yaml::map(entries))
    }

    pub fn from_yaml(text: &str) -> Result<Self, Error> {
        let doc = yaml::parse(text).map_err(|e| Error::Contract(format!("results: {e}")))?;
        let mut metrics = BTreeMap::new();
        for name in METRIC_NAMES {
            let node = doc
                .get(name)
                .ok_or_else(|| Error::Contract(format!("results: missing {name}")))?;
            let value = if node.is_null() {
                None
            } else {
                Some(
                    node.as_str()
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| Error::Contract(format!("results: bad {name}")))?,
                )
            };
            metrics.insert(name.to_string(), value);
        }
        let n = doc
            .get("n")
            .and_then(Yaml::as_str)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Contract("results: bad n".into()))?;
        let reasons = doc
            .get("reasons")
            .and_then(Yaml::as_map)
            .map(|m| {
                m.iter()
                    .filter_map(|(k, v)| Some((k.clone(), v.as_str()?.to_owned())))
                    .collect()
            })
            .unwrap_or_default();
        Ok(Report {
            metrics,
            reasons,
            n,
        })
    }

    /// Defined metrics only, as uploaded.
    pub fn defined(&self) -> BTreeMap<String, f64> {
        self.metrics
            .iter()
            .filter_map(|(k, v)| Some((k.clone(), (*v)?)))
            .collect()
    }
}
