//! Preparation cube tasks: `prepare`, `sanity_check`, `statistics`.

use std::fs;
use std::path::Path;

use fedeval_core::yaml::{self, Yaml};

use crate::site::{FEATURES_FILE, LABELS_FILE};
use crate::{contract, fmt_value, read_binary, read_features, Error, FEATURES};

pub const STATISTICS_FILE: &str = "statistics.yaml";

/// Fixed normalization constants shipped in the cube's `parameters.yaml`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepParams {
    pub center: [f64; FEATURES],
    pub scale: [f64; FEATURES],
}

impl Default for PrepParams {
    fn default() -> Self {
        PrepParams {
            center: [0.0; FEATURES],
            scale: [1.25; FEATURES],
        }
    }
}

pub(crate) fn vector(doc: &Yaml, key: &str) -> Result<[f64; FEATURES], Error> {
    let Some(items) = doc.get(key).and_then(Yaml::as_list) else {
        return contract(format!("parameters: {key} must be a list"));
    };
    if items.len() != FEATURES {
        return contract(format!("parameters: {key} needs {FEATURES} entries"));
    }
    let mut out = [0.0; FEATURES];
    for (slot, s) in out.iter_mut().zip(items) {
        *slot = s
            .parse()
            .map_err(|_| Error::Contract(format!("parameters: {key}: bad number {s:?}")))?;
    }
    Ok(out)
}

fn list(values: &[f64]) -> Yaml {
    Yaml::List(values.iter().map(|v| v.to_string()).collect())
}

impl PrepParams {
    pub fn from_yaml(text: &str) -> Result<Self, Error> {
        let doc = yaml::parse(text).map_err(|e| Error::Contract(format!("parameters: {e}")))?;
        let p = PrepParams {
            center: vector(&doc, "center")?,
            scale: vector(&doc, "scale")?,
        };
        if p.scale.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return contract("parameters: scale entries must be finite and non-zero");
        }
        Ok(p)
    }

    pub fn to_yaml(&self) -> String {
        yaml::to_string(&yaml::map([
            ("center", list(&self.center)),
            ("scale", list(&self.scale)),
        ]))
    }
}

/// Normalizes features with the fixed constants and copies labels. Lenient
/// by design: bad values become NaN and a missing labels file is skipped,
/// so that `sanity_check` is where such data gets rejected.
pub fn prepare(raw: &Path, out: &Path, params: &PrepParams) -> Result<(), Error> {
    let rows = read_features(&raw.join(FEATURES_FILE))?;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join(FEATURES_FILE))?;
    w.write_record((0..FEATURES).map(|j| format!("f{j}")))?;
    for row in &rows {
        w.write_record(
            (0..FEATURES).map(|j| fmt_value((row[j] - params.center[j]) / params.scale[j])),
        )?;
    }
    w.flush()?;
    let labels = raw.join(LABELS_FILE);
    if labels.exists() {
        let values = crate::read_column(&labels, "label")?;
        let mut w = csv::Writer::from_path(out.join(LABELS_FILE))?;
        w.write_record(["label"])?;
        for v in values {
            w.write_record([v.trim()])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Row count of a prepared tree that passes every check.
pub fn sanity_check(prepared: &Path) -> Result<usize, Error> {
    let labels_path = prepared.join(LABELS_FILE);
    if !labels_path.exists() {
        return contract("missing labels.csv");
    }
    let labels = read_binary(&labels_path, "label")?;
    let rows = read_features(&prepared.join(FEATURES_FILE))?;
    if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return contract(format!("features.csv row {}: non-finite value", i + 1));
    }
    if rows.len() != labels.len() {
        return contract(format!(
            "row count mismatch: {} features, {} labels",
            rows.len(),
            labels.len()
        ));
    }
    if rows.is_empty() {
        return contract("no rows");
    }
    Ok(rows.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistics {
    pub n: usize,
    pub positive_fraction: f64,
}

impl Statistics {
    pub fn to_yaml(&self) -> String {
        yaml::to_string(&yaml::map([
            ("n", yaml::scalar_value(self.n.to_string())),
            (
                "positive_fraction",
                yaml::scalar_value(self.positive_fraction.to_string()),
            ),
        ]))
    }
}

pub fn statistics(prepared: &Path) -> Result<Statistics, Error> {
    let labels = read_binary(&prepared.join(LABELS_FILE), "label")?;
    if labels.is_empty() {
        return contract("no rows");
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    Ok(Statistics {
        n: labels.len(),
        positive_fraction: positives as f64 / labels.len() as f64,
    })
}
