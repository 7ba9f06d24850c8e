use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Benchmark, CubeKind, Visibility};
use crate::registry::Registry;

/// One problem with a benchmark bundle. Serialized as
/// `{"code": "MISSING_ASSET", "field": "metrics_cube"}` and similar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BundleDefect {
    MissingAsset {
        field: String,
    },
    WrongCubeKind {
        field: String,
        expected: CubeKind,
        actual: CubeKind,
    },
    EmptyMetricSpecs,
    DuplicateMetric {
        name: String,
    },
    InvalidRange {
        name: String,
    },
    EmptyDocsUrl,
    EmptyAllowlist,
}

impl fmt::Display for BundleDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BundleDefect::MissingAsset { field } => write!(f, "MISSING_ASSET({field})"),
            BundleDefect::WrongCubeKind {
                field,
                expected,
                actual,
            } => {
                write!(
                    f,
                    "WRONG_CUBE_KIND({field}: expected {expected:?}, got {actual:?})"
                )
            }
            BundleDefect::EmptyMetricSpecs => f.write_str("EMPTY_METRIC_SPECS"),
            BundleDefect::DuplicateMetric { name } => write!(f, "DUPLICATE_METRIC({name})"),
            BundleDefect::InvalidRange { name } => write!(f, "INVALID_RANGE({name})"),
            BundleDefect::EmptyDocsUrl => f.write_str("EMPTY_DOCS_URL"),
            BundleDefect::EmptyAllowlist => f.write_str("EMPTY_ALLOWLIST"),
        }
    }
}

/// Reports every defect of `benchmark` against the cubes in `registry`.
pub fn validate_benchmark_bundle(
    benchmark: &Benchmark,
    registry: &Registry,
) -> Result<(), Vec<BundleDefect>> {
    let mut defects = Vec::new();

    let refs = [
        (
            "preparation_cube",
            &benchmark.preparation_cube,
            CubeKind::Preparation,
        ),
        ("metrics_cube", &benchmark.metrics_cube, CubeKind::Metrics),
        (
            "reference_model_cube",
            &benchmark.reference_model_cube,
            CubeKind::Model,
        ),
    ];
    for (field, id, expected) in refs {
        match registry.cubes.get(id) {
            None => defects.push(BundleDefect::MissingAsset {
                field: field.into(),
            }),
            Some(cube) if cube.kind != expected => defects.push(BundleDefect::WrongCubeKind {
                field: field.into(),
                expected,
                actual: cube.kind,
            }),
            Some(_) => {}
        }
    }

    if benchmark.metric_specs.is_empty() {
        defects.push(BundleDefect::EmptyMetricSpecs);
    }
    let mut seen = BTreeSet::new();
    for spec in &benchmark.metric_specs {
        if !seen.insert(spec.name.as_str()) {
            defects.push(BundleDefect::DuplicateMetric {
                name: spec.name.clone(),
            });
        }
        let r = spec.range;
        if spec.name.is_empty() || !r.min.is_finite() || !r.max.is_finite() || r.min > r.max {
            defects.push(BundleDefect::InvalidRange {
                name: spec.name.clone(),
            });
        }
    }

    if benchmark.docs_url.trim().is_empty() {
        defects.push(BundleDefect::EmptyDocsUrl);
    }
    if benchmark.visibility == Visibility::Closed && benchmark.allowlist.is_empty() {
        defects.push(BundleDefect::EmptyAllowlist);
    }

    if defects.is_empty() {
        Ok(())
    } else {
        Err(defects)
    }
}
