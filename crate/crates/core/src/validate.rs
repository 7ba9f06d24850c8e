use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::CubeId;
use crate::model::{Benchmark, EvaluationResult};
use crate::registry::Registry;
use crate::uid::ContentUid;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResultDefect {
    WrongBenchmark,
    UnknownMetric { name: String },
    OutOfRange { name: String },
    MissingApproval { field: String },
    TimestampOrder,
    ZeroSamples,
    UnknownCube { stage: String },
    HashMismatch { stage: String },
}

impl fmt::Display for ResultDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResultDefect::WrongBenchmark => f.write_str("WRONG_BENCHMARK"),
            ResultDefect::UnknownMetric { name } => write!(f, "UNKNOWN_METRIC({name})"),
            ResultDefect::OutOfRange { name } => write!(f, "OUT_OF_RANGE({name})"),
            ResultDefect::MissingApproval { field } => write!(f, "MISSING_APPROVAL({field})"),
            ResultDefect::TimestampOrder => f.write_str("TIMESTAMP_ORDER"),
            ResultDefect::ZeroSamples => f.write_str("ZERO_SAMPLES"),
            ResultDefect::UnknownCube { stage } => write!(f, "UNKNOWN_CUBE({stage})"),
            ResultDefect::HashMismatch { stage } => write!(f, "HASH_MISMATCH({stage})"),
        }
    }
}

/// Checks a result against its benchmark's metric specs and the cube
/// manifests currently registered.
pub fn validate_result(
    result: &EvaluationResult,
    benchmark: &Benchmark,
    registry: &Registry,
) -> Result<(), Vec<ResultDefect>> {
    let mut defects = Vec::new();
    if result.benchmark_id != benchmark.id {
        defects.push(ResultDefect::WrongBenchmark);
    }
    for (name, &value) in &result.metrics {
        match benchmark.metric_spec(name) {
            None => defects.push(ResultDefect::UnknownMetric { name: name.clone() }),
            Some(spec) if !value.is_finite() || !spec.range.contains(value) => {
                defects.push(ResultDefect::OutOfRange { name: name.clone() })
            }
            Some(_) => {}
        }
    }
    if result.sample_count == 0 {
        defects.push(ResultDefect::ZeroSamples);
    }
    if !(result.model_approved_at <= result.result_approved_at
        && result.result_approved_at <= result.uploaded_at)
    {
        defects.push(ResultDefect::TimestampOrder);
    }

    let stages: [(&str, &CubeId, &ContentUid); 3] = [
        (
            "prep",
            &benchmark.preparation_cube,
            &result.executed_hashes.prep,
        ),
        (
            "model",
            &result.model_cube_id,
            &result.executed_hashes.model,
        ),
        (
            "metrics_cube",
            &benchmark.metrics_cube,
            &result.executed_hashes.metrics_cube,
        ),
    ];
    for (stage, cube_id, executed) in stages {
        match registry.cubes.get(cube_id) {
            None => defects.push(ResultDefect::UnknownCube {
                stage: stage.into(),
            }),
            Some(cube) if cube.manifest_uid != *executed => {
                defects.push(ResultDefect::HashMismatch {
                    stage: stage.into(),
                })
            }
            Some(_) => {}
        }
    }

    if defects.is_empty() {
        Ok(())
    } else {
        Err(defects)
    }
}
