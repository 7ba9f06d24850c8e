//! Writes the refbench cube directories and `benchmark.yaml`.
//!
//! ```text
//! <out>/benchmark/benchmark.yaml
//! <out>/benchmark/prep/             preparation cube
//! <out>/benchmark/metrics/          metrics cube
//! <out>/benchmark/reference_model/  majority model
//! <out>/models/linear/              linear model
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use fedeval_core::cube::verify::{IMAGE_FILE, MANIFEST_FILE};

use crate::image::oci_archive;
use crate::model::LinearParams;
use crate::prep::PrepParams;

pub const BINARY: &str = "fedeval-refbench";
pub const PARAMETERS_FILE: &str = "parameters.yaml";

#[derive(Debug, Clone)]
pub struct CubeDef {
    pub name: &'static str,
    pub subcommand: &'static str,
    pub tasks: &'static str,
    pub parameters: Option<String>,
}

const PREP_TASKS: &str = "  prepare:
    inputs:
      raw_data:
        kind: DIR
    outputs:
      prepared_data:
        kind: DIR
    parameters_file: parameters.yaml
  sanity_check:
    inputs:
      prepared_data:
        kind: DIR
    parameters_file: parameters.yaml
  statistics:
    inputs:
      prepared_data:
        kind: DIR
    outputs:
      statistics:
        kind: FILE
    parameters_file: parameters.yaml
";

const MODEL_TASKS: &str = "  infer:
    inputs:
      data:
        kind: DIR
    outputs:
      predictions:
        kind: FILE
";

const METRICS_TASKS: &str = "  evaluate:
    inputs:
      predictions:
        kind: FILE
      labels:
        kind: DIR
    outputs:
      results:
        kind: FILE
";

pub fn prep_cube() -> CubeDef {
    CubeDef {
        name: "refbench-prep",
        subcommand: "cube-prep",
        tasks: PREP_TASKS,
        parameters: Some(PrepParams::default().to_yaml()),
    }
}

pub fn metrics_cube() -> CubeDef {
    CubeDef {
        name: "refbench-metrics",
        subcommand: "cube-metrics",
        tasks: METRICS_TASKS,
        parameters: None,
    }
}

pub fn majority_cube() -> CubeDef {
    CubeDef {
        name: "refbench-majority",
        subcommand: "cube-model-majority",
        tasks: MODEL_TASKS,
        parameters: None,
    }
}

pub fn linear_cube() -> CubeDef {
    CubeDef {
        name: "refbench-linear",
        subcommand: "cube-model-linear",
        tasks: "  infer:
    inputs:
      data:
        kind: DIR
    outputs:
      predictions:
        kind: FILE
    parameters_file: parameters.yaml
",
        parameters: Some(LinearParams::default().to_yaml()),
    }
}

impl CubeDef {
    pub fn image_ref(&self) -> String {
        format!("fedeval/{}:1", self.name)
    }

    pub fn manifest(&self) -> String {
        format!(
            "schema_version: 1\nname: {}\nimage_ref: {}\nentrypoint:\n  - {BINARY}\n  - {}\ntasks:\n{}",
            self.name,
            self.image_ref(),
            self.subcommand,
            self.tasks
        )
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest())?;
        let entrypoint = vec![BINARY.to_string(), self.subcommand.to_string()];
        let note = format!("{} ({})\n", self.name, self.subcommand);
        fs::write(
            dir.join(IMAGE_FILE),
            oci_archive(&self.image_ref(), &entrypoint, &note)?,
        )?;
        if let Some(p) = &self.parameters {
            fs::write(dir.join(PARAMETERS_FILE), p)?;
        }
        Ok(())
    }
}

pub const BENCHMARK_YAML: &str = "name: refbench
description: Synthetic four-feature binary classification with site-level covariate shift.
docs_url: https://example.org/fedeval/refbench
visibility: OPEN
allowlist: []
release_policy:
  mode: PUBLIC
  show_per_site: false
metric_specs:
  accuracy:
    min: 0
    max: 1
    higher_is_better: true
    decomposable: true
    aggregation: WEIGHTED_MEAN
  sensitivity:
    min: 0
    max: 1
    higher_is_better: true
    decomposable: false
    aggregation: UNWEIGHTED_MEAN
  specificity:
    min: 0
    max: 1
    higher_is_better: true
    decomposable: false
    aggregation: UNWEIGHTED_MEAN
";

#[derive(Debug, Clone)]
pub struct BundlePaths {
    pub benchmark: PathBuf,
    pub prep: PathBuf,
    pub metrics: PathBuf,
    pub reference_model: PathBuf,
    pub linear: PathBuf,
}

pub fn write_bundle(out: &Path) -> io::Result<BundlePaths> {
    let benchmark = out.join("benchmark");
    let paths = BundlePaths {
        prep: benchmark.join("prep"),
        metrics: benchmark.join("metrics"),
        reference_model: benchmark.join("reference_model"),
        linear: out.join("models").join("linear"),
        benchmark,
    };
    prep_cube().write(&paths.prep)?;
    metrics_cube().write(&paths.metrics)?;
    majority_cube().write(&paths.reference_model)?;
    linear_cube().write(&paths.linear)?;
    fs::write(paths.benchmark.join("benchmark.yaml"), BENCHMARK_YAML)?;
    Ok(paths)
}
