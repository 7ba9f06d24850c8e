//! `cube.yaml`: the cube's metadata and file-system task interface.
//!
//! ```yaml
//! schema_version: 1
//! name: refbench-linear
//! image_ref: fedeval/refbench:1
//! entrypoint:          # process backend only
//!   - fedeval-refbench
//!   - model-linear
//! tasks:
//!   infer:
//!     inputs:
//!       data:
//!         kind: DIR
//!     outputs:
//!       predictions:
//!         kind: FILE
//!     parameters_file: parameters.yaml
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uid::check_relative_path;
use crate::yaml::{self, Document, Yaml};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BindingKind {
    File,
    Dir,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskSpec {
    pub inputs: BTreeMap<String, BindingKind>,
    pub outputs: BTreeMap<String, BindingKind>,
    pub parameters_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeManifest {
    pub schema_version: u32,
    pub name: String,
    pub image_ref: String,
    /// Command line used by the process backend; cube-relative elements
    /// start with `./`.
    pub entrypoint: Vec<String>,
    pub tasks: BTreeMap<String, TaskSpec>,
}

impl CubeManifest {
    pub fn task(&self, name: &str) -> Option<&TaskSpec> {
        self.tasks.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("line {line}: {field}: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("unsupported schema_version {0}")]
    UnsupportedSchemaVersion(u32),
    #[error("duplicate task {0:?}")]
    DuplicateTask(String),
}

impl ManifestError {
    pub fn code(&self) -> &'static str {
        match self {
            ManifestError::Parse { .. } => "PARSE_ERROR",
            ManifestError::UnsupportedSchemaVersion(_) => "UNSUPPORTED_SCHEMA_VERSION",
            ManifestError::DuplicateTask(_) => "DUPLICATE_TASK",
        }
    }
}

struct Ctx<'a> {
    doc: &'a Document,
}

impl Ctx<'_> {
    fn fail<T>(&self, path: &[&str], message: impl Into<String>) -> Result<T, ManifestError> {
        // Fall back to the nearest ancestor whose line is known.
        let line = (0..=path.len())
            .rev()
            .find_map(|n| self.doc.line_of(&path[..n]))
            .unwrap_or(1);
        Err(ManifestError::Parse {
            line,
            field: path.join("."),
            message: message.into(),
        })
    }

    fn scalar<'y>(&self, node: Option<&'y Yaml>, path: &[&str]) -> Result<&'y str, ManifestError> {
        match node {
            Some(Yaml::Scalar(s)) => Ok(s),
            Some(_) => self.fail(path, "expected a scalar"),
            None => self.fail(path, "missing required field"),
        }
    }
}

/// A binding name doubles as the final path segment under
/// `/fedeval/{inputs,outputs}/`.
pub fn check_binding_name(name: &str) -> Result<(), String> {
    check_relative_path(name).map_err(|_| format!("ILLEGAL_PATH: {name:?}"))?;
    let ok = name
        .bytes()
        .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
        && name != "parameters";
    if ok {
        Ok(())
    } else {
        Err(format!(
            "ILLEGAL_PATH: binding {name:?} must match [A-Za-z0-9_.-]+"
        ))
    }
}

pub fn parse_manifest(text: &str) -> Result<CubeManifest, ManifestError> {
    let doc = match yaml::parse_document(text) {
        Ok(doc) => doc,
        Err(e) => {
            if let Some((parent, key)) = &e.duplicate {
                if parent.len() == 1 && parent[0] == "tasks" {
                    return Err(ManifestError::DuplicateTask(key.clone()));
                }
            }
            return Err(ManifestError::Parse {
                line: e.line,
                field: String::new(),
                message: e.message,
            });
        }
    };
    let ctx = Ctx { doc: &doc };
    let root = &doc.root;

    for key in root.as_map().into_iter().flat_map(|m| m.keys()) {
        if !matches!(
            key.as_str(),
            "schema_version" | "name" | "image_ref" | "entrypoint" | "tasks"
        ) {
            return ctx.fail(&[key], "unknown field");
        }
    }

    let version_text = ctx.scalar(root.get("schema_version"), &["schema_version"])?;
    let schema_version: u32 = match version_text.parse() {
        Ok(v) => v,
        Err(_) => return ctx.fail(&["schema_version"], "expected an integer"),
    };
    if schema_version != SCHEMA_VERSION {
        return Err(ManifestError::UnsupportedSchemaVersion(schema_version));
    }

    let name = ctx.scalar(root.get("name"), &["name"])?.to_owned();
    if name.is_empty() {
        return ctx.fail(&["name"], "must not be empty");
    }
    let image_ref = ctx
        .scalar(root.get("image_ref"), &["image_ref"])?
        .to_owned();

    let entrypoint = match root.get("entrypoint") {
        None => Vec::new(),
        Some(Yaml::List(items)) => items.clone(),
        Some(Yaml::Scalar(s)) => vec![s.clone()],
        Some(Yaml::Map(_)) => return ctx.fail(&["entrypoint"], "expected a list of strings"),
    };
    for item in &entrypoint {
        if let Some(rel) = item.strip_prefix("./") {
            if check_relative_path(rel).is_err() {
                return ctx.fail(&["entrypoint"], format!("ILLEGAL_PATH: {item:?}"));
            }
        }
    }

    let tasks_node = match root.get("tasks") {
        Some(Yaml::Map(m)) => m,
        Some(_) => return ctx.fail(&["tasks"], "expected a mapping"),
        None => return ctx.fail(&["tasks"], "missing required field"),
    };
    if tasks_node.is_empty() {
        return ctx.fail(&["tasks"], "at least one task is required");
    }

    let mut tasks = BTreeMap::new();
    for (task_name, node) in tasks_node {
        let base = ["tasks", task_name.as_str()];
        if task_name.is_empty()
            || !task_name
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
        {
            return ctx.fail(&base, "task names must match [A-Za-z0-9_-]+");
        }
        let map = match node {
            Yaml::Map(m) => m,
            _ => return ctx.fail(&base, "expected a mapping"),
        };
        for key in map.keys() {
            if !matches!(key.as_str(), "inputs" | "outputs" | "parameters_file") {
                return ctx.fail(&[base[0], base[1], key], "unknown field");
            }
        }
        let mut seen = BTreeSet::new();
        let mut spec = TaskSpec::default();
        for (section, target) in [("inputs", &mut spec.inputs), ("outputs", &mut spec.outputs)] {
            let bindings = match map.get(section) {
                None => continue,
                Some(Yaml::Map(m)) => m,
                Some(_) => return ctx.fail(&[base[0], base[1], section], "expected a mapping"),
            };
            for (binding, decl) in bindings {
                let path = [base[0], base[1], section, binding.as_str()];
                if let Err(msg) = check_binding_name(binding) {
                    return ctx.fail(&path, msg);
                }
                if !seen.insert(binding.clone()) {
                    return ctx.fail(
                        &path,
                        "binding names must be unique across inputs and outputs",
                    );
                }
                let kind_path = [base[0], base[1], section, binding.as_str(), "kind"];
                let kind = match ctx.scalar(decl.get("kind"), &kind_path)? {
                    "FILE" => BindingKind::File,
                    "DIR" => BindingKind::Dir,
                    other => {
                        return ctx.fail(&kind_path, format!("expected FILE or DIR, got {other:?}"))
                    }
                };
                if decl.as_map().is_some_and(|m| m.len() != 1) {
                    return ctx.fail(&path, "only 'kind' is allowed in a binding");
                }
                target.insert(binding.clone(), kind);
            }
        }
        if let Some(p) = map.get("parameters_file") {
            let p_path = [base[0], base[1], "parameters_file"];
            let value = ctx.scalar(Some(p), &p_path)?;
            if check_relative_path(value).is_err() {
                return ctx.fail(&p_path, format!("ILLEGAL_PATH: {value:?}"));
            }
            spec.parameters_file = Some(value.to_owned());
        }
        tasks.insert(task_name.clone(), spec);
    }

    Ok(CubeManifest {
        schema_version,
        name,
        image_ref,
        entrypoint,
        tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version: 1
name: echo
image_ref: example/echo:1
tasks:
  run:
    inputs:
      data:
        kind: DIR
    outputs:
      out:
        kind: FILE
";

    #[test]
    fn minimal_manifest() {
        let m = parse_manifest(MINIMAL).unwrap();
        assert_eq!(m.name, "echo");
        let run = m.task("run").unwrap();
        assert_eq!(run.inputs["data"], BindingKind::Dir);
        assert_eq!(run.outputs["out"], BindingKind::File);
        assert_eq!(run.parameters_file, None);
        assert!(m.entrypoint.is_empty());
    }

    #[test]
    fn schema_version_two() {
        let text = MINIMAL.replace("schema_version: 1", "schema_version: 2");
        assert_eq!(
            parse_manifest(&text).unwrap_err(),
            ManifestError::UnsupportedSchemaVersion(2)
        );
    }

    #[test]
    fn traversal_in_output_path() {
        let text = MINIMAL.replace("      out:", "      ../x:");
        match parse_manifest(&text).unwrap_err() {
            ManifestError::Parse {
                line,
                field,
                message,
            } => {
                assert_eq!(line, 10);
                assert_eq!(field, "tasks.run.outputs.../x");
                assert!(message.starts_with("ILLEGAL_PATH"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_task() {
        let text = format!("{MINIMAL}  run:\n    inputs: {{}}\n");
        assert_eq!(
            parse_manifest(&text).unwrap_err(),
            ManifestError::DuplicateTask("run".into())
        );
    }

    #[test]
    fn binding_shared_between_inputs_and_outputs() {
        let text = MINIMAL.replace("      out:", "      data:");
        let err = parse_manifest(&text).unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        assert!(err.to_string().contains("unique"), "{err}");
    }

    #[test]
    fn field_errors_point_at_lines() {
        let text = MINIMAL.replace("kind: FILE", "kind: SOCKET");
        match parse_manifest(&text).unwrap_err() {
            ManifestError::Parse { line, field, .. } => {
                assert_eq!(line, 11);
                assert_eq!(field, "tasks.run.outputs.out.kind");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_manifest("schema_version: 1\nname: x\ntasks:\n  t: {}\n").unwrap_err();
        assert!(err.to_string().contains("image_ref"), "{err}");
    }

    #[test]
    fn rejects_bad_parameters_path_and_empty_tasks() {
        let text = MINIMAL.replace(
            "        kind: FILE\n",
            "        kind: FILE\n    parameters_file: /etc/passwd\n",
        );
        assert_eq!(parse_manifest(&text).unwrap_err().code(), "PARSE_ERROR");
        let text = "schema_version: 1\nname: x\nimage_ref: y\ntasks: {}\n";
        assert_eq!(parse_manifest(text).unwrap_err().code(), "PARSE_ERROR");
    }
}
