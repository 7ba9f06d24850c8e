//! Cube runtime: manifest parsing, hash verification and sandboxed task
//! execution.
//!
//! A task sees exactly its declared input bindings (read-only), one
//! writable outputs directory and the verified parameters file.

pub mod manifest;
pub mod sandbox;
pub mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{parse_manifest, BindingKind, CubeManifest, ManifestError, TaskSpec};
pub use sandbox::{
    backend_by_id, probe_backend, Backend, Capabilities, ContainerBackend, LaunchOutcome,
    LaunchRequest, Mount, NetworkMode, ProcessBackend, SandboxPolicy,
};
pub use verify::{
    parameters_path, pin_cube_dir, verify_cube, Asset, Mismatch, PinnedHashes, VerifiedCube,
    VerifyError,
};

use crate::uid::{dir_content_uid, file_uid_at, ContentUid};

pub const OUTPUTS_DIR: &str = "outputs";
pub const LOGS_DIR: &str = "logs";
pub const PARAMETERS_FILE: &str = "parameters.yaml";
const LOG_EXCERPT_BYTES: u64 = 4096;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("missing input binding {0:?}")]
    MissingInput(String),
    #[error("unexpected binding {0:?}")]
    UnexpectedBinding(String),
    #[error("input {binding:?} must be a {expected:?}")]
    InputKind {
        binding: String,
        expected: BindingKind,
    },
    #[error("backend {backend} cannot deny network access")]
    SandboxUnavailable { backend: String },
    #[error("backend {0:?} not found")]
    BackendNotFound(String),
    #[error("workspace {0} is not empty")]
    WorkspaceNotEmpty(PathBuf),
    #[error("path {0} escapes the workspace")]
    PathEscape(PathBuf),
    #[error("entrypoint {0:?} cannot be resolved")]
    EntrypointNotFound(String),
    #[error("{0:?} changed after verification")]
    IntegrityChanged(Asset),
    #[error("spawn failed: {0}")]
    Spawn(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RunError {
    pub fn code(&self) -> &'static str {
        match self {
            RunError::UnknownTask(_) => "UNKNOWN_TASK",
            RunError::MissingInput(_) => "MISSING_INPUT",
            RunError::UnexpectedBinding(_) => "UNEXPECTED_BINDING",
            RunError::InputKind { .. } => "INPUT_KIND",
            RunError::SandboxUnavailable { .. } => "SANDBOX_UNAVAILABLE",
            RunError::BackendNotFound(_) => "BACKEND_NOT_FOUND",
            RunError::WorkspaceNotEmpty(_) => "WORKSPACE_NOT_EMPTY",
            RunError::PathEscape(_) => "PATH_ESCAPE",
            RunError::EntrypointNotFound(_) => "ENTRYPOINT_NOT_FOUND",
            RunError::IntegrityChanged(_) => "HASH_MISMATCH",
            RunError::Spawn(_) => "SPAWN_FAILED",
            RunError::Io(_) => "IO_ERROR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Ok,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub status: TaskStatus,
    pub exit_code: i32,
    pub output_digests: BTreeMap<String, ContentUid>,
    /// Tail of the task log.
    pub log_excerpt: String,
    /// Manifest digest of the cube that ran.
    pub manifest_uid: ContentUid,
    pub outputs_dir: PathBuf,
}

impl TaskOutcome {
    pub fn output(&self, binding: &str) -> PathBuf {
        self.outputs_dir.join(binding)
    }
}

fn inside(root: &Path, path: &Path) -> Result<PathBuf, RunError> {
    let canon = path.canonicalize()?;
    if canon.starts_with(root) {
        Ok(canon)
    } else {
        Err(RunError::PathEscape(path.to_owned()))
    }
}

fn tail(path: &Path) -> io::Result<String> {
    let mut f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(String::new()),
        Err(e) => return Err(e),
    };
    let len = f.metadata()?.len();
    f.seek(SeekFrom::Start(len.saturating_sub(LOG_EXCERPT_BYTES)))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Digest of a produced output, or why it does not count.
fn output_digest(path: &Path, kind: BindingKind) -> Result<ContentUid, String> {
    let meta = fs::symlink_metadata(path).map_err(|_| "missing".to_string())?;
    match kind {
        BindingKind::File if meta.is_file() => file_uid_at(path).map_err(|e| e.to_string()),
        BindingKind::Dir if meta.is_dir() => dir_content_uid(path).map_err(|e| e.to_string()),
        _ => Err(format!("not a {kind:?}")),
    }
}

/// Runs `task` of a verified cube. `workspace` must be empty (it is created
/// if absent); outputs land in `workspace/outputs/<binding>` and the task log
/// in `workspace/logs/<task>.log`.
///
/// A task that exits non-zero, runs out of time or leaves a declared output
/// missing is reported through [`TaskOutcome::status`]; `Err` means the task
/// was never started.
pub fn run_task(
    cube: &VerifiedCube,
    task: &str,
    inputs: &BTreeMap<String, PathBuf>,
    workspace: &Path,
    policy: &SandboxPolicy,
    backend: &dyn Backend,
) -> Result<TaskOutcome, RunError> {
    let spec = cube
        .manifest()
        .task(task)
        .ok_or_else(|| RunError::UnknownTask(task.to_owned()))?;

    if policy.network == NetworkMode::Denied && !backend.capabilities().can_deny_network {
        return Err(RunError::SandboxUnavailable {
            backend: backend.id().to_owned(),
        });
    }

    for binding in inputs.keys() {
        if !spec.inputs.contains_key(binding) {
            return Err(RunError::UnexpectedBinding(binding.clone()));
        }
    }
    let mut readonly_mounts = Vec::new();
    for (binding, &kind) in &spec.inputs {
        let host = inputs
            .get(binding)
            .ok_or_else(|| RunError::MissingInput(binding.clone()))?;
        let meta = fs::metadata(host).map_err(|_| RunError::MissingInput(binding.clone()))?;
        let matches = match kind {
            BindingKind::File => meta.is_file(),
            BindingKind::Dir => meta.is_dir(),
        };
        if !matches {
            return Err(RunError::InputKind {
                binding: binding.clone(),
                expected: kind,
            });
        }
        readonly_mounts.push(Mount {
            binding: binding.clone(),
            host_path: host.canonicalize()?,
            kind,
        });
    }

    fs::create_dir_all(workspace)?;
    if fs::read_dir(workspace)?.next().is_some() {
        return Err(RunError::WorkspaceNotEmpty(workspace.to_owned()));
    }
    let root = workspace.canonicalize()?;
    fs::create_dir(root.join(OUTPUTS_DIR))?;
    fs::create_dir(root.join(LOGS_DIR))?;
    let outputs_dir = inside(&root, &root.join(OUTPUTS_DIR))?;

    let mut writable_mounts = Vec::new();
    for (binding, &kind) in &spec.outputs {
        manifest::check_binding_name(binding)
            .map_err(|_| RunError::PathEscape(PathBuf::from(binding)))?;
        let host_path = outputs_dir.join(binding);
        if kind == BindingKind::Dir {
            fs::create_dir(&host_path)?;
            inside(&outputs_dir, &host_path)?;
        }
        writable_mounts.push(Mount {
            binding: binding.clone(),
            host_path,
            kind,
        });
    }

    let parameters = match cube.parameters().filter(|_| spec.parameters_file.is_some()) {
        Some(bytes) => {
            let p = root.join(PARAMETERS_FILE);
            fs::write(&p, bytes)?;
            Some(p)
        }
        None => None,
    };

    let log_path = root.join(LOGS_DIR).join(format!("{task}.log"));
    let launched = backend.launch(&LaunchRequest {
        cube,
        task,
        readonly_mounts,
        writable_mounts,
        outputs_dir: outputs_dir.clone(),
        parameters,
        workspace: root.clone(),
        log_path: log_path.clone(),
        policy,
    })?;

    let mut status = if launched.timed_out {
        TaskStatus::Timeout
    } else if launched.exit_code == 0 {
        TaskStatus::Ok
    } else {
        TaskStatus::Failed
    };
    let mut notes = String::new();
    let mut output_digests = BTreeMap::new();
    for (binding, &kind) in &spec.outputs {
        match output_digest(&outputs_dir.join(binding), kind) {
            Ok(uid) => {
                output_digests.insert(binding.clone(), uid);
            }
            Err(why) => {
                if status == TaskStatus::Ok {
                    status = TaskStatus::Failed;
                }
                notes.push_str(&format!("output {binding}: {why}\n"));
            }
        }
    }
    for entry in fs::read_dir(&outputs_dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if !spec.outputs.contains_key(&name) {
            if status == TaskStatus::Ok {
                status = TaskStatus::Failed;
            }
            notes.push_str(&format!("undeclared output {name:?}\n"));
        }
    }

    if status != TaskStatus::Ok {
        output_digests.clear();
    }
    let mut log_excerpt = tail(&log_path)?;
    log_excerpt.push_str(&notes);
    Ok(TaskOutcome {
        status,
        exit_code: launched.exit_code,
        output_digests,
        log_excerpt,
        manifest_uid: cube.manifest_uid().clone(),
        outputs_dir,
    })
}
