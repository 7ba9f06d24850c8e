//! Sandbox policy and execution backends.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::manifest::BindingKind;
use super::verify::{Asset, VerifiedCube};
use super::RunError;
use crate::uid::file_uid_at;

pub const CONTAINER_INPUTS: &str = "/fedeval/inputs";
pub const CONTAINER_OUTPUTS: &str = "/fedeval/outputs";
pub const CONTAINER_PARAMETERS: &str = "/fedeval/parameters.yaml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NetworkMode {
    Denied,
    /// Only reachable through the agent's `--insecure-allow-network` flag.
    InsecureAllowed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxPolicy {
    pub network: NetworkMode,
    /// CPU cores.
    pub cpu_limit: f64,
    pub memory_limit_bytes: u64,
    pub wall_clock_limit: Duration,
}

impl Default for SandboxPolicy {
    fn default() -> Self {
        SandboxPolicy {
            network: NetworkMode::Denied,
            cpu_limit: 1.0,
            memory_limit_bytes: 2 << 30,
            wall_clock_limit: Duration::from_secs(15 * 60),
        }
    }
}

impl SandboxPolicy {
    pub fn insecure_allow_network(mut self) -> Self {
        self.network = NetworkMode::InsecureAllowed;
        self
    }

    pub fn with_wall_clock(mut self, limit: Duration) -> Self {
        self.wall_clock_limit = limit;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub can_deny_network: bool,
    pub can_limit_resources: bool,
}

/// A host path bound to a task binding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mount {
    pub binding: String,
    pub host_path: PathBuf,
    pub kind: BindingKind,
}

/// Everything a backend needs to start one task. Input mounts are read-only;
/// `outputs_dir` (and the output mounts inside it) are the only writable
/// locations.
#[derive(Debug)]
pub struct LaunchRequest<'a> {
    pub cube: &'a VerifiedCube,
    pub task: &'a str,
    pub readonly_mounts: Vec<Mount>,
    pub writable_mounts: Vec<Mount>,
    pub outputs_dir: PathBuf,
    pub parameters: Option<PathBuf>,
    pub workspace: PathBuf,
    pub log_path: PathBuf,
    pub policy: &'a SandboxPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaunchOutcome {
    pub exit_code: i32,
    pub timed_out: bool,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn launch(&self, request: &LaunchRequest<'_>) -> Result<LaunchOutcome, RunError>;
}

/// Capability report for a backend id: `process`, `docker`, `podman`, or
/// `container` (whichever OCI runtime is installed).
pub fn probe_backend(id: &str) -> Result<Capabilities, RunError> {
    Ok(backend_by_id(id)?.capabilities())
}

pub fn backend_by_id(id: &str) -> Result<Box<dyn Backend>, RunError> {
    match id {
        "process" => Ok(Box::new(ProcessBackend::default())),
        "docker" | "podman" => find_program(id, &[])
            .map(|rt| Box::new(ContainerBackend::new(rt)) as Box<dyn Backend>)
            .ok_or_else(|| RunError::BackendNotFound(id.to_owned())),
        "container" => ["podman", "docker"]
            .iter()
            .find_map(|rt| find_program(rt, &[]))
            .map(|rt| Box::new(ContainerBackend::new(rt)) as Box<dyn Backend>)
            .ok_or_else(|| RunError::BackendNotFound(id.to_owned())),
        other => Err(RunError::BackendNotFound(other.to_owned())),
    }
}

fn find_program(name: &str, extra_dirs: &[PathBuf]) -> Option<PathBuf> {
    let path_var = std::env::var_os("PATH").unwrap_or_default();
    extra_dirs
        .iter()
        .cloned()
        .chain(std::env::split_paths(&path_var))
        .map(|d| d.join(name))
        .find(|p| is_executable(p))
}

#[cfg(unix)]
fn is_executable(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    fs::metadata(p).is_ok_and(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
}

#[cfg(not(unix))]
fn is_executable(p: &Path) -> bool {
    p.is_file()
}

fn binding_args(mounts: &[Mount], root: Option<&str>) -> Vec<String> {
    mounts
        .iter()
        .map(|m| match root {
            Some(root) => format!("--{}={}/{}", m.binding, root, m.binding),
            None => format!("--{}={}", m.binding, m.host_path.display()),
        })
        .collect()
}

fn open_log(path: &Path) -> io::Result<(Stdio, Stdio)> {
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let err = file.try_clone()?;
    Ok((Stdio::from(file), Stdio::from(err)))
}

/// Polls `child` until it exits or `limit` passes; on timeout the whole
/// process group is killed.
fn wait_with_deadline(child: &mut Child, limit: Duration) -> io::Result<LaunchOutcome> {
    let deadline = Instant::now() + limit;
    let mut sleep = Duration::from_millis(1);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(LaunchOutcome {
                exit_code: exit_code_of(status),
                timed_out: false,
            });
        }
        if Instant::now() >= deadline {
            kill_group(child);
            let _ = child.wait();
            return Ok(LaunchOutcome {
                exit_code: -1,
                timed_out: true,
            });
        }
        std::thread::sleep(sleep);
        sleep = (sleep * 2).min(Duration::from_millis(50));
    }
}

#[cfg(unix)]
fn exit_code_of(status: std::process::ExitStatus) -> i32 {
    use std::os::unix::process::ExitStatusExt;
    status
        .code()
        .unwrap_or_else(|| 128 + status.signal().unwrap_or(0))
}

#[cfg(not(unix))]
fn exit_code_of(status: std::process::ExitStatus) -> i32 {
    status.code().unwrap_or(-1)
}

#[cfg(unix)]
fn kill_group(child: &mut Child) {
    // The child leads its own process group (see `process_group(0)`).
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_group(child: &mut Child) {
    let _ = child.kill();
}

/// Runs the manifest's `entrypoint` directly on the host.
///
/// It cannot deny network access, so `run_task` only uses it when the
/// policy is [`NetworkMode::InsecureAllowed`]. Memory and CPU time are
/// bounded with rlimits; the wall clock by killing the process group.
#[derive(Debug, Clone, Default)]
pub struct ProcessBackend {
    /// Searched before `PATH` when resolving a bare program name.
    pub search_dirs: Vec<PathBuf>,
}

impl ProcessBackend {
    pub fn with_search_dirs(dirs: Vec<PathBuf>) -> Self {
        ProcessBackend { search_dirs: dirs }
    }

    /// Resolves the entrypoint into a program and its leading arguments.
    pub fn resolve(&self, cube: &VerifiedCube) -> Result<(PathBuf, Vec<String>), RunError> {
        let entry = &cube.manifest().entrypoint;
        let Some(first) = entry.first() else {
            return Err(RunError::EntrypointNotFound("<empty entrypoint>".into()));
        };
        let resolve_arg = |item: &String| -> Result<String, RunError> {
            match item.strip_prefix("./") {
                Some(rel) => cube
                    .extra_file(rel)
                    .map(|p| p.display().to_string())
                    .ok_or_else(|| RunError::EntrypointNotFound(item.clone())),
                None => Ok(item.clone()),
            }
        };
        let program = if first.starts_with("./") {
            PathBuf::from(resolve_arg(first)?)
        } else if first.contains('/') {
            return Err(RunError::EntrypointNotFound(first.clone()));
        } else {
            find_program(first, &self.search_dirs)
                .ok_or_else(|| RunError::EntrypointNotFound(first.clone()))?
        };
        let args = entry[1..]
            .iter()
            .map(resolve_arg)
            .collect::<Result<_, _>>()?;
        Ok((program, args))
    }
}

impl Backend for ProcessBackend {
    fn id(&self) -> &str {
        "process"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            can_deny_network: false,
            can_limit_resources: cfg!(unix),
        }
    }

    fn launch(&self, req: &LaunchRequest<'_>) -> Result<LaunchOutcome, RunError> {
        let (program, lead) = self.resolve(req.cube)?;
        let mut cmd = Command::new(&program);
        cmd.args(&lead).arg(req.task);
        cmd.args(binding_args(&req.readonly_mounts, None));
        cmd.args(binding_args(&req.writable_mounts, None));
        if let Some(p) = &req.parameters {
            cmd.arg(format!("--parameters={}", p.display()));
        }
        let (out, err) = open_log(&req.log_path)?;
        cmd.current_dir(&req.workspace)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("HOME", &req.workspace)
            .env("LC_ALL", "C")
            .stdin(Stdio::null())
            .stdout(out)
            .stderr(err);
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            let memory = req.policy.memory_limit_bytes;
            let cpu_secs = (req.policy.wall_clock_limit.as_secs_f64()
                * req.policy.cpu_limit.max(0.01))
            .ceil() as u64
                + 1;
            cmd.process_group(0);
            unsafe {
                cmd.pre_exec(move || {
                    let set = |res, value: u64| {
                        let lim = libc::rlimit {
                            rlim_cur: value as libc::rlim_t,
                            rlim_max: value as libc::rlim_t,
                        };
                        libc::setrlimit(res, &lim)
                    };
                    set(libc::RLIMIT_AS, memory);
                    set(libc::RLIMIT_CPU, cpu_secs);
                    set(libc::RLIMIT_CORE, 0);
                    Ok(())
                });
            }
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| RunError::Spawn(format!("{}: {e}", program.display())))?;
        Ok(wait_with_deadline(&mut child, req.policy.wall_clock_limit)?)
    }
}

/// Shells out to an OCI runtime (`podman` or `docker`) with networking
/// disabled, a read-only root and explicit bind mounts.
#[derive(Debug, Clone)]
pub struct ContainerBackend {
    pub runtime: PathBuf,
}

impl ContainerBackend {
    pub fn new(runtime: PathBuf) -> Self {
        ContainerBackend { runtime }
    }

    /// Arguments of the `run` invocation for `req`.
    pub fn run_args(&self, req: &LaunchRequest<'_>, container_name: &str) -> Vec<String> {
        let p = req.policy;
        let mut args = vec![
            "run".to_string(),
            "--rm".into(),
            format!("--name={container_name}"),
            "--network=none".into(),
            "--read-only".into(),
            "--cap-drop=ALL".into(),
            "--security-opt=no-new-privileges".into(),
            "--pids-limit=256".into(),
            format!("--cpus={}", p.cpu_limit),
            format!("--memory={}", p.memory_limit_bytes),
            "--tmpfs=/tmp".into(),
        ];
        for m in &req.readonly_mounts {
            args.push(format!(
                "--volume={}:{}/{}:ro",
                m.host_path.display(),
                CONTAINER_INPUTS,
                m.binding
            ));
        }
        args.push(format!(
            "--volume={}:{}:rw",
            req.outputs_dir.display(),
            CONTAINER_OUTPUTS
        ));
        if let Some(params) = &req.parameters {
            args.push(format!(
                "--volume={}:{}:ro",
                params.display(),
                CONTAINER_PARAMETERS
            ));
        }
        args.push(req.cube.manifest().image_ref.clone());
        args.push(req.task.to_owned());
        args.extend(binding_args(&req.readonly_mounts, Some(CONTAINER_INPUTS)));
        args.extend(binding_args(&req.writable_mounts, Some(CONTAINER_OUTPUTS)));
        if req.parameters.is_some() {
            args.push(format!("--parameters={CONTAINER_PARAMETERS}"));
        }
        args
    }
}

impl Backend for ContainerBackend {
    fn id(&self) -> &str {
        "container"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            can_deny_network: true,
            can_limit_resources: true,
        }
    }

    fn launch(&self, req: &LaunchRequest<'_>) -> Result<LaunchOutcome, RunError> {
        // The archive could have been swapped since verification.
        let image = req.cube.image_path();
        if file_uid_at(&image)? != req.cube.pinned().image_uid {
            return Err(RunError::IntegrityChanged(Asset::Image));
        }
        let (out, err) = open_log(&req.log_path)?;
        let load = Command::new(&self.runtime)
            .arg("load")
            .arg("--input")
            .arg(&image)
            .stdin(Stdio::null())
            .stdout(out)
            .stderr(err)
            .status()
            .map_err(|e| RunError::Spawn(format!("{}: {e}", self.runtime.display())))?;
        if !load.success() {
            return Ok(LaunchOutcome {
                exit_code: exit_code_of(load),
                timed_out: false,
            });
        }
        let name = format!(
            "fedeval-{}-{}",
            std::process::id(),
            req.cube.verification_id()
        );
        let (out, err) = open_log(&req.log_path)?;
        let mut cmd = Command::new(&self.runtime);
        cmd.args(self.run_args(req, &name))
            .stdin(Stdio::null())
            .stdout(out)
            .stderr(err);
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| RunError::Spawn(format!("{}: {e}", self.runtime.display())))?;
        let outcome = wait_with_deadline(&mut child, req.policy.wall_clock_limit)?;
        if outcome.timed_out {
            let _ = Command::new(&self.runtime)
                .args(["kill", &name])
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status();
        }
        Ok(outcome)
    }
}
