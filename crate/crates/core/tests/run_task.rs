use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fedeval_core::cube::*;
use fedeval_core::uid::file_uid;
use rand::{Rng, SeedableRng};

// Scripts see: $1 = task, then --<binding>=<path> ... [--parameters=<path>].
const ARG_PARSER: &str = r#"task=$1; shift
for a in "$@"; do
  k=${a%%=*}; k=${k#--}; v=${a#*=}
  eval "arg_$k=\$v"
done
"#;

fn make_cube(dir: &Path, tasks_yaml: &str, body: &str, params: Option<&str>) -> VerifiedCube {
    fs::write(
        dir.join("cube.yaml"),
        format!("schema_version: 1\nname: t\nimage_ref: t:1\nentrypoint:\n  - sh\n  - ./run.sh\ntasks:\n{tasks_yaml}"),
    )
    .unwrap();
    fs::write(dir.join("image.tar.gz"), b"not-a-real-image").unwrap();
    fs::write(dir.join("run.sh"), format!("{ARG_PARSER}{body}")).unwrap();
    if let Some(p) = params {
        fs::write(dir.join("parameters.yaml"), p).unwrap();
    }
    let pins = pin_cube_dir(dir, &["run.sh"]).unwrap();
    verify_cube(dir, &pins).unwrap()
}

const COPY_TASK: &str = "  copy:
    inputs:
      data:
        kind: DIR
    outputs:
      out:
        kind: FILE
";

fn insecure() -> SandboxPolicy {
    SandboxPolicy::default().insecure_allow_network()
}

fn data_dir(root: &Path) -> PathBuf {
    let d = root.join("data");
    fs::create_dir_all(&d).unwrap();
    fs::write(d.join("a.txt"), "hello\n").unwrap();
    d
}

fn inputs(data: PathBuf) -> BTreeMap<String, PathBuf> {
    [("data".to_string(), data)].into_iter().collect()
}

#[test]
fn copies_input_to_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cube_dir = tmp.path().join("cube");
    fs::create_dir(&cube_dir).unwrap();
    let cube = make_cube(
        &cube_dir,
        COPY_TASK,
        "cat \"$arg_data/a.txt\" > \"$arg_out\"\n",
        None,
    );
    let ws = tmp.path().join("ws");
    let outcome = run_task(
        &cube,
        "copy",
        &inputs(data_dir(tmp.path())),
        &ws,
        &insecure(),
        &ProcessBackend::default(),
    )
    .unwrap();
    assert_eq!(outcome.status, TaskStatus::Ok, "{}", outcome.log_excerpt);
    assert_eq!(outcome.output_digests["out"], file_uid(b"hello\n"));
    assert_eq!(fs::read(outcome.output("out")).unwrap(), b"hello\n");
    assert_eq!(&outcome.manifest_uid, cube.manifest_uid());
}

#[test]
fn network_denied_needs_capable_backend() {
    let tmp = tempfile::tempdir().unwrap();
    let cube = make_cube(tmp.path(), COPY_TASK, "true\n", None);
    let err = run_task(
        &cube,
        "copy",
        &inputs(data_dir(tmp.path())),
        &tmp.path().join("ws"),
        &SandboxPolicy::default(),
        &ProcessBackend::default(),
    )
    .unwrap_err();
    assert_eq!(err.code(), "SANDBOX_UNAVAILABLE");
}

#[test]
fn binding_and_workspace_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cube_dir = tmp.path().join("cube");
    fs::create_dir(&cube_dir).unwrap();
    let cube = make_cube(&cube_dir, COPY_TASK, "true\n", None);
    let backend = ProcessBackend::default();
    let data = data_dir(tmp.path());

    let err = run_task(
        &cube,
        "nope",
        &inputs(data.clone()),
        &tmp.path().join("w1"),
        &insecure(),
        &backend,
    )
    .unwrap_err();
    assert_eq!(err.code(), "UNKNOWN_TASK");

    let err = run_task(
        &cube,
        "copy",
        &BTreeMap::new(),
        &tmp.path().join("w2"),
        &insecure(),
        &backend,
    )
    .unwrap_err();
    assert_eq!(err.code(), "MISSING_INPUT");

    let mut extra = inputs(data.clone());
    extra.insert("other".into(), data.clone());
    let err = run_task(
        &cube,
        "copy",
        &extra,
        &tmp.path().join("w3"),
        &insecure(),
        &backend,
    )
    .unwrap_err();
    assert_eq!(err.code(), "UNEXPECTED_BINDING");

    let err = run_task(
        &cube,
        "copy",
        &inputs(data.join("a.txt")),
        &tmp.path().join("w4"),
        &insecure(),
        &backend,
    )
    .unwrap_err();
    assert_eq!(err.code(), "INPUT_KIND");

    let busy = tmp.path().join("w5");
    fs::create_dir(&busy).unwrap();
    fs::write(busy.join("stale"), "x").unwrap();
    let err = run_task(&cube, "copy", &inputs(data), &busy, &insecure(), &backend).unwrap_err();
    assert_eq!(err.code(), "WORKSPACE_NOT_EMPTY");
}

#[test]
fn missing_or_undeclared_output_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cube_dir = tmp.path().join("cube");
    fs::create_dir(&cube_dir).unwrap();
    let cube = make_cube(&cube_dir, COPY_TASK, "echo nothing written\n", None);
    let data = data_dir(tmp.path());
    let outcome = run_task(
        &cube,
        "copy",
        &inputs(data.clone()),
        &tmp.path().join("w1"),
        &insecure(),
        &ProcessBackend::default(),
    )
    .unwrap();
    assert_eq!(outcome.status, TaskStatus::Failed);
    assert_eq!(outcome.exit_code, 0);
    assert!(outcome.log_excerpt.contains("nothing written"));
    assert!(outcome.log_excerpt.contains("output out: missing"));

    let cube_dir = tmp.path().join("cube2");
    fs::create_dir(&cube_dir).unwrap();
    let cube = make_cube(
        &cube_dir,
        COPY_TASK,
        "echo x > \"$arg_out\"; echo y > \"$(dirname \"$arg_out\")/stray\"\n",
        None,
    );
    let outcome = run_task(
        &cube,
        "copy",
        &inputs(data),
        &tmp.path().join("w2"),
        &insecure(),
        &ProcessBackend::default(),
    )
    .unwrap();
    assert_eq!(outcome.status, TaskStatus::Failed);
    assert!(outcome.log_excerpt.contains("undeclared output \"stray\""));
}

#[test]
fn nonzero_exit_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cube_dir = tmp.path().join("cube");
    fs::create_dir(&cube_dir).unwrap();
    let cube = make_cube(
        &cube_dir,
        COPY_TASK,
        "echo x > \"$arg_out\"; exit 7\n",
        None,
    );
    let outcome = run_task(
        &cube,
        "copy",
        &inputs(data_dir(tmp.path())),
        &tmp.path().join("ws"),
        &insecure(),
        &ProcessBackend::default(),
    )
    .unwrap();
    assert_eq!(outcome.status, TaskStatus::Failed);
    assert_eq!(outcome.exit_code, 7);
}

#[test]
fn busy_loop_is_killed_at_the_wall_clock_limit() {
    let tmp = tempfile::tempdir().unwrap();
    let cube_dir = tmp.path().join("cube");
    fs::create_dir(&cube_dir).unwrap();
    let cube = make_cube(
        &cube_dir,
        COPY_TASK,
        "sleep 60 &\nwhile :; do :; done\n",
        None,
    );
    let limit = Duration::from_secs(1);
    let policy = insecure().with_wall_clock(limit);
    let start = Instant::now();
    let outcome = run_task(
        &cube,
        "copy",
        &inputs(data_dir(tmp.path())),
        &tmp.path().join("ws"),
        &policy,
        &ProcessBackend::default(),
    )
    .unwrap();
    let elapsed = start.elapsed();
    assert_eq!(outcome.status, TaskStatus::Timeout);
    assert!(elapsed < limit + Duration::from_secs(2), "{elapsed:?}");
}

#[test]
fn parameters_are_the_verified_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cube_dir = tmp.path().join("cube");
    fs::create_dir(&cube_dir).unwrap();
    let tasks = format!("{COPY_TASK}    parameters_file: parameters.yaml\n");
    let cube = make_cube(
        &cube_dir,
        &tasks,
        "cat \"$arg_parameters\" > \"$arg_out\"\n",
        Some("threshold: 0.5\n"),
    );
    // Swapped after verification; the task must still see the pinned bytes.
    fs::write(cube_dir.join("parameters.yaml"), "threshold: 0.0\n").unwrap();
    let outcome = run_task(
        &cube,
        "copy",
        &inputs(data_dir(tmp.path())),
        &tmp.path().join("ws"),
        &insecure(),
        &ProcessBackend::default(),
    )
    .unwrap();
    assert_eq!(outcome.status, TaskStatus::Ok, "{}", outcome.log_excerpt);
    assert_eq!(
        fs::read_to_string(outcome.output("out")).unwrap(),
        "threshold: 0.5\n"
    );
}

fn random_hostile_name(rng: &mut impl Rng) -> String {
    const PIECES: &[&str] = &[
        "..", ".", "/", "\\", "a", "b", "%2e", "\0", "~", "-", "_", " ",
    ];
    let n = rng.gen_range(1..6);
    let mut s: String = (0..n)
        .map(|_| PIECES[rng.gen_range(0..PIECES.len())])
        .collect();
    if rng.gen_bool(0.5) {
        s = format!("../{s}");
    }
    s
}

#[test]
fn traversal_names_never_reach_the_filesystem() {
    let tmp = tempfile::tempdir().unwrap();
    let cube_dir = tmp.path().join("cube");
    fs::create_dir(&cube_dir).unwrap();
    let cube = make_cube(&cube_dir, COPY_TASK, "true\n", None);
    let data = data_dir(tmp.path());
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    for i in 0..300 {
        let name = random_hostile_name(&mut rng);
        // As an output binding in a manifest.
        let yaml = COPY_TASK.replace("      out:", &format!("      {:?}:", name));
        let text = format!("schema_version: 1\nname: t\nimage_ref: t:1\ntasks:\n{yaml}");
        if name.contains('/')
            || name.contains('\\')
            || name.contains('\0')
            || name == "."
            || name == ".."
        {
            assert!(parse_manifest(&text).is_err(), "accepted {name:?}");
        }
        // As a caller-supplied input binding.
        let mut map = inputs(data.clone());
        map.insert(name.clone(), data.clone());
        let ws = tmp.path().join(format!("ws{i}"));
        let err = run_task(
            &cube,
            "copy",
            &map,
            &ws,
            &insecure(),
            &ProcessBackend::default(),
        )
        .unwrap_err();
        assert_eq!(err.code(), "UNEXPECTED_BINDING", "{name:?}");
    }
    let names: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(
        names.iter().all(|n| n == "cube" || n == "data"),
        "{names:?}"
    );
}

#[test]
fn container_command_isolates_the_task() {
    let tmp = tempfile::tempdir().unwrap();
    let cube_dir = tmp.path().join("cube");
    fs::create_dir(&cube_dir).unwrap();
    let tasks = format!("{COPY_TASK}    parameters_file: parameters.yaml\n");
    let cube = make_cube(&cube_dir, &tasks, "true\n", Some("k: v\n"));
    let policy = SandboxPolicy::default();
    let req = LaunchRequest {
        cube: &cube,
        task: "copy",
        readonly_mounts: vec![Mount {
            binding: "data".into(),
            host_path: "/host/data".into(),
            kind: BindingKind::Dir,
        }],
        writable_mounts: vec![Mount {
            binding: "out".into(),
            host_path: "/ws/outputs/out".into(),
            kind: BindingKind::File,
        }],
        outputs_dir: "/ws/outputs".into(),
        parameters: Some("/ws/parameters.yaml".into()),
        workspace: "/ws".into(),
        log_path: "/ws/logs/copy.log".into(),
        policy: &policy,
    };
    let args = ContainerBackend::new("/usr/bin/podman".into()).run_args(&req, "n1");
    let has = |s: &str| args.iter().any(|a| a == s);
    assert!(has("--network=none"));
    assert!(has("--read-only"));
    assert!(has("--volume=/host/data:/fedeval/inputs/data:ro"));
    assert!(has("--volume=/ws/outputs:/fedeval/outputs:rw"));
    assert!(has(
        "--volume=/ws/parameters.yaml:/fedeval/parameters.yaml:ro"
    ));
    assert!(has("--memory=2147483648"));
    let image_at = args.iter().position(|a| a == "t:1").unwrap();
    assert_eq!(
        &args[image_at + 1..],
        [
            "copy",
            "--data=/fedeval/inputs/data",
            "--out=/fedeval/outputs/out",
            "--parameters=/fedeval/parameters.yaml"
        ]
    );
    // Only the inputs directory is ever mounted, and only read-only.
    assert!(args
        .iter()
        .filter(|a| a.starts_with("--volume=/host"))
        .all(|a| a.ends_with(":ro")));
}

#[test]
fn unknown_backend_is_reported() {
    assert_eq!(
        probe_backend("nonexistent").unwrap_err().code(),
        "BACKEND_NOT_FOUND"
    );
    let caps = probe_backend("process").unwrap();
    assert!(!caps.can_deny_network);
}
