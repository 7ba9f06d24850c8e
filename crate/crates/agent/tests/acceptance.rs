//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! The binary doubles as the refbench cube entrypoint: invoked with a cube
//! subcommand it runs that cube, so the end-to-end check can put a symlink
//! named `fedeval-refbench` in front of the process backend.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use fedeval_agent::sheets::{self, item_task, subject_ids};
use fedeval_agent::transport::Method;
use fedeval_agent::{
    pin_key, AgentError, ApiClient, ApprovalDecision, ApprovalKind, ApprovalRecord,
    ScriptedApprover,
};
use fedeval_core::api::{PendingItem, SubmitResult, API_PREFIX};
use fedeval_core::cube::verify::{IMAGE_FILE, MANIFEST_FILE};
use fedeval_core::cube::{Backend, ProcessBackend};
use fedeval_core::{
    aggregate_results, transition_association, transition_benchmark, verify_audit_chain, AccountId,
    AggregationMethod, AssociationAction, AssociationState, BenchmarkAction, BenchmarkState,
    ContentUid, CubeId, CubeRecord, EvaluationResult, EvaluationTask, ExecutedHashes, MetricRange,
    MetricSpec, ReleaseMode, ReleasePolicy, ResultId, Role, RoleSet, Timestamp,
};
use fedeval_refbench::cli::{run_cube, CUBE_SUBCOMMANDS};
use fedeval_refbench::site::SiteConfig;
use fedeval_server::testkit::{random_workflow, World, OPERATOR_TOKEN, START};
use fedeval_server::{ManualClock, Service, StoredState};

use support::{approve_all, oracle, Federation};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if let Some(sub) = args
        .get(1)
        .filter(|s| CUBE_SUBCOMMANDS.contains(&s.as_str()))
    {
        return ExitCode::from(run_cube(sub, &args[2..]).clamp(0, 255) as u8);
    }

    let mut failed = 0;
    let mut report = |name: &str, started: Instant, outcome: Check| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{secs:.1}s]");
            }
        }
        let _ = std::io::stdout().flush();
    };

    let t = Instant::now();
    let e2e = guarded(end_to_end);
    report(
        "end-to-end federation",
        t,
        e2e.as_ref().map(|r| r.detail.clone()).map_err(Clone::clone),
    );
    let t = Instant::now();
    report("integrity", t, guarded(integrity));
    let t = Instant::now();
    report("gate completeness", t, guarded(gate_fuzzer));
    let t = Instant::now();
    report(
        "data locality",
        t,
        match &e2e {
            Ok(run) => data_locality(run),
            Err(_) => Err("the end-to-end run did not complete".into()),
        },
    );
    let t = Instant::now();
    report("state machines", t, guarded(state_machines));
    let t = Instant::now();
    report("audit replay", t, guarded(audit_replay));
    let t = Instant::now();
    report("aggregation math", t, guarded(aggregation));

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .map_or("panicked".into(), |m| format!("panicked: {m}"))),
    }
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &dest);
        } else {
            fs::copy(entry.path(), dest).unwrap();
        }
    }
}

fn site_cfg(seed: u64, shift: f64) -> SiteConfig {
    SiteConfig::new(seed, 200, shift)
}

// ---------------------------------------------------------------------------
// End to end

const SITES: [(u64, f64); 3] = [(1, 0.0), (2, 0.3), (3, 0.6)];
const SENTINEL: &str = "SENTINEL-9c2e51d07a6b";

struct E2eRun {
    detail: String,
    fed: Federation,
    _bin: tempfile::TempDir,
}

fn end_to_end() -> Result<E2eRun, String> {
    let started = Instant::now();
    let bin = tempfile::tempdir().unwrap();
    let exe = std::env::current_exe().unwrap();
    std::os::unix::fs::symlink(&exe, bin.path().join("fedeval-refbench")).unwrap();
    let fed = Federation::with_backend(
        3,
        Arc::new(ProcessBackend::with_search_dirs(vec![bin
            .path()
            .to_path_buf()])),
    );
    ensure!(
        fed.backend.id() == "process",
        "backend is {}",
        fed.backend.id()
    );

    let mut uids = Vec::new();
    for (i, (seed, shift)) in SITES.iter().enumerate() {
        uids.push(fed.onboard(
            &format!("owner{i}"),
            site_cfg(*seed, *shift),
            Some(SENTINEL),
        ));
    }
    let linear = fed.submit_linear();

    let mut uploads = 0;
    for (i, uid) in uids.iter().enumerate() {
        let agent = fed.agent(&format!("owner{i}"));
        let items = agent.poll(uid).map_err(|e| e.to_string())?;
        ensure!(items.len() == 2, "owner{i} sees {} tasks", items.len());
        for item in &items {
            let task = item_task(item);
            let record = agent
                .approve_model(&task, &mut approve_all())
                .map_err(|e| e.to_string())?;
            ensure!(
                record.decision == ApprovalDecision::Approve,
                "approval not recorded"
            );
            agent.run_evaluation(&task).map_err(|e| e.to_string())?;
            agent
                .submit(&task, &mut approve_all())
                .map_err(|e| e.to_string())?;
            uploads += 1;
        }
    }

    let committee = fed.client("committee");
    committee
        .set_release_policy(
            &fed.benchmark,
            ReleasePolicy {
                mode: ReleaseMode::Public,
                show_per_site: true,
            },
        )
        .map_err(|e| e.to_string())?;
    let bench = committee
        .benchmark(&fed.benchmark)
        .map_err(|e| e.to_string())?;
    let accuracy = bench
        .metric_spec("accuracy")
        .ok_or("benchmark lacks accuracy")?;
    ensure!(
        accuracy.aggregation == AggregationMethod::WeightedMean,
        "accuracy aggregates with {:?}",
        accuracy.aggregation
    );
    let anonymous = ApiClient::new(Arc::new(fed.recorder.clone()), None);
    let report = anonymous
        .results(&fed.benchmark)
        .map_err(|e| e.to_string())?;
    ensure!(
        report.per_site.len() == 6,
        "{} site rows released",
        report.per_site.len()
    );

    let want = oracle(&["1:200:0.0", "2:200:0.3", "3:200:0.6"]);
    let mut seen = Vec::new();
    for (model, key) in [(&fed.reference_model, "majority"), (&linear, "linear")] {
        let agg = report
            .aggregates
            .iter()
            .find(|a| a.model_cube_id == *model)
            .ok_or(format!("no aggregate for {model}"))?;
        let got = agg.metrics["accuracy"];
        let expected = want["pooled_accuracy"][key].as_f64().unwrap();
        ensure!(
            (got.value - expected).abs() <= 1e-12,
            "{key}: leaderboard {} vs oracle {expected}",
            got.value
        );
        ensure!(
            got.site_count == 3 && got.total_samples == 600,
            "{key}: {got:?}"
        );
        seen.push(format!("{key}={:.4}", got.value));
    }
    let launches = fed.backend.count();
    ensure!(launches == 3 * 3 + uploads * 2, "{launches} cube launches");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(E2eRun {
        detail: format!(
            "{uploads} results, {launches} process launches, {} in {:.1}s",
            seen.join(" "),
            elapsed.as_secs_f64()
        ),
        fed,
        _bin: bin,
    })
}

fn data_locality(run: &E2eRun) -> Check {
    let needle = SENTINEL.as_bytes();
    let contains = |hay: &[u8]| hay.windows(needle.len()).any(|w| w == needle);
    for i in 0..SITES.len() {
        let raw = run
            .fed
            .tmp
            .path()
            .join("raw")
            .join(format!("owner{i}"))
            .join("features.csv");
        ensure!(
            contains(&fs::read(&raw).unwrap()),
            "sentinel missing from {}",
            raw.display()
        );
    }
    let exchanges = run.fed.recorder.exchanges();
    let sent = run.fed.recorder.outbound_bytes();
    ensure!(
        exchanges.len() > 20,
        "only {} requests recorded",
        exchanges.len()
    );
    if let Some(i) = sent.iter().position(|b| contains(b)) {
        return Err(format!(
            "sentinel found in request {i}: {}",
            exchanges[i].request.path
        ));
    }
    let bytes: usize = sent.iter().map(Vec::len).sum();
    let stored = serde_json::to_vec(&run.fed.server.svc.stored_events().unwrap()).unwrap();
    ensure!(
        !contains(&stored),
        "sentinel found in the server audit chain"
    );
    Ok(format!(
        "{} requests, {bytes} bytes sent, no sentinel",
        exchanges.len()
    ))
}

// ---------------------------------------------------------------------------
// Integrity

/// Tasks each cube kind runs, for attributing launches.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Target {
    Prep,
    Metrics,
    Reference,
    Linear,
}

fn integrity() -> Check {
    let fed = Federation::new(1);
    let uid = fed.onboard("owner0", site_cfg(1, 0.0), None);
    fed.submit_linear();
    let agent = fed.agent("owner0");
    let items = agent.poll(&uid).map_err(|e| e.to_string())?;
    let polled = fed.tmp.path().join("snap-polled");
    copy_tree(&fed.home("owner0"), &polled);
    for item in &items {
        let task = item_task(item);
        agent
            .approve_model(&task, &mut approve_all())
            .map_err(|e| e.to_string())?;
        agent.run_evaluation(&task).map_err(|e| e.to_string())?;
    }
    let cached = fed.tmp.path().join("snap-cached");
    copy_tree(&fed.home("owner0"), &cached);
    let raw = fed.tmp.path().join("raw").join("owner0");

    let by_name = |n: &str| {
        items
            .iter()
            .find(|i| i.model_cube.name == n)
            .unwrap()
            .clone()
    };
    let reference = by_name("refbench-majority");
    let linear = by_name("refbench-linear");
    let record = |t: Target| -> CubeRecord {
        match t {
            Target::Prep => reference.prep_cube.clone(),
            Target::Metrics => reference.metrics_cube.clone(),
            Target::Reference => reference.model_cube.clone(),
            Target::Linear => linear.model_cube.clone(),
        }
    };
    let source = |t: Target| -> PathBuf {
        match t {
            Target::Prep => fed.bundle.prep.clone(),
            Target::Metrics => fed.bundle.metrics.clone(),
            Target::Reference => fed.bundle.reference_model.clone(),
            Target::Linear => fed.bundle.linear.clone(),
        }
    };

    let mut rng = StdRng::seed_from_u64(0x7a3);
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for trial in 0..100 {
        let target = *[
            Target::Prep,
            Target::Metrics,
            Target::Reference,
            Target::Linear,
        ]
        .choose(&mut rng)
        .unwrap();
        let rec = record(target);
        let mut files = vec![MANIFEST_FILE, IMAGE_FILE];
        if rec.parameters_uid.is_some() {
            files.push("parameters.yaml");
        }
        let file = *files.choose(&mut rng).unwrap();
        let in_cache = rng.gen_bool(0.5);

        let home_name = format!("trial-{trial}");
        let home = fed.home(&home_name);
        match (in_cache, target) {
            (false, Target::Prep) => {}
            (false, _) => copy_tree(&polled, &home),
            (true, _) => copy_tree(&cached, &home),
        }
        let path = if in_cache {
            home.join("assets")
                .join(pin_key(&rec).to_string())
                .join(file)
        } else {
            source(target).join(file)
        };
        let original = fs::read(&path).unwrap();
        let mut bytes = original.clone();
        let pos = rng.gen_range(0..bytes.len());
        bytes[pos] ^= rng.gen_range(1..=255u8);
        fs::write(&path, &bytes).unwrap();

        let before = fed.backend.count();
        let agent = fed.agent_at("owner0", &home_name);
        let task_of = |item: &PendingItem| item_task(item);
        let outcome: Result<(), AgentError> = match target {
            Target::Prep => agent
                .prepare_dataset(&raw, &fed.benchmark, &fed.out(&home_name), None)
                .map(drop),
            _ => {
                let item = if target == Target::Linear {
                    &linear
                } else {
                    &reference
                };
                let task = task_of(item);
                let mut yes = approve_all();
                let approved = if in_cache {
                    Ok(())
                } else {
                    agent.approve_model(&task, &mut yes).map(drop)
                };
                if approved.is_ok() && target == Target::Metrics || in_cache {
                    approved.and_then(|_| agent.run_evaluation(&task).map(drop))
                } else {
                    match approved {
                        Ok(()) => Err(AgentError::Invalid("tampered model was approved".into())),
                        Err(e) => {
                            ensure!(
                                yes.seen.is_empty(),
                                "trial {trial}: operator was prompted for a tampered cube"
                            );
                            Err(e)
                        }
                    }
                }
            }
        };
        fs::write(&path, &original).unwrap();

        let tampered_launches = fed.backend.launches.lock().unwrap()[before..]
            .iter()
            .filter(|(_, manifest, _)| *manifest == rec.manifest_uid)
            .count();
        ensure!(
            tampered_launches == 0,
            "trial {trial}: {target:?}/{file} ran {tampered_launches} times"
        );
        match outcome {
            Err(e) if e.code() == "HASH_MISMATCH" => {}
            Err(e) => {
                return Err(format!(
                    "trial {trial}: {target:?}/{file} cache={in_cache}: {}: {e}",
                    e.code()
                ))
            }
            Ok(()) => {
                return Err(format!(
                    "trial {trial}: {target:?}/{file} cache={in_cache} went undetected"
                ))
            }
        }
        *tally
            .entry(format!(
                "{}/{}",
                if in_cache { "cache" } else { "source" },
                file
            ))
            .or_default() += 1;
        let _ = fs::remove_dir_all(&home);
    }
    let summary: Vec<String> = tally.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    Ok(format!(
        "100/100 detected, 0 tampered launches ({})",
        summary.join(" ")
    ))
}

// ---------------------------------------------------------------------------
// Gate fuzzer

const INTERLEAVINGS: usize = 1000;
const PER_FEDERATION: usize = 50;
const OWNERS: usize = 2;

struct FuzzWorld {
    fed: Federation,
    uids: Vec<ContentUid>,
    /// The genuine pending items per owner, as served.
    items: Vec<Vec<PendingItem>>,
    snapshots: Vec<PathBuf>,
}

impl FuzzWorld {
    fn new(seed: u64) -> Self {
        let fed = Federation::new(OWNERS);
        let mut uids = Vec::new();
        let mut items = Vec::new();
        let mut snapshots = Vec::new();
        for o in 0..OWNERS {
            let owner = format!("owner{o}");
            uids.push(fed.onboard(&owner, site_cfg(seed * 10 + o as u64, 0.3 * o as f64), None));
        }
        fed.submit_linear();
        for (o, uid) in uids.iter().enumerate() {
            let owner = format!("owner{o}");
            items.push(fed.agent(&owner).poll(uid).unwrap());
            let snap = fed.tmp.path().join(format!("snap-{owner}"));
            copy_tree(&fed.home(&owner), &snap);
            snapshots.push(snap);
        }
        FuzzWorld {
            fed,
            uids,
            items,
            snapshots,
        }
    }
}

#[derive(Default)]
struct FuzzStats {
    commands: usize,
    attempted_uploads: usize,
    accepted_uploads: usize,
    launches: usize,
    outcomes: BTreeMap<String, usize>,
}

fn decision(rng: &mut StdRng) -> ApprovalDecision {
    if rng.gen_bool(0.7) {
        ApprovalDecision::Approve
    } else {
        ApprovalDecision::Reject
    }
}

fn gate_fuzzer() -> Check {
    let mut rng = StdRng::seed_from_u64(0x6a7e);
    let mut stats = FuzzStats::default();
    let mut world = None;
    for i in 0..INTERLEAVINGS {
        if i % PER_FEDERATION == 0 {
            world = Some(FuzzWorld::new(i as u64));
        }
        let w = world.as_ref().unwrap();
        interleaving(w, i, &mut rng, &mut stats).map_err(|e| format!("interleaving {i}: {e}"))?;
    }
    ensure!(
        stats.accepted_uploads >= 20,
        "only {} uploads were accepted",
        stats.accepted_uploads
    );
    ensure!(stats.launches >= 200, "only {} launches", stats.launches);
    let outcomes: Vec<String> = stats
        .outcomes
        .iter()
        .map(|(k, v)| format!("{k}:{v}"))
        .collect();
    Ok(format!(
        "{INTERLEAVINGS} interleavings, {} commands, {} uploads attempted, {} accepted, {} launches, 0 violations ({})",
        stats.commands,
        stats.attempted_uploads,
        stats.accepted_uploads,
        stats.launches,
        outcomes.join(" ")
    ))
}

fn interleaving(
    w: &FuzzWorld,
    i: usize,
    rng: &mut StdRng,
    stats: &mut FuzzStats,
) -> Result<(), String> {
    let fed = &w.fed;
    let o = rng.gen_range(0..OWNERS);
    let owner = format!("owner{o}");
    let home_name = format!("fuzz-{i}");
    copy_tree(&w.snapshots[o], &fed.home(&home_name));
    let uid = &w.uids[o];
    let tasks: Vec<EvaluationTask> = w.items[o].iter().map(item_task).collect();

    let exchanges_before = fed.recorder.len();
    let launches_before = fed.backend.count();
    let results_before: BTreeSet<ResultId> = fed
        .server
        .svc
        .snapshot()
        .registry
        .results
        .keys()
        .cloned()
        .collect();

    let mut agent = fed.agent_at(&owner, &home_name);
    let mut verified: BTreeSet<u64> = BTreeSet::new();
    for _ in 0..rng.gen_range(4..=14) {
        stats.commands += 1;
        let task = tasks.choose(rng).unwrap().clone();
        let (name, r): (&str, Result<(), AgentError>) = match rng.gen_range(0..10) {
            0..=2 => {
                let mut a = ScriptedApprover::new([decision(rng)]);
                ("approve", agent.approve_model(&task, &mut a).map(drop))
            }
            3..=4 => ("run", agent.run_evaluation(&task).map(drop)),
            5..=6 => {
                let mut a = ScriptedApprover::new([decision(rng)]);
                ("submit", agent.submit(&task, &mut a).map(drop))
            }
            7 => ("poll", agent.poll(uid).map(drop)),
            8 => {
                // A local edit of the draft between scoring and review.
                let home = agent.home();
                match home.draft(&task).map_err(|e| e.to_string())? {
                    Some(mut d) => {
                        if let Some(v) = d.metrics.values_mut().next() {
                            *v = rng.gen_range(0.0..1.0);
                        }
                        home.save_draft(&task, &d).map_err(|e| e.to_string())?;
                        ("edit-draft", Ok(()))
                    }
                    None => ("edit-draft", Ok(())),
                }
            }
            _ => {
                if rng.gen_bool(0.5) {
                    // Swap the approved item for a doctored one.
                    let home = agent.home();
                    if let Some(mut item) = home.approved_item(&task).map_err(|e| e.to_string())? {
                        item.model_cube.download_url.push_str("/elsewhere");
                        home.save_approved_item(&item).map_err(|e| e.to_string())?;
                    }
                    ("edit-item", Ok(()))
                } else {
                    verified.extend(agent.verifications().iter().map(|v| v.verification_id));
                    agent = fed.agent_at(&owner, &home_name);
                    ("restart", Ok(()))
                }
            }
        };
        let tag = match r {
            Ok(()) => format!("{name}=ok"),
            Err(e) => format!("{name}={}", e.code()),
        };
        *stats.outcomes.entry(tag).or_default() += 1;
    }
    verified.extend(agent.verifications().iter().map(|v| v.verification_id));

    let approvals = agent.home().approvals().map_err(|e| e.to_string())?;
    verify_audit_chain(&agent.home().audit_log().map_err(|e| e.to_string())?)
        .map_err(|at| format!("local chain broken at {at}"))?;
    let genuine =
        |task: &EvaluationTask| w.items[o].iter().find(|it| item_task(it) == *task).unwrap();

    // Every upload attempt carries approvals bound to what was shown.
    let uploads: Vec<SubmitResult> = fed.recorder.exchanges()[exchanges_before..]
        .iter()
        .filter(|e| {
            e.request.method == Method::Post && e.request.path == format!("{API_PREFIX}/results")
        })
        .map(|e| serde_json::from_slice(e.request.body.as_deref().unwrap()).unwrap())
        .collect();
    stats.attempted_uploads += uploads.len();
    for up in &uploads {
        let task = EvaluationTask {
            benchmark_id: up.benchmark_id.clone(),
            dataset_uid: up.dataset_uid.clone(),
            model_cube_id: up.model_cube_id.clone(),
        };
        let mut shown = up.clone();
        shown.result_approved_at = None;
        check_gates(
            &approvals,
            &task,
            genuine(&task),
            up.model_approved_at,
            up.result_approved_at,
            &sheets::result_sheet(&shown),
        )?;
        ensure!(
            up.executed_hashes.model == genuine(&task).model_cube.manifest_uid,
            "upload names a foreign model hash"
        );
    }
    // And so does everything the server accepted.
    let snapshot = fed.server.svc.snapshot();
    for r in snapshot
        .registry
        .results
        .values()
        .filter(|r| !results_before.contains(&r.id))
    {
        stats.accepted_uploads += 1;
        let task = EvaluationTask {
            benchmark_id: r.benchmark_id.clone(),
            dataset_uid: r.dataset_uid.clone(),
            model_cube_id: r.model_cube_id.clone(),
        };
        check_gates(
            &approvals,
            &task,
            genuine(&task),
            Some(r.model_approved_at),
            Some(r.result_approved_at),
            &sheets::result_sheet_of(r),
        )?;
    }

    // Nothing ran on an unverified cube, and models only after approval.
    let launches = fed.backend.launches.lock().unwrap()[launches_before..].to_vec();
    stats.launches += launches.len();
    for (vid, manifest, task) in &launches {
        ensure!(
            verified.contains(vid),
            "{task} launched without verification in this session"
        );
        if task == "infer" {
            let approved = approvals.iter().any(|a| {
                a.what == ApprovalKind::ModelExecution
                    && a.decision == ApprovalDecision::Approve
                    && w.items[o].iter().any(|it| {
                        it.model_cube.manifest_uid == *manifest
                            && a.subject_ids == subject_ids(&item_task(it))
                            && a.shown_digest == sheets::digest(&sheets::model_sheet(it))
                    })
            });
            ensure!(approved, "model {manifest} ran without a matching approval");
        }
    }
    let _ = fs::remove_dir_all(fed.home(&home_name));
    Ok(())
}

fn check_gates(
    approvals: &[ApprovalRecord],
    task: &EvaluationTask,
    item: &PendingItem,
    model_at: Option<Timestamp>,
    result_at: Option<Timestamp>,
    result_sheet: &str,
) -> Result<(), String> {
    let subjects = subject_ids(task);
    let model_digest = sheets::digest(&sheets::model_sheet(item));
    let model = approvals.iter().position(|a| {
        a.what == ApprovalKind::ModelExecution
            && a.decision == ApprovalDecision::Approve
            && a.subject_ids == subjects
            && a.shown_digest == model_digest
            && Some(a.timestamp) == model_at
    });
    let result_digest = sheets::digest(result_sheet);
    let result = approvals.iter().position(|a| {
        a.what == ApprovalKind::ResultUpload
            && a.decision == ApprovalDecision::Approve
            && a.subject_ids == subjects
            && a.shown_digest == result_digest
            && Some(a.timestamp) == result_at
    });
    match (model, result) {
        (Some(m), Some(r)) if m < r => Ok(()),
        (m, r) => Err(format!(
            "upload for {} lacks matched approvals (model {m:?}, result {r:?})",
            sheets::task_key(task)
        )),
    }
}

// ---------------------------------------------------------------------------
// State machines

#[derive(Clone, Copy, Debug, PartialEq)]
enum Caller {
    Operator,
    OwnCommittee,
    OtherCommittee,
    DataOwner,
    ModelOwner,
    Anonymous,
}

const CALLERS: [Caller; 6] = [
    Caller::Operator,
    Caller::OwnCommittee,
    Caller::OtherCommittee,
    Caller::DataOwner,
    Caller::ModelOwner,
    Caller::Anonymous,
];

impl Caller {
    fn account(self) -> Option<&'static str> {
        match self {
            Caller::Operator => Some("op"),
            Caller::OwnCommittee => Some("c1"),
            Caller::OtherCommittee => Some("c2"),
            Caller::DataOwner => Some("d1"),
            Caller::ModelOwner => Some("m1"),
            Caller::Anonymous => None,
        }
    }
}

type Expect<S> = Result<S, &'static str>;

/// The association table, written out cell by cell.
fn association_table(
    from: AssociationState,
    action: AssociationAction,
    who: Caller,
) -> Expect<AssociationState> {
    use AssociationState::*;
    match who {
        Caller::Anonymous => Err("UNAUTHENTICATED"),
        Caller::OwnCommittee => match (from, action) {
            (Requested, AssociationAction::Approve) => Ok(Approved),
            (Requested, AssociationAction::Reject) => Ok(Rejected),
            (Approved, _) | (Rejected, _) => Err("ILLEGAL_TRANSITION"),
        },
        Caller::Operator | Caller::OtherCommittee | Caller::DataOwner | Caller::ModelOwner => {
            Err("FORBIDDEN")
        }
    }
}

/// The benchmark lifecycle table, written out cell by cell.
fn benchmark_table(
    from: BenchmarkState,
    action: BenchmarkAction,
    who: Caller,
) -> Expect<BenchmarkState> {
    use BenchmarkState::*;
    match (action, who) {
        (_, Caller::Anonymous) => Err("UNAUTHENTICATED"),
        (BenchmarkAction::Activate, Caller::Operator) => match from {
            Draft => Ok(Operational),
            Operational | Retired => Err("ILLEGAL_TRANSITION"),
        },
        (BenchmarkAction::Retire, Caller::Operator | Caller::OwnCommittee) => match from {
            Operational => Ok(Retired),
            Draft | Retired => Err("ILLEGAL_TRANSITION"),
        },
        _ => Err("FORBIDDEN"),
    }
}

fn state_machines() -> Check {
    let mut cells = 0;
    for from in [
        AssociationState::Requested,
        AssociationState::Approved,
        AssociationState::Rejected,
    ] {
        for action in [AssociationAction::Approve, AssociationAction::Reject] {
            for who in CALLERS {
                let want = association_table(from, action, who);
                let w = World::new();
                let op = w.caller("c1");
                match from {
                    AssociationState::Requested => {}
                    AssociationState::Approved => {
                        w.svc
                            .decide_association(
                                op,
                                &w.requested_association,
                                AssociationAction::Approve,
                            )
                            .unwrap();
                    }
                    AssociationState::Rejected => {
                        w.svc
                            .decide_association(
                                op,
                                &w.requested_association,
                                AssociationAction::Reject,
                            )
                            .unwrap();
                    }
                }
                let version = w.svc.snapshot().version;
                let caller = who.account().and_then(|a| w.caller(a));
                let got = w
                    .svc
                    .decide_association(caller, &w.requested_association, action)
                    .map(|a| a.state)
                    .map_err(|e| e.code);
                let s = w.svc.snapshot();
                let now = s.registry.associations[&w.requested_association].state;
                ensure!(
                    got == want,
                    "association {from:?} {action:?} by {who:?}: got {got:?}, table says {want:?}"
                );
                ensure!(
                    now == want.unwrap_or(from),
                    "association {from:?} {action:?} by {who:?}: stored {now:?}"
                );
                ensure!(
                    s.version == version + u64::from(want.is_ok()),
                    "association {from:?} {action:?} by {who:?}: version"
                );

                // The pure transition agrees for authenticated callers.
                if let Some(acct) = caller {
                    let b = &s.registry.benchmarks[&w.bench];
                    let mut a = s.registry.associations[&w.requested_association].clone();
                    a.state = from;
                    let pure = transition_association(
                        &a,
                        action,
                        &acct.id,
                        &acct.roles,
                        b,
                        Timestamp::from_unix(START),
                    )
                    .map(|a| a.state)
                    .map_err(|e| e.code());
                    ensure!(
                        pure == want,
                        "pure association {from:?} {action:?} by {who:?}: {pure:?}"
                    );
                }
                cells += 1;
            }
        }
    }
    for from in [
        BenchmarkState::Draft,
        BenchmarkState::Operational,
        BenchmarkState::Retired,
    ] {
        for action in [BenchmarkAction::Activate, BenchmarkAction::Retire] {
            for who in CALLERS {
                let want = benchmark_table(from, action, who);
                let w = World::new();
                let id = match from {
                    BenchmarkState::Draft => w.draft.clone(),
                    BenchmarkState::Operational => w.bench.clone(),
                    BenchmarkState::Retired => {
                        w.svc.retire_benchmark(w.caller("op"), &w.bench).unwrap();
                        w.bench.clone()
                    }
                };
                let version = w.svc.snapshot().version;
                let caller = who.account().and_then(|a| w.caller(a));
                let r = match action {
                    BenchmarkAction::Activate => w.svc.activate_benchmark(caller, &id),
                    BenchmarkAction::Retire => w.svc.retire_benchmark(caller, &id),
                };
                let s = w.svc.snapshot();
                let now = s.registry.benchmarks[&id].state;
                let got = r.map(|()| now).map_err(|e| e.code);
                ensure!(
                    got == want,
                    "benchmark {from:?} {action:?} by {who:?}: got {got:?}, table says {want:?}"
                );
                ensure!(
                    now == want.unwrap_or(from),
                    "benchmark {from:?} {action:?} by {who:?}: stored {now:?}"
                );
                ensure!(
                    s.version == version + u64::from(want.is_ok()),
                    "benchmark {from:?} {action:?} by {who:?}: version"
                );

                if let Some(acct) = caller {
                    let mut b = s.registry.benchmarks[&id].clone();
                    b.state = from;
                    let pure = transition_benchmark(&b, action, &acct.id, &acct.roles)
                        .map(|b| b.state)
                        .map_err(|e| e.code());
                    ensure!(
                        pure == want,
                        "pure benchmark {from:?} {action:?} by {who:?}: {pure:?}"
                    );
                }
                cells += 1;
            }
        }
    }
    // Role sets that no fixture account holds.
    let w = World::new();
    let s = w.svc.snapshot();
    let b = &s.registry.benchmarks[&w.bench];
    let a = &s.registry.associations[&w.requested_association];
    let committee = &b.committee_id;
    let roles = |rs: &[Role]| rs.iter().copied().collect::<RoleSet>();
    let both = roles(&[Role::PlatformOperator, Role::Committee]);
    ensure!(
        transition_association(
            a,
            AssociationAction::Approve,
            committee,
            &both,
            b,
            Timestamp::from_unix(START)
        )
        .is_ok(),
        "committee holding the operator role too"
    );
    ensure!(
        transition_association(
            a,
            AssociationAction::Approve,
            committee,
            &roles(&[Role::DataOwner]),
            b,
            Timestamp::from_unix(START)
        )
        .map_err(|e| e.code())
            == Err("FORBIDDEN"),
        "committee id without the committee role"
    );
    let other = AccountId::new("acct-999999");
    ensure!(
        transition_benchmark(
            b,
            BenchmarkAction::Retire,
            &other,
            &roles(&[Role::Committee])
        )
        .map_err(|e| e.code())
            == Err("FORBIDDEN"),
        "foreign committee retiring"
    );
    Ok(format!(
        "{cells} (state, action, caller) cells match both tables"
    ))
}

// ---------------------------------------------------------------------------
// Audit

fn audit_replay() -> Check {
    let mut rng = StdRng::seed_from_u64(0xa0d17);
    let mut events_total = 0;
    let mut mutations = 0;
    for wf in 0..50u64 {
        let clock = Arc::new(ManualClock::new(START));
        let svc = Service::in_memory(clock.clone());
        svc.bootstrap_operator(OPERATOR_TOKEN).unwrap();
        let mut wf_rng = StdRng::seed_from_u64(1000 + wf);
        let stats = random_workflow(&svc, &clock, &mut wf_rng, 120);
        let live = svc.snapshot();
        let events = svc.stored_events().unwrap();
        ensure!(
            stats.committed + 1 == events.len() as u64,
            "workflow {wf}: {} commits, {} events",
            stats.committed,
            events.len()
        );
        verify_audit_chain(&events)
            .map_err(|at| format!("workflow {wf}: fresh chain broken at {at}"))?;
        let rebuilt = StoredState::replay(&events).map_err(|e| format!("workflow {wf}: {e}"))?;
        ensure!(
            rebuilt == live,
            "workflow {wf}: replay differs from the live registry"
        );
        events_total += events.len();

        // Single-entry mutations at random positions and in random fields.
        for _ in 0..10 {
            let mut tampered = events.clone();
            let i = rng.gen_range(0..tampered.len());
            let e = &mut tampered[i];
            match rng.gen_range(0..6) {
                0 => e.timestamp = e.timestamp.plus_secs(rng.gen_range(1..1000)),
                1 => e.actor.push('x'),
                2 => e.subject_ids.push("bmk-999999".into()),
                3 => {
                    let mut p = e.payload.clone().into_bytes();
                    let at = rng.gen_range(0..p.len().max(1));
                    if p.is_empty() {
                        p.push(b' ');
                    } else {
                        p[at] = if p[at] == b'0' { b'1' } else { b'0' };
                    }
                    e.payload = String::from_utf8_lossy(&p).into_owned();
                }
                4 => e.seq += 1,
                _ => {
                    let mut h = e.entry_hash.to_string().into_bytes();
                    let at = rng.gen_range(0..h.len());
                    h[at] = if h[at] == b'a' { b'b' } else { b'a' };
                    e.entry_hash = String::from_utf8(h).unwrap().parse().unwrap();
                }
            }
            let at = verify_audit_chain(&tampered);
            ensure!(
                at == Err(i as u64),
                "workflow {wf}: mutation of entry {i} reported as {at:?}"
            );
            mutations += 1;
        }
    }
    Ok(format!("50 workflows, {events_total} events replayed exactly, {mutations}/{mutations} mutations located"))
}

// ---------------------------------------------------------------------------
// Aggregation

fn site_result(i: usize, correct: u64, n: u64) -> EvaluationResult {
    let h = fedeval_core::file_uid(format!("{i}").as_bytes());
    EvaluationResult {
        id: ResultId::new(format!("res-{i}")),
        benchmark_id: fedeval_core::BenchmarkId::new("bmk-1"),
        dataset_uid: h.clone(),
        model_cube_id: CubeId::new("cube-1"),
        metrics: [("accuracy".to_string(), correct as f64 / n as f64)].into(),
        sample_count: n,
        executed_hashes: ExecutedHashes {
            prep: h.clone(),
            model: h.clone(),
            metrics_cube: h,
        },
        operator_id: AccountId::new("acct-1"),
        model_approved_at: Timestamp::from_unix(START),
        result_approved_at: Timestamp::from_unix(START),
        uploaded_at: Timestamp::from_unix(START),
    }
}

fn aggregation() -> Check {
    let mut rng = StdRng::seed_from_u64(0xa66);
    let instances: Vec<Vec<(u64, u64)>> = (0..100)
        .map(|k| {
            let sites = rng.gen_range(1..=12);
            (0..sites)
                .map(|_| {
                    let n = if k % 10 == 0 {
                        rng.gen_range(1..=7)
                    } else {
                        rng.gen_range(1..=5000)
                    };
                    (rng.gen_range(0..=n), n)
                })
                .collect()
        })
        .collect();

    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python/aggregation_oracle.py");
    let mut child = Command::new("python3")
        .arg(script)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| format!("python3: {e}"))?;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(&serde_json::to_vec(&instances).unwrap())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    ensure!(out.status.success(), "oracle failed");
    let want: Vec<BTreeMap<String, String>> = serde_json::from_slice(&out.stdout).unwrap();

    let spec = MetricSpec {
        name: "accuracy".into(),
        range: MetricRange { min: 0.0, max: 1.0 },
        higher_is_better: true,
        decomposable: true,
        aggregation: AggregationMethod::WeightedMean,
    };
    for (k, (sites, want)) in instances.iter().zip(&want).enumerate() {
        let results: Vec<EvaluationResult> = sites
            .iter()
            .enumerate()
            .map(|(i, &(c, n))| site_result(i, c, n))
            .collect();
        let correct: u64 = sites.iter().map(|s| s.0).sum();
        let total: u64 = sites.iter().map(|s| s.1).sum();
        for (method, key) in [
            (AggregationMethod::WeightedMean, "pooled"),
            (AggregationMethod::Min, "min"),
            (AggregationMethod::Max, "max"),
            (AggregationMethod::UnweightedMean, "unweighted"),
        ] {
            let got = aggregate_results(&results, &spec, method)
                .map_err(|e| format!("instance {k}: {e}"))?;
            let expected: f64 = want[key].parse().unwrap();
            ensure!(
                got.value.to_bits() == expected.to_bits(),
                "instance {k} {method:?}: {} vs oracle {expected}",
                got.value
            );
            ensure!(
                got.total_samples == total && got.site_count == sites.len() as u64,
                "instance {k}: counts"
            );
        }
        let pooled = correct as f64 / total as f64;
        let weighted = aggregate_results(&results, &spec, AggregationMethod::WeightedMean)
            .unwrap()
            .value;
        ensure!(
            weighted == pooled,
            "instance {k}: weighted {weighted} != pooled {pooled}"
        );
    }
    Ok(
        "100 instances; weighted == pooled bit for bit, MIN/MAX/UNWEIGHTED_MEAN equal the oracle"
            .into(),
    )
}
