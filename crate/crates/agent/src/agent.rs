//! Data-owner, model-owner and committee workflows.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use fedeval_core::api::{
    PendingItem, RegisterBenchmark, RegisterCube, RegisterDataset, RequestAssociation, SubmitResult,
};
use fedeval_core::cube::verify::MANIFEST_FILE;
use fedeval_core::cube::{
    parse_manifest, pin_cube_dir, run_task, verify_cube, Backend, RunError, SandboxPolicy,
    TaskOutcome, TaskStatus, VerifiedCube, VerifyError,
};
use fedeval_core::uid::dir_content_uid;
use fedeval_core::yaml::{self, Yaml};
use fedeval_core::{
    file_uid, AssociationId, AuditAction, AuditEvent, AuditEventDraft, BenchmarkId, BenchmarkState,
    ContentUid, CubeId, CubeKind, CubeRecord, EvaluationTask, ExecutedHashes, MetricRange,
    MetricSpec, SubjectKind, Timestamp,
};

use crate::approve::{ApprovalDecision, ApprovalKind, ApprovalRecord, Approver, Prompt};
use crate::client::ApiClient;
use crate::error::{AgentError, Result};
use crate::fetch::download_cube;
use crate::home::{AgentHome, LocalDataset, RegistrationState};
use crate::sheets::{self, item_task, subject_ids, task_key};

/// Where a downloaded cube is kept until it is trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placement {
    Assets,
    Quarantine,
}

/// One successful `verify_cube` in this session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verification {
    pub verification_id: u64,
    pub manifest_uid: ContentUid,
}

pub struct Agent {
    home: AgentHome,
    client: ApiClient,
    backend: Arc<dyn Backend>,
    policy: SandboxPolicy,
    verifications: Mutex<Vec<Verification>>,
}

static WORKSPACES: AtomicU64 = AtomicU64::new(0);

/// Content key of a cube's pins; two records with identical pins share a
/// directory.
pub fn pin_key(c: &CubeRecord) -> ContentUid {
    let pins = fedeval_core::cube::PinnedHashes::from(c);
    file_uid(&serde_json::to_vec(&pins).expect("serializable"))
}

fn copy_dir(from: &Path, to: &Path) -> io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}

fn verify_failure(e: VerifyError) -> AgentError {
    match e {
        VerifyError::Io(e) => AgentError::Io(e),
        other => AgentError::HashMismatch(other.to_string()),
    }
}

fn run_failure(stage: &str, e: RunError) -> AgentError {
    match e {
        RunError::SandboxUnavailable { .. } | RunError::BackendNotFound(_) => {
            AgentError::SandboxUnavailable(e.to_string())
        }
        RunError::IntegrityChanged(_) => AgentError::HashMismatch(e.to_string()),
        RunError::Io(e) => AgentError::Io(e),
        _ => AgentError::TaskFailed {
            stage: stage.to_owned(),
            exit_code: -1,
        },
    }
}

/// Numeric scalars of a flat YAML report; `null` entries and nested maps are
/// skipped.
pub fn numeric_entries(text: &str) -> Result<BTreeMap<String, f64>> {
    let doc = yaml::parse(text).map_err(|e| AgentError::Parse(format!("task report: {e}")))?;
    let map = doc
        .as_map()
        .ok_or_else(|| AgentError::Parse("task report is not a mapping".into()))?;
    Ok(map
        .iter()
        .filter_map(|(k, v)| {
            let x = v.as_str()?.parse::<f64>().ok().filter(|x| x.is_finite())?;
            Some((k.clone(), x))
        })
        .collect())
}

#[derive(Serialize)]
struct Execution<'a> {
    task: String,
    executed_hashes: &'a ExecutedHashes,
    outputs: BTreeMap<String, BTreeMap<String, ContentUid>>,
}

impl Agent {
    pub fn new(
        home: AgentHome,
        client: ApiClient,
        backend: Arc<dyn Backend>,
        policy: SandboxPolicy,
    ) -> Self {
        Agent {
            home,
            client,
            backend,
            policy,
            verifications: Mutex::default(),
        }
    }

    pub fn home(&self) -> &AgentHome {
        &self.home
    }

    pub fn client(&self) -> &ApiClient {
        &self.client
    }

    pub fn verifications(&self) -> Vec<Verification> {
        self.verifications.lock().unwrap().clone()
    }

    fn verify(&self, dir: &Path, record: &CubeRecord) -> Result<VerifiedCube> {
        let cube = verify_cube(dir, &record.into()).map_err(verify_failure)?;
        self.verifications.lock().unwrap().push(Verification {
            verification_id: cube.verification_id(),
            manifest_uid: cube.manifest_uid().clone(),
        });
        Ok(cube)
    }

    /// A verified local copy of `record`, downloading it if needed. A
    /// fresh download that fails verification is discarded; a cached copy
    /// that fails is left in place for inspection.
    fn ensure_cube(&self, record: &CubeRecord, placement: Placement) -> Result<VerifiedCube> {
        let key = pin_key(record).to_string();
        let trusted = self.home.dir("assets").join(&key);
        if trusted.exists() {
            return self.verify(&trusted, record);
        }
        let target = match placement {
            Placement::Assets => trusted,
            Placement::Quarantine => self.home.dir("quarantine").join(&key),
        };
        if target.exists() {
            return self.verify(&target, record);
        }
        let staging = self.scratch("staging")?;
        download_cube(record, &staging)?;
        fs::rename(&staging, &target)?;
        self.verify(&target, record).inspect_err(|_| {
            let _ = fs::remove_dir_all(&target);
        })
    }

    /// A verified copy that has already left quarantine.
    fn trusted_cube(&self, record: &CubeRecord) -> Result<Option<VerifiedCube>> {
        let dir = self.home.dir("assets").join(pin_key(record).to_string());
        if !dir.exists() {
            return Ok(None);
        }
        self.verify(&dir, record).map(Some)
    }

    fn scratch(&self, sub: &str) -> Result<PathBuf> {
        loop {
            let n = WORKSPACES.fetch_add(1, Ordering::Relaxed);
            let dir = self
                .home
                .dir(sub)
                .join(format!("{}-{n}", std::process::id()));
            match fs::create_dir(&dir) {
                Ok(()) => return Ok(dir),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn run(
        &self,
        cube: &VerifiedCube,
        task: &str,
        inputs: &[(&str, &Path)],
    ) -> Result<TaskOutcome, RunError> {
        let ws = self.scratch("work").map_err(|e| match e {
            AgentError::Io(e) => RunError::Io(e),
            other => RunError::Io(io::Error::other(other.to_string())),
        })?;
        let inputs = inputs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_path_buf()))
            .collect();
        run_task(
            cube,
            task,
            &inputs,
            &ws,
            &self.policy,
            self.backend.as_ref(),
        )
    }

    fn operational_benchmark(&self, id: &BenchmarkId) -> Result<fedeval_core::Benchmark> {
        let b = self.client.benchmark(id)?;
        if b.state != BenchmarkState::Operational {
            return Err(AgentError::Invalid(format!(
                "benchmark {id} is {:?}, not OPERATIONAL",
                b.state
            )));
        }
        Ok(b)
    }

    fn decide(
        &self,
        approver: &mut dyn Approver,
        kind: ApprovalKind,
        subjects: Vec<String>,
        sheet: &str,
    ) -> Result<ApprovalRecord> {
        let digest = sheets::digest(sheet);
        let decision = approver.decide(&Prompt {
            kind,
            subject_ids: &subjects,
            sheet,
            digest: &digest,
        })?;
        let record = ApprovalRecord {
            what: kind,
            subject_ids: subjects,
            decision,
            operator: approver.operator(),
            shown_digest: digest,
            timestamp: Timestamp::now(),
        };
        self.home.record_approval(&record)?;
        Ok(record)
    }

    /// Runs the benchmark's preparation cube over `raw` into `out`. Nothing
    /// leaves the machine except the cube download.
    pub fn prepare_dataset(
        &self,
        raw: &Path,
        benchmark: &BenchmarkId,
        out: &Path,
        name: Option<&str>,
    ) -> Result<LocalDataset> {
        if !raw.is_dir() {
            return Err(AgentError::Invalid(format!(
                "{} is not a directory",
                raw.display()
            )));
        }
        if out.exists() && fs::read_dir(out)?.next().is_some() {
            return Err(AgentError::Invalid(format!(
                "{} is not empty",
                out.display()
            )));
        }
        let b = self.operational_benchmark(benchmark)?;
        let record = self.client.cube(&b.preparation_cube)?;
        let cube = self.ensure_cube(&record, Placement::Assets)?;

        let prep_failed = |task: &str, e: RunError| match run_failure(task, e) {
            AgentError::TaskFailed { stage, exit_code } => AgentError::PrepFailed {
                task: stage,
                exit_code,
            },
            other => other,
        };
        let outcome = self
            .run(&cube, "prepare", &[("raw_data", raw)])
            .map_err(|e| prep_failed("prepare", e))?;
        if outcome.status != TaskStatus::Ok {
            return Err(AgentError::PrepFailed {
                task: "prepare".into(),
                exit_code: outcome.exit_code,
            });
        }
        copy_dir(&outcome.output("prepared_data"), out)?;
        let prepared = out.canonicalize()?;

        let check = self
            .run(&cube, "sanity_check", &[("prepared_data", &prepared)])
            .map_err(|e| prep_failed("sanity_check", e))?;
        if check.status != TaskStatus::Ok {
            return Err(AgentError::SanityCheckFailed {
                exit_code: check.exit_code,
            });
        }
        let stats = self
            .run(&cube, "statistics", &[("prepared_data", &prepared)])
            .map_err(|e| prep_failed("statistics", e))?;
        if stats.status != TaskStatus::Ok {
            return Err(AgentError::PrepFailed {
                task: "statistics".into(),
                exit_code: stats.exit_code,
            });
        }
        let statistics_report = numeric_entries(&fs::read_to_string(stats.output("statistics"))?)?;
        if !statistics_report
            .get("n")
            .is_some_and(|n| *n >= 1.0 && n.fract() == 0.0)
        {
            return Err(AgentError::PrepFailed {
                task: "statistics".into(),
                exit_code: 0,
            });
        }
        for o in [&outcome, &check, &stats] {
            let _ = fs::remove_dir_all(o.outputs_dir.parent().unwrap_or(&o.outputs_dir));
        }

        let generated_uid =
            dir_content_uid(&prepared).map_err(|e| AgentError::Invalid(e.to_string()))?;
        let previous = self.home.dataset(&generated_uid)?;
        let raw_path = raw.canonicalize()?;
        let default_name = raw_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let dataset = LocalDataset {
            name: name.map(str::to_owned).unwrap_or(default_name),
            raw_path,
            prepared_path: prepared,
            generated_uid,
            statistics_report,
            registration_state: previous
                .as_ref()
                .map_or(RegistrationState::Prepared, |p| p.registration_state),
            benchmark_id: benchmark.clone(),
            prep_cube_id: record.id.clone(),
            association_id: previous.and_then(|p| p.association_id),
        };
        self.home.save_dataset(&dataset)?;
        Ok(dataset)
    }

    fn local_dataset(&self, uid: &ContentUid) -> Result<LocalDataset> {
        self.home
            .dataset(uid)?
            .ok_or_else(|| AgentError::Invalid(format!("no local dataset {uid}")))
    }

    /// The exact registration payload for a prepared dataset.
    pub fn registration_payload(d: &LocalDataset) -> RegisterDataset {
        RegisterDataset {
            generated_uid: d.generated_uid.clone(),
            name: d.name.clone(),
            benchmark_prep_cube: d.prep_cube_id.clone(),
            sample_count: d.statistics_report.get("n").copied().unwrap_or(0.0) as u64,
            statistics: d.statistics_report.clone(),
        }
    }

    /// Shows the statistics payload, and on approval registers the dataset
    /// and asks to join its benchmark.
    pub fn register_dataset(
        &self,
        uid: &ContentUid,
        approver: &mut dyn Approver,
    ) -> Result<LocalDataset> {
        let mut d = self.local_dataset(uid)?;
        if d.registration_state == RegistrationState::Registered {
            return Err(AgentError::Invalid(format!(
                "dataset {uid} is already registered"
            )));
        }
        let req = Self::registration_payload(&d);
        let sheet = sheets::stats_sheet(&req);
        let subjects = vec![uid.to_string()];
        let prior = self
            .home
            .latest_approval(ApprovalKind::StatsUpload, &subjects)?;
        let already = d.registration_state == RegistrationState::StatsApproved
            && prior.is_some_and(|r| {
                r.decision == ApprovalDecision::Approve && r.shown_digest == sheets::digest(&sheet)
            });
        if !already {
            let record = self.decide(approver, ApprovalKind::StatsUpload, subjects, &sheet)?;
            if record.decision == ApprovalDecision::Reject {
                return Err(AgentError::NotApproved);
            }
            d.registration_state = RegistrationState::StatsApproved;
            self.home.save_dataset(&d)?;
        }
        self.client.register_dataset(&req)?;
        d.registration_state = RegistrationState::Registered;
        self.home.save_dataset(&d)?;
        let assoc = self.client.request_association(&RequestAssociation {
            benchmark_id: d.benchmark_id.clone(),
            subject_kind: SubjectKind::Dataset,
            subject: uid.to_string(),
        })?;
        d.association_id = Some(assoc);
        self.home.save_dataset(&d)?;
        Ok(d)
    }

    fn unsuppressed(&self, items: Vec<PendingItem>) -> Result<Vec<PendingItem>> {
        let mut out = Vec::new();
        for item in items {
            if !self.home.is_suppressed(&item_task(&item))? {
                out.push(item);
            }
        }
        Ok(out)
    }

    /// Fetches and caches the pending list; locally rejected tasks are left
    /// out.
    pub fn poll(&self, uid: &ContentUid) -> Result<Vec<PendingItem>> {
        let list = self.client.pending(uid)?;
        self.home.cache_pending(uid, &list)?;
        self.unsuppressed(list.tasks)
    }

    /// The cached pending list, without network access.
    pub fn cached_tasks(&self, uid: &ContentUid) -> Result<Vec<PendingItem>> {
        let list = self
            .home
            .cached_pending(uid)?
            .map(|l| l.tasks)
            .unwrap_or_default();
        self.unsuppressed(list)
    }

    fn pending_item(&self, task: &EvaluationTask) -> Result<PendingItem> {
        let find = |items: Vec<PendingItem>| items.into_iter().find(|i| item_task(i) == *task);
        if let Some(item) = find(
            self.home
                .cached_pending(&task.dataset_uid)?
                .map(|l| l.tasks)
                .unwrap_or_default(),
        ) {
            return Ok(item);
        }
        self.poll(&task.dataset_uid)?;
        find(
            self.home
                .cached_pending(&task.dataset_uid)?
                .map(|l| l.tasks)
                .unwrap_or_default(),
        )
        .ok_or_else(|| AgentError::Invalid(format!("task {} is not pending", task_key(task))))
    }

    /// Downloads and verifies the task's cubes, shows the review sheet and
    /// records the decision. The model leaves quarantine only on approval.
    pub fn approve_model(
        &self,
        task: &EvaluationTask,
        approver: &mut dyn Approver,
    ) -> Result<ApprovalRecord> {
        if self.home.is_suppressed(task)? {
            return Err(AgentError::Invalid(format!(
                "task {} was rejected",
                task_key(task)
            )));
        }
        let item = self.pending_item(task)?;
        self.ensure_cube(&item.prep_cube, Placement::Assets)?;
        self.ensure_cube(&item.metrics_cube, Placement::Assets)?;
        let model = self.ensure_cube(&item.model_cube, Placement::Quarantine)?;

        let sheet = sheets::model_sheet(&item);
        let record = self.decide(
            approver,
            ApprovalKind::ModelExecution,
            subject_ids(task),
            &sheet,
        )?;
        if record.decision == ApprovalDecision::Approve {
            let trusted = self
                .home
                .dir("assets")
                .join(pin_key(&item.model_cube).to_string());
            if model.dir() != trusted {
                fs::rename(model.dir(), &trusted)?;
            }
            self.home.save_approved_item(&item)?;
        }
        Ok(record)
    }

    /// Runs inference and scoring for an approved task and keeps the result
    /// as a local draft.
    pub fn run_evaluation(&self, task: &EvaluationTask) -> Result<SubmitResult> {
        let key = task_key(task);
        let item = self
            .home
            .approved_item(task)?
            .ok_or_else(|| AgentError::NoApproval(key.clone()))?;
        let approval = self
            .home
            .latest_approval(ApprovalKind::ModelExecution, &subject_ids(task))?
            .filter(|r| {
                r.decision == ApprovalDecision::Approve
                    && r.shown_digest == sheets::digest(&sheets::model_sheet(&item))
            })
            .ok_or_else(|| AgentError::NoApproval(key.clone()))?;
        let dataset = self.local_dataset(&task.dataset_uid)?;
        let benchmark = self.client.benchmark(&task.benchmark_id)?;

        let model = self
            .trusted_cube(&item.model_cube)?
            .ok_or_else(|| AgentError::NoApproval(key.clone()))?;
        let metrics = self.ensure_cube(&item.metrics_cube, Placement::Assets)?;
        let prep = self.ensure_cube(&item.prep_cube, Placement::Assets)?;
        let executed_hashes = ExecutedHashes {
            prep: prep.manifest_uid().clone(),
            model: model.manifest_uid().clone(),
            metrics_cube: metrics.manifest_uid().clone(),
        };

        let infer = self
            .run(&model, "infer", &[("data", &dataset.prepared_path)])
            .map_err(|e| run_failure("infer", e))?;
        if infer.status != TaskStatus::Ok {
            return Err(AgentError::TaskFailed {
                stage: "infer".into(),
                exit_code: infer.exit_code,
            });
        }
        let predictions = infer.output("predictions");
        let eval = self
            .run(
                &metrics,
                "evaluate",
                &[
                    ("predictions", &predictions),
                    ("labels", &dataset.prepared_path),
                ],
            )
            .map_err(|e| run_failure("evaluate", e))?;
        if eval.status != TaskStatus::Ok {
            return Err(AgentError::TaskFailed {
                stage: "evaluate".into(),
                exit_code: eval.exit_code,
            });
        }
        let report = numeric_entries(&fs::read_to_string(eval.output("results"))?)?;
        let metrics_out: BTreeMap<String, f64> = report
            .iter()
            .filter(|(k, _)| benchmark.metric_spec(k).is_some())
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let sample_count = report
            .get("n")
            .copied()
            .or_else(|| dataset.statistics_report.get("n").copied())
            .unwrap_or(0.0) as u64;

        let draft = SubmitResult {
            benchmark_id: task.benchmark_id.clone(),
            dataset_uid: task.dataset_uid.clone(),
            model_cube_id: task.model_cube_id.clone(),
            metrics: metrics_out,
            sample_count,
            executed_hashes,
            model_approved_at: Some(approval.timestamp),
            result_approved_at: None,
        };
        let execution = Execution {
            task: key,
            executed_hashes: &draft.executed_hashes,
            outputs: [
                ("infer".to_string(), infer.output_digests.clone()),
                ("evaluate".to_string(), eval.output_digests.clone()),
            ]
            .into(),
        };
        self.home.append(AuditEventDraft {
            timestamp: Timestamp::now(),
            actor: "agent".into(),
            action: AuditAction::TaskExecuted,
            subject_ids: subject_ids(task),
            payload: serde_json::to_string(&execution).expect("serializable"),
        })?;
        self.home.save_draft(task, &draft)?;
        for o in [&infer, &eval] {
            let _ = fs::remove_dir_all(o.outputs_dir.parent().unwrap_or(&o.outputs_dir));
        }
        Ok(draft)
    }

    /// Shows the draft's metrics payload and uploads it on approval. The
    /// draft is kept when the upload is withheld or refused.
    pub fn submit(&self, task: &EvaluationTask, approver: &mut dyn Approver) -> Result<String> {
        let mut draft = self
            .home
            .draft(task)?
            .ok_or_else(|| AgentError::Invalid(format!("no draft for task {}", task_key(task))))?;
        let sheet = sheets::result_sheet(&draft);
        let record = self.decide(
            approver,
            ApprovalKind::ResultUpload,
            subject_ids(task),
            &sheet,
        )?;
        if record.decision == ApprovalDecision::Reject {
            return Err(AgentError::NotApproved);
        }
        draft.result_approved_at = Some(record.timestamp);
        let id = self.client.submit_result(&draft)?;
        self.home.remove_draft(task)?;
        Ok(id)
    }

    /// The local chain, checked.
    pub fn audit_log(&self) -> Result<Vec<AuditEvent>> {
        self.home.verified_log()
    }

    /// Registers a model cube directory and asks to join `benchmark`.
    pub fn submit_model(
        &self,
        cube_dir: &Path,
        benchmark: &BenchmarkId,
        download_url: Option<&str>,
    ) -> Result<(CubeId, AssociationId)> {
        let req = cube_registration(cube_dir, CubeKind::Model, download_url)?;
        let id = self.client.register_cube(&req)?;
        let assoc = self.client.request_association(&RequestAssociation {
            benchmark_id: benchmark.clone(),
            subject_kind: SubjectKind::Model,
            subject: id.to_string(),
        })?;
        Ok((id, assoc))
    }

    /// Registers the bundle's three cubes, then the benchmark (in DRAFT).
    /// Cube download URLs point at the bundle directory unless `url_base`
    /// is given, in which case `<url_base>/<prep|metrics|reference_model>`.
    pub fn create_benchmark(&self, bundle: &Path, url_base: Option<&str>) -> Result<BenchmarkId> {
        let parts = [
            ("prep", CubeKind::Preparation),
            ("metrics", CubeKind::Metrics),
            ("reference_model", CubeKind::Model),
        ];
        for (dir, _) in parts {
            if !bundle.join(dir).join(MANIFEST_FILE).is_file() {
                return Err(AgentError::InvalidBundle(format!("missing {dir} cube")));
            }
        }
        let text = fs::read_to_string(bundle.join("benchmark.yaml"))
            .map_err(|_| AgentError::InvalidBundle("missing benchmark.yaml".into()))?;
        let mut spec = parse_benchmark_yaml(&text)?;
        if spec.metric_specs.is_empty() {
            return Err(AgentError::InvalidBundle("no metric specs".into()));
        }
        let mut ids = Vec::new();
        for (dir, kind) in parts {
            let url = url_base.map(|b| format!("{}/{dir}", b.trim_end_matches('/')));
            let req = cube_registration(&bundle.join(dir), kind, url.as_deref())?;
            ids.push(self.client.register_cube(&req)?);
        }
        spec.preparation_cube = ids[0].clone();
        spec.metrics_cube = ids[1].clone();
        spec.reference_model_cube = ids[2].clone();
        self.client.register_benchmark(&spec)
    }
}

/// Pins a local cube directory into a registration body. Extra files are
/// the cube-relative entrypoint elements.
pub fn cube_registration(
    dir: &Path,
    kind: CubeKind,
    download_url: Option<&str>,
) -> Result<RegisterCube> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| AgentError::Parse(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))?;
    let manifest =
        parse_manifest(&text).map_err(|e| AgentError::Parse(format!("{MANIFEST_FILE}: {e}")))?;
    let extras: Vec<&str> = manifest
        .entrypoint
        .iter()
        .filter_map(|e| e.strip_prefix("./"))
        .collect();
    let pins = pin_cube_dir(dir, &extras).map_err(|e| match e {
        VerifyError::Io(e) => AgentError::Io(e),
        other => AgentError::Parse(other.to_string()),
    })?;
    let download_url = match download_url {
        Some(u) => u.to_owned(),
        None => format!("file://{}", dir.canonicalize()?.display()),
    };
    Ok(RegisterCube {
        name: manifest.name,
        kind,
        manifest_uid: Some(pins.manifest_uid),
        image_ref: manifest.image_ref,
        image_uid: Some(pins.image_uid),
        parameters_uid: pins.parameters_uid,
        extra_files: pins.extra_files,
        download_url,
    })
}

fn scalar<'a>(doc: &'a Yaml, key: &str) -> Result<&'a str> {
    doc.get(key)
        .and_then(Yaml::as_str)
        .ok_or_else(|| AgentError::InvalidBundle(format!("benchmark.yaml: missing {key}")))
}

fn enum_value<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| AgentError::InvalidBundle(format!("benchmark.yaml: bad {what} {s:?}")))
}

fn number(doc: &Yaml, key: &str) -> Result<f64> {
    scalar(doc, key)?
        .parse()
        .map_err(|_| AgentError::InvalidBundle(format!("benchmark.yaml: {key} is not a number")))
}

fn boolean(doc: &Yaml, key: &str) -> Result<bool> {
    match scalar(doc, key)? {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(AgentError::InvalidBundle(format!(
            "benchmark.yaml: {key} is {other:?}"
        ))),
    }
}

/// Reads `benchmark.yaml`. Cube ids are left empty for the caller to fill.
pub fn parse_benchmark_yaml(text: &str) -> Result<RegisterBenchmark> {
    let doc =
        yaml::parse(text).map_err(|e| AgentError::InvalidBundle(format!("benchmark.yaml: {e}")))?;
    let mut metric_specs = Vec::new();
    if let Some(specs) = doc.get("metric_specs") {
        let map = specs.as_map().ok_or_else(|| {
            AgentError::InvalidBundle("benchmark.yaml: metric_specs must be a mapping".into())
        })?;
        for (name, m) in map {
            metric_specs.push(MetricSpec {
                name: name.clone(),
                range: MetricRange {
                    min: number(m, "min")?,
                    max: number(m, "max")?,
                },
                higher_is_better: boolean(m, "higher_is_better")?,
                decomposable: boolean(m, "decomposable")?,
                aggregation: match m.get("aggregation").and_then(Yaml::as_str) {
                    Some(a) => enum_value(a, "aggregation")?,
                    None => Default::default(),
                },
            });
        }
    }
    let release_policy = match doc.get("release_policy") {
        Some(p) => fedeval_core::ReleasePolicy {
            mode: enum_value(scalar(p, "mode")?, "release mode")?,
            show_per_site: boolean(p, "show_per_site")?,
        },
        None => Default::default(),
    };
    let allowlist = match doc.get("allowlist") {
        Some(Yaml::List(l)) => l.iter().map(|s| s.as_str().into()).collect(),
        Some(Yaml::Scalar(s)) if s == "[]" => Default::default(),
        None => Default::default(),
        Some(_) => {
            return Err(AgentError::InvalidBundle(
                "benchmark.yaml: allowlist must be a list".into(),
            ))
        }
    };
    Ok(RegisterBenchmark {
        name: scalar(&doc, "name")?.to_owned(),
        description: doc
            .get("description")
            .and_then(Yaml::as_str)
            .unwrap_or_default()
            .to_owned(),
        docs_url: scalar(&doc, "docs_url")?.to_owned(),
        preparation_cube: CubeId::new(""),
        metrics_cube: CubeId::new(""),
        reference_model_cube: CubeId::new(""),
        metric_specs,
        visibility: enum_value(scalar(&doc, "visibility")?, "visibility")?,
        allowlist,
        release_policy,
    })
}
