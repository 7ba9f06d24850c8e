//! The platform operations, independent of HTTP.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, RwLock};

use rand::RngCore;

use fedeval_core::api::*;
use fedeval_core::uid::check_relative_path;
use fedeval_core::{
    aggregate_results, apply_release_policy, file_uid, pending_tasks, transition_association,
    transition_benchmark, validate_benchmark_bundle, validate_result, Account, AccountId,
    Association, AssociationAction, AssociationId, AssociationState, Benchmark, BenchmarkAction,
    BenchmarkId, BenchmarkState, ContentUid, CubeId, CubeKind, CubeRecord, DatasetRecord,
    EvaluationResult, ModelAggregate, ReleasePolicy, ResultDefect, ResultId, ResultsReport, Role,
    SiteRow, SubjectKind, Timestamp, TransitionError, Viewer,
};
use fedeval_core::{AuditEvent, Registry};

use crate::error::ApiError;
use crate::state::{next_id, Mutation, ReplayError, StoredState};
use crate::storage::{MemoryStorage, Storage, StorageError};

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: i64) -> Self {
        ManualClock(AtomicI64::new(start))
    }

    pub fn advance(&self, secs: i64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp::from_unix(self.0.load(Ordering::SeqCst))
    }
}

pub const SYSTEM_ACTOR: &str = "system";

pub fn token_hash(token: &str) -> ContentUid {
    file_uid(token.as_bytes())
}

fn storage_error(e: StorageError) -> ApiError {
    ApiError::new("STORAGE_ERROR", e.to_string())
}

fn transition_error(e: TransitionError) -> ApiError {
    match e {
        TransitionError::Forbidden(_) => ApiError::forbidden(e.to_string()),
        TransitionError::IllegalTransition { .. } => {
            ApiError::new("ILLEGAL_TRANSITION", e.to_string())
        }
    }
}

fn require(caller: Option<&Account>) -> Result<&Account, ApiError> {
    caller.ok_or_else(ApiError::unauthenticated)
}

fn require_role<'a>(caller: Option<&'a Account>, roles: &[Role]) -> Result<&'a Account, ApiError> {
    let acct = require(caller)?;
    if roles.iter().any(|r| acct.has(*r)) {
        Ok(acct)
    } else {
        Err(ApiError::forbidden(format!("requires one of {roles:?}")))
    }
}

fn benchmark<'a>(reg: &'a Registry, id: &BenchmarkId) -> Result<&'a Benchmark, ApiError> {
    reg.benchmarks
        .get(id)
        .ok_or_else(|| ApiError::new("UNKNOWN_BENCHMARK", format!("no benchmark {id}")))
}

fn cube<'a>(reg: &'a Registry, id: &CubeId) -> Result<&'a CubeRecord, ApiError> {
    reg.cubes
        .get(id)
        .ok_or_else(|| ApiError::new("UNKNOWN_CUBE", format!("no cube {id}")))
}

fn dataset<'a>(reg: &'a Registry, uid: &ContentUid) -> Result<&'a DatasetRecord, ApiError> {
    reg.datasets
        .get(uid)
        .ok_or_else(|| ApiError::new("UNKNOWN_DATASET", format!("no dataset {uid}")))
}

fn fresh_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// Per-model aggregates and per-site rows before release filtering.
pub fn build_report(reg: &Registry, b: &Benchmark) -> ResultsReport {
    let mut by_model: BTreeMap<&CubeId, Vec<&EvaluationResult>> = BTreeMap::new();
    for r in reg.results_for_benchmark(&b.id) {
        by_model.entry(&r.model_cube_id).or_default().push(r);
    }
    let owner_of = |id: &CubeId| {
        reg.cubes
            .get(id)
            .map(|c| c.owner_id.clone())
            .unwrap_or_else(|| AccountId::new(""))
    };
    let mut aggregates = Vec::new();
    let mut per_site = Vec::new();
    for (model, results) in &by_model {
        let mut metrics = BTreeMap::new();
        for spec in &b.metric_specs {
            let with: Vec<&EvaluationResult> = results
                .iter()
                .copied()
                .filter(|r| r.metrics.contains_key(&spec.name))
                .collect();
            if let Ok(v) = aggregate_results(with, spec, spec.aggregation) {
                metrics.insert(spec.name.clone(), v);
            }
        }
        aggregates.push(ModelAggregate {
            model_cube_id: (*model).clone(),
            model_owner_id: owner_of(model),
            metrics,
        });
        for r in results {
            per_site.push(SiteRow {
                result_id: r.id.clone(),
                dataset_uid: r.dataset_uid.clone(),
                dataset_owner_id: reg
                    .datasets
                    .get(&r.dataset_uid)
                    .map(|d| d.owner_id.clone())
                    .unwrap_or_else(|| AccountId::new("")),
                model_cube_id: r.model_cube_id.clone(),
                model_owner_id: owner_of(model),
                metrics: r.metrics.clone(),
                sample_count: r.sample_count,
            });
        }
    }
    ResultsReport {
        benchmark_id: b.id.clone(),
        committee_id: b.committee_id.clone(),
        release_policy: b.release_policy,
        aggregates,
        per_site,
    }
}

pub struct Service {
    storage: Box<dyn Storage>,
    state: RwLock<StoredState>,
    clock: Arc<dyn Clock>,
}

impl Service {
    /// Loads and replays the stored chain.
    pub fn open(storage: Box<dyn Storage>, clock: Arc<dyn Clock>) -> Result<Self, ReplayError> {
        let events = storage.load().map_err(|e| ReplayError::BadPayload {
            seq: 0,
            message: e.to_string(),
        })?;
        let state = StoredState::replay(&events)?;
        Ok(Service {
            storage,
            state: RwLock::new(state),
            clock,
        })
    }

    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self::open(Box::new(MemoryStorage::new()), clock).expect("empty store replays")
    }

    pub fn snapshot(&self) -> StoredState {
        self.state.read().unwrap().clone()
    }

    pub fn stored_events(&self) -> Result<Vec<AuditEvent>, ApiError> {
        self.storage.load().map_err(storage_error)
    }

    /// `Ok(None)` for anonymous callers; an unknown token is an error.
    pub fn authenticate(&self, token: Option<&str>) -> Result<Option<Account>, ApiError> {
        match token {
            None => Ok(None),
            Some(t) => self
                .state
                .read()
                .unwrap()
                .account_by_token_hash(&token_hash(t))
                .cloned()
                .map(Some)
                .ok_or_else(ApiError::unauthenticated),
        }
    }

    /// Plans a mutation against a snapshot and commits it if no other
    /// mutation landed in between; otherwise plans again.
    fn commit<R>(
        &self,
        actor: &str,
        plan: impl Fn(&StoredState, Timestamp) -> Result<(Mutation, R), ApiError>,
    ) -> Result<R, ApiError> {
        loop {
            let now = self.clock.now();
            let (version, mutation, out) = {
                let s = self.state.read().unwrap();
                let (m, out) = plan(&s, now)?;
                (s.version, m, out)
            };
            let mut s = self.state.write().unwrap();
            if s.version != version {
                continue;
            }
            let event = s.event_for(&mutation, actor, now);
            self.storage.append(&event).map_err(storage_error)?;
            s.apply(event)
                .map_err(|e| ApiError::new("STORAGE_ERROR", e.to_string()))?;
            return Ok(out);
        }
    }

    fn read<R>(&self, f: impl FnOnce(&StoredState) -> R) -> R {
        f(&self.state.read().unwrap())
    }

    /// Creates the operator account for `token` unless one already exists.
    pub fn bootstrap_operator(&self, token: &str) -> Result<Option<AccountId>, ApiError> {
        let hash = token_hash(token);
        if self.read(|s| s.account_by_token_hash(&hash).is_some()) {
            return Ok(None);
        }
        self.commit(SYSTEM_ACTOR, |s, _| {
            let account = Account {
                id: AccountId::new(next_id("acct", s.accounts.len())),
                display_name: "platform operator".into(),
                roles: [Role::PlatformOperator].into_iter().collect(),
                token_hash: hash.clone(),
            };
            let id = account.id.clone();
            Ok((Mutation::ProvisionAccount { account }, Some(id)))
        })
    }

    pub fn create_account(
        &self,
        caller: Option<&Account>,
        req: CreateAccount,
    ) -> Result<CreatedAccount, ApiError> {
        let op = require_role(caller, &[Role::PlatformOperator])?;
        if req.roles.is_empty() {
            return Err(ApiError::new(
                "INVALID_REQUEST",
                "an account needs at least one role",
            ));
        }
        let token = req.token.clone().unwrap_or_else(fresh_token);
        if token.len() < 16 {
            return Err(ApiError::new(
                "INVALID_REQUEST",
                "tokens need at least 16 characters",
            ));
        }
        let hash = token_hash(&token);
        self.commit(op.id.as_str(), |s, _| {
            if s.account_by_token_hash(&hash).is_some() {
                return Err(ApiError::new("DUPLICATE_TOKEN", "token already in use"));
            }
            let account = Account {
                id: AccountId::new(next_id("acct", s.accounts.len())),
                display_name: req.display_name.clone(),
                roles: req.roles.clone(),
                token_hash: hash.clone(),
            };
            let out = CreatedAccount {
                id: account.id.clone(),
                token: token.clone(),
            };
            Ok((Mutation::ProvisionAccount { account }, out))
        })
    }

    pub fn register_benchmark(
        &self,
        caller: Option<&Account>,
        req: RegisterBenchmark,
    ) -> Result<Created, ApiError> {
        let acct = require_role(caller, &[Role::Committee])?;
        self.commit(acct.id.as_str(), |s, _| {
            let b = Benchmark {
                id: BenchmarkId::new(next_id("bmk", s.registry.benchmarks.len())),
                name: req.name.clone(),
                description: req.description.clone(),
                docs_url: req.docs_url.clone(),
                preparation_cube: req.preparation_cube.clone(),
                metrics_cube: req.metrics_cube.clone(),
                reference_model_cube: req.reference_model_cube.clone(),
                metric_specs: req.metric_specs.clone(),
                visibility: req.visibility,
                allowlist: req.allowlist.clone(),
                release_policy: req.release_policy,
                state: BenchmarkState::Draft,
                committee_id: acct.id.clone(),
            };
            if let Err(defects) = validate_benchmark_bundle(&b, &s.registry) {
                let details: Vec<String> = defects.iter().map(|d| d.to_string()).collect();
                return Err(
                    ApiError::new("INVALID_BUNDLE", details.join(", ")).with_details(details)
                );
            }
            let id = b.id.to_string();
            Ok((Mutation::RegisterBenchmark { benchmark: b }, Created { id }))
        })
    }

    fn move_benchmark(
        &self,
        caller: Option<&Account>,
        id: &BenchmarkId,
        action: BenchmarkAction,
    ) -> Result<(), ApiError> {
        let acct = require(caller)?;
        self.commit(acct.id.as_str(), |s, _| {
            let b = benchmark(&s.registry, id)?;
            let next =
                transition_benchmark(b, action, &acct.id, &acct.roles).map_err(transition_error)?;
            Ok((
                Mutation::SetBenchmarkState {
                    id: id.clone(),
                    state: next.state,
                },
                (),
            ))
        })
    }

    pub fn activate_benchmark(
        &self,
        caller: Option<&Account>,
        id: &BenchmarkId,
    ) -> Result<(), ApiError> {
        self.move_benchmark(caller, id, BenchmarkAction::Activate)
    }

    pub fn retire_benchmark(
        &self,
        caller: Option<&Account>,
        id: &BenchmarkId,
    ) -> Result<(), ApiError> {
        self.move_benchmark(caller, id, BenchmarkAction::Retire)
    }

    pub fn set_release_policy(
        &self,
        caller: Option<&Account>,
        id: &BenchmarkId,
        policy: ReleasePolicy,
    ) -> Result<(), ApiError> {
        let acct = require(caller)?;
        self.commit(acct.id.as_str(), |s, _| {
            let b = benchmark(&s.registry, id)?;
            if !(acct.has(Role::Committee) && b.committee_id == acct.id) {
                return Err(ApiError::forbidden(
                    "only the benchmark committee controls release",
                ));
            }
            Ok((
                Mutation::ReleaseResults {
                    id: id.clone(),
                    release_policy: policy,
                },
                (),
            ))
        })
    }

    pub fn get_benchmark(
        &self,
        caller: Option<&Account>,
        id: &BenchmarkId,
    ) -> Result<Benchmark, ApiError> {
        require(caller)?;
        self.read(|s| benchmark(&s.registry, id).cloned())
    }

    pub fn get_cube(&self, caller: Option<&Account>, id: &CubeId) -> Result<CubeRecord, ApiError> {
        require(caller)?;
        self.read(|s| cube(&s.registry, id).cloned())
    }

    pub fn register_cube(
        &self,
        caller: Option<&Account>,
        req: RegisterCube,
    ) -> Result<Created, ApiError> {
        let allowed: &[Role] = match req.kind {
            CubeKind::Model => &[Role::ModelOwner, Role::Committee],
            CubeKind::Preparation | CubeKind::Metrics => &[Role::Committee],
        };
        let acct = require_role(caller, allowed)?;
        let (Some(manifest_uid), Some(image_uid)) =
            (req.manifest_uid.clone(), req.image_uid.clone())
        else {
            return Err(ApiError::new(
                "MISSING_HASH",
                "manifest_uid and image_uid are required",
            ));
        };
        if req.name.is_empty() || req.image_ref.is_empty() {
            return Err(ApiError::new(
                "INVALID_REQUEST",
                "name and image_ref are required",
            ));
        }
        let mut seen = BTreeSet::new();
        for (path, _) in &req.extra_files {
            if check_relative_path(path).is_err() || !seen.insert(path.as_str()) {
                return Err(ApiError::new(
                    "ILLEGAL_PATH",
                    format!("extra file path {path:?}"),
                ));
            }
        }
        self.commit(acct.id.as_str(), |s, now| {
            let record = CubeRecord {
                id: CubeId::new(next_id("cube", s.registry.cubes.len())),
                name: req.name.clone(),
                kind: req.kind,
                manifest_uid: manifest_uid.clone(),
                image_ref: req.image_ref.clone(),
                image_uid: image_uid.clone(),
                parameters_uid: req.parameters_uid.clone(),
                extra_files: req.extra_files.clone(),
                download_url: req.download_url.clone(),
                owner_id: acct.id.clone(),
                registered_at: now,
            };
            let id = record.id.to_string();
            Ok((Mutation::RegisterCube { cube: record }, Created { id }))
        })
    }

    pub fn register_dataset(
        &self,
        caller: Option<&Account>,
        req: RegisterDataset,
    ) -> Result<Created, ApiError> {
        let acct = require_role(caller, &[Role::DataOwner])?;
        if req.statistics.len() > MAX_STATISTICS {
            return Err(ApiError::new(
                "PAYLOAD_TOO_LARGE",
                format!(
                    "{} statistics entries; the limit is {MAX_STATISTICS}",
                    req.statistics.len()
                ),
            ));
        }
        if req.sample_count == 0 || req.statistics.values().any(|v| !v.is_finite()) {
            return Err(ApiError::new(
                "INVALID_DATASET",
                "sample_count must be >= 1 and statistics finite",
            ));
        }
        self.commit(acct.id.as_str(), |s, now| {
            if s.registry.datasets.contains_key(&req.generated_uid) {
                return Err(ApiError::new(
                    "DUPLICATE_UID",
                    format!("dataset {} exists", req.generated_uid),
                ));
            }
            let prep = cube(&s.registry, &req.benchmark_prep_cube)?;
            if prep.kind != CubeKind::Preparation {
                return Err(ApiError::new(
                    "INVALID_DATASET",
                    "benchmark_prep_cube is not a preparation cube",
                ));
            }
            let record = DatasetRecord {
                generated_uid: req.generated_uid.clone(),
                name: req.name.clone(),
                owner_id: acct.id.clone(),
                benchmark_prep_cube: req.benchmark_prep_cube.clone(),
                sample_count: req.sample_count,
                statistics: req.statistics.clone(),
                registered_at: now,
            };
            Ok((
                Mutation::RegisterDataset { dataset: record },
                Created {
                    id: req.generated_uid.to_string(),
                },
            ))
        })
    }

    pub fn request_association(
        &self,
        caller: Option<&Account>,
        req: RequestAssociation,
    ) -> Result<Created, ApiError> {
        let acct = require(caller)?;
        self.commit(acct.id.as_str(), |s, now| {
            let reg = &s.registry;
            let b = benchmark(reg, &req.benchmark_id)?;
            let owns = match req.subject_kind {
                SubjectKind::Dataset => {
                    let uid: ContentUid = req.subject.parse().map_err(|_| {
                        ApiError::new("UNKNOWN_DATASET", "subject is not a dataset uid")
                    })?;
                    acct.has(Role::DataOwner) && dataset(reg, &uid)?.owner_id == acct.id
                }
                SubjectKind::Model => {
                    let c = cube(reg, &CubeId::new(req.subject.clone()))?;
                    if c.kind != CubeKind::Model {
                        return Err(ApiError::new(
                            "INVALID_REQUEST",
                            "subject is not a model cube",
                        ));
                    }
                    (acct.has(Role::ModelOwner) || acct.has(Role::Committee))
                        && c.owner_id == acct.id
                }
            };
            if !owns {
                return Err(ApiError::forbidden("caller does not own the subject"));
            }
            if b.state != BenchmarkState::Operational {
                return Err(ApiError::new(
                    "BENCHMARK_NOT_OPERATIONAL",
                    format!("{} is {:?}", b.id, b.state),
                ));
            }
            if !b.admits(&acct.id) {
                return Err(ApiError::new(
                    "NOT_ALLOWLISTED",
                    format!("{} is closed", b.id),
                ));
            }
            if reg
                .live_association(&b.id, req.subject_kind, &req.subject)
                .is_some()
            {
                return Err(ApiError::new(
                    "DUPLICATE_ASSOCIATION",
                    "a live association exists",
                ));
            }
            let a = Association {
                id: AssociationId::new(next_id("asc", reg.associations.len())),
                benchmark_id: b.id.clone(),
                subject: req.subject.clone(),
                subject_kind: req.subject_kind,
                state: AssociationState::Requested,
                requested_by: acct.id.clone(),
                requested_at: now,
                decided_by: None,
                decided_at: None,
            };
            let id = a.id.to_string();
            Ok((Mutation::PutAssociation { association: a }, Created { id }))
        })
    }

    pub fn decide_association(
        &self,
        caller: Option<&Account>,
        id: &AssociationId,
        action: AssociationAction,
    ) -> Result<Association, ApiError> {
        let acct = require(caller)?;
        self.commit(acct.id.as_str(), |s, now| {
            let a = s.registry.associations.get(id).ok_or_else(|| {
                ApiError::new("UNKNOWN_ASSOCIATION", format!("no association {id}"))
            })?;
            let b = benchmark(&s.registry, &a.benchmark_id)?;
            let next = transition_association(a, action, &acct.id, &acct.roles, b, now)
                .map_err(transition_error)?;
            Ok((
                Mutation::PutAssociation {
                    association: next.clone(),
                },
                next,
            ))
        })
    }

    /// REQUESTED associations awaiting the caller's decision.
    pub fn association_queue(
        &self,
        caller: Option<&Account>,
    ) -> Result<Vec<Association>, ApiError> {
        let acct = require(caller)?;
        Ok(self.read(|s| {
            s.registry
                .associations
                .values()
                .filter(|a| a.state == AssociationState::Requested)
                .filter(|a| {
                    acct.has(Role::Committee)
                        && s.registry
                            .benchmarks
                            .get(&a.benchmark_id)
                            .is_some_and(|b| b.committee_id == acct.id)
                })
                .cloned()
                .collect()
        }))
    }

    pub fn fetch_pending(
        &self,
        caller: Option<&Account>,
        uid: &ContentUid,
    ) -> Result<PendingList, ApiError> {
        let acct = require(caller)?;
        self.read(|s| {
            let reg = &s.registry;
            let d = dataset(reg, uid)?;
            if d.owner_id != acct.id || !acct.has(Role::DataOwner) {
                return Err(ApiError::forbidden("not the dataset owner"));
            }
            let tasks =
                pending_tasks(reg, uid).map_err(|e| ApiError::new(e.code(), e.to_string()))?;
            let mut items = Vec::new();
            for t in tasks {
                let b = benchmark(reg, &t.benchmark_id)?;
                items.push(PendingItem {
                    prep_cube: cube(reg, &b.preparation_cube)?.clone(),
                    model_cube: cube(reg, &t.model_cube_id)?.clone(),
                    metrics_cube: cube(reg, &b.metrics_cube)?.clone(),
                    benchmark_id: t.benchmark_id,
                    dataset_uid: t.dataset_uid,
                    model_cube_id: t.model_cube_id,
                });
            }
            Ok(PendingList { tasks: items })
        })
    }

    pub fn submit_result(
        &self,
        caller: Option<&Account>,
        req: SubmitResult,
    ) -> Result<Created, ApiError> {
        let acct = require(caller)?;
        self.commit(acct.id.as_str(), |s, now| {
            let reg = &s.registry;
            let d = dataset(reg, &req.dataset_uid)?;
            if d.owner_id != acct.id || !acct.has(Role::DataOwner) {
                return Err(ApiError::forbidden("not the dataset owner"));
            }
            let b = benchmark(reg, &req.benchmark_id)?;
            if reg
                .result_for(&b.id, &req.dataset_uid, &req.model_cube_id)
                .is_some()
            {
                return Err(ApiError::new(
                    "DUPLICATE_RESULT",
                    "a result exists for this triple",
                ));
            }
            let mut defects = Vec::new();
            if req.model_approved_at.is_none() {
                defects.push(
                    ResultDefect::MissingApproval {
                        field: "model_approved_at".into(),
                    }
                    .to_string(),
                );
            }
            if req.result_approved_at.is_none() {
                defects.push(
                    ResultDefect::MissingApproval {
                        field: "result_approved_at".into(),
                    }
                    .to_string(),
                );
            }
            let admitted = b.state == BenchmarkState::Operational
                && reg.is_approved(&b.id, SubjectKind::Dataset, req.dataset_uid.as_str())
                && reg.is_approved(&b.id, SubjectKind::Model, req.model_cube_id.as_str());
            if !admitted {
                defects.push("NOT_ADMITTED".to_string());
            }
            let result = EvaluationResult {
                id: ResultId::new(next_id("res", reg.results.len())),
                benchmark_id: req.benchmark_id.clone(),
                dataset_uid: req.dataset_uid.clone(),
                model_cube_id: req.model_cube_id.clone(),
                metrics: req.metrics.clone(),
                sample_count: req.sample_count,
                executed_hashes: req.executed_hashes.clone(),
                operator_id: acct.id.clone(),
                model_approved_at: req.model_approved_at.unwrap_or(now),
                result_approved_at: req.result_approved_at.unwrap_or(now),
                uploaded_at: now,
            };
            if let Err(found) = validate_result(&result, b, reg) {
                defects.extend(found.iter().map(|d| d.to_string()));
            }
            if !defects.is_empty() {
                return Err(
                    ApiError::new("INVALID_RESULT", defects.join(", ")).with_details(defects)
                );
            }
            let id = result.id.to_string();
            Ok((Mutation::SubmitResult { result }, Created { id }))
        })
    }

    pub fn get_results(
        &self,
        caller: Option<&Account>,
        id: &BenchmarkId,
    ) -> Result<ResultsReport, ApiError> {
        self.read(|s| {
            let b = benchmark(&s.registry, id)?;
            let viewer = match caller {
                Some(a) => Viewer::new(a.id.clone(), a.roles.clone()),
                None => Viewer::anonymous(),
            };
            Ok(apply_release_policy(
                &build_report(&s.registry, b),
                b.release_policy,
                &viewer,
            ))
        })
    }

    pub fn audit(&self, caller: Option<&Account>, from_seq: u64) -> Result<AuditPage, ApiError> {
        require_role(caller, &[Role::PlatformOperator, Role::Committee])?;
        Ok(self.read(|s| AuditPage {
            events: s.audit.iter().skip(from_seq as usize).cloned().collect(),
        }))
    }
}
