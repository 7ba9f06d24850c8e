//! Fixtures for tests and demos: a populated registry and a random
//! workflow driver.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use fedeval_core::api::*;
use fedeval_core::{
    file_uid, Account, AssociationAction, AssociationId, BenchmarkId, ContentUid, CubeId, CubeKind,
    ExecutedHashes, MetricRange, MetricSpec, ReleaseMode, ReleasePolicy, Role, RoleSet,
    SubjectKind, Visibility,
};

use crate::error::ApiError;
use crate::service::{Clock, ManualClock, Service};

pub const START: i64 = 1_790_000_000;
pub const OPERATOR_TOKEN: &str = "operator-token-0000000000";

pub fn uid(tag: &str) -> ContentUid {
    file_uid(tag.as_bytes())
}

pub fn roles(rs: &[Role]) -> RoleSet {
    rs.iter().copied().collect()
}

pub fn cube_request(name: &str, kind: CubeKind) -> RegisterCube {
    RegisterCube {
        name: name.into(),
        kind,
        manifest_uid: Some(uid(&format!("{name}/manifest"))),
        image_ref: format!("example.org/{name}:1"),
        image_uid: Some(uid(&format!("{name}/image"))),
        parameters_uid: None,
        extra_files: Vec::new(),
        download_url: String::new(),
    }
}

pub fn accuracy_spec() -> MetricSpec {
    MetricSpec {
        name: "accuracy".into(),
        range: MetricRange { min: 0.0, max: 1.0 },
        higher_is_better: true,
        decomposable: true,
        aggregation: Default::default(),
    }
}

pub fn benchmark_request(prep: &CubeId, metrics: &CubeId, reference: &CubeId) -> RegisterBenchmark {
    RegisterBenchmark {
        name: "toy".into(),
        description: String::new(),
        docs_url: "https://example.org/docs".into(),
        preparation_cube: prep.clone(),
        metrics_cube: metrics.clone(),
        reference_model_cube: reference.clone(),
        metric_specs: vec![accuracy_spec()],
        visibility: Visibility::Open,
        allowlist: Default::default(),
        release_policy: ReleasePolicy {
            mode: ReleaseMode::Public,
            show_per_site: true,
        },
    }
}

pub fn dataset_request(tag: &str, prep: &CubeId) -> RegisterDataset {
    RegisterDataset {
        generated_uid: uid(tag),
        name: tag.into(),
        benchmark_prep_cube: prep.clone(),
        sample_count: 100,
        statistics: [("n".to_string(), 100.0)].into_iter().collect(),
    }
}

/// A registry with one operational benchmark and the accounts around it.
///
/// Accounts: `op`, `c1` (committee of `bench`), `c2` (another committee),
/// `d1` and `d2` (data owners), `m1` (model owner).
pub struct World {
    pub svc: Arc<Service>,
    pub clock: Arc<ManualClock>,
    pub tokens: BTreeMap<&'static str, String>,
    pub accounts: BTreeMap<&'static str, Account>,
    pub prep: CubeId,
    pub metrics: CubeId,
    pub reference: CubeId,
    /// Operational, committee `c1`.
    pub bench: BenchmarkId,
    /// Still in DRAFT.
    pub draft: BenchmarkId,
    /// Owned by `d1`, approved into `bench`.
    pub dataset: ContentUid,
    /// Owned by `d1`, association REQUESTED.
    pub requested_dataset: ContentUid,
    pub requested_association: AssociationId,
    /// Owned by `d1`, no association.
    pub fresh_dataset: ContentUid,
    /// Owned by `m1`, approved into `bench`.
    pub model: CubeId,
    /// Owned by `m1`, no association.
    pub fresh_model: CubeId,
}

impl World {
    pub fn token(&self, who: &str) -> &str {
        &self.tokens[who]
    }

    pub fn caller(&self, who: &str) -> Option<&Account> {
        self.accounts.get(who)
    }

    pub fn executed_hashes(&self, model: &CubeId) -> ExecutedHashes {
        let s = self.svc.snapshot();
        let c = &s.registry.cubes;
        ExecutedHashes {
            prep: c[&self.prep].manifest_uid.clone(),
            model: c[model].manifest_uid.clone(),
            metrics_cube: c[&self.metrics].manifest_uid.clone(),
        }
    }

    pub fn result_request(&self, accuracy: f64) -> SubmitResult {
        let now = START + 1;
        SubmitResult {
            benchmark_id: self.bench.clone(),
            dataset_uid: self.dataset.clone(),
            model_cube_id: self.model.clone(),
            metrics: [("accuracy".to_string(), accuracy)].into_iter().collect(),
            sample_count: 100,
            executed_hashes: self.executed_hashes(&self.model),
            model_approved_at: Some(fedeval_core::Timestamp::from_unix(now)),
            result_approved_at: Some(fedeval_core::Timestamp::from_unix(now)),
        }
    }

    pub fn new() -> Self {
        Self::build().expect("fixture builds")
    }

    fn build() -> Result<Self, ApiError> {
        let clock = Arc::new(ManualClock::new(START));
        let svc = Arc::new(Service::in_memory(clock.clone()));
        svc.bootstrap_operator(OPERATOR_TOKEN)?;
        let mut tokens = BTreeMap::new();
        let mut accounts = BTreeMap::new();
        tokens.insert("op", OPERATOR_TOKEN.to_string());
        accounts.insert("op", svc.authenticate(Some(OPERATOR_TOKEN))?.unwrap());
        let op = accounts["op"].clone();
        for (name, role) in [
            ("c1", Role::Committee),
            ("c2", Role::Committee),
            ("d1", Role::DataOwner),
            ("d2", Role::DataOwner),
            ("m1", Role::ModelOwner),
        ] {
            let token = format!("{name}-token-0000000000000");
            svc.create_account(
                Some(&op),
                CreateAccount {
                    display_name: name.into(),
                    roles: roles(&[role]),
                    token: Some(token.clone()),
                },
            )?;
            accounts.insert(name, svc.authenticate(Some(&token))?.unwrap());
            tokens.insert(name, token);
        }
        let (c1, d1, m1) = (
            accounts["c1"].clone(),
            accounts["d1"].clone(),
            accounts["m1"].clone(),
        );
        let cube = |who: &Account, name: &str, kind| -> Result<CubeId, ApiError> {
            Ok(CubeId::new(
                svc.register_cube(Some(who), cube_request(name, kind))?.id,
            ))
        };
        let prep = cube(&c1, "prep", CubeKind::Preparation)?;
        let metrics = cube(&c1, "metrics", CubeKind::Metrics)?;
        let reference = cube(&c1, "reference", CubeKind::Model)?;
        let model = cube(&m1, "model", CubeKind::Model)?;
        let fresh_model = cube(&m1, "fresh-model", CubeKind::Model)?;
        let bench = BenchmarkId::new(
            svc.register_benchmark(Some(&c1), benchmark_request(&prep, &metrics, &reference))?
                .id,
        );
        let draft = BenchmarkId::new(
            svc.register_benchmark(Some(&c1), benchmark_request(&prep, &metrics, &reference))?
                .id,
        );
        svc.activate_benchmark(Some(&op), &bench)?;

        let mut datasets = Vec::new();
        for tag in ["ds-approved", "ds-requested", "ds-fresh"] {
            svc.register_dataset(Some(&d1), dataset_request(tag, &prep))?;
            datasets.push(uid(tag));
        }
        let request = |who: &Account, kind, subject: String| -> Result<AssociationId, ApiError> {
            let id = svc
                .request_association(
                    Some(who),
                    RequestAssociation {
                        benchmark_id: bench.clone(),
                        subject_kind: kind,
                        subject,
                    },
                )?
                .id;
            Ok(AssociationId::new(id))
        };
        let a = request(&d1, SubjectKind::Dataset, datasets[0].to_string())?;
        svc.decide_association(Some(&c1), &a, AssociationAction::Approve)?;
        let a = request(&m1, SubjectKind::Model, model.to_string())?;
        svc.decide_association(Some(&c1), &a, AssociationAction::Approve)?;
        let requested_association = request(&d1, SubjectKind::Dataset, datasets[1].to_string())?;
        clock.advance(60);

        Ok(World {
            svc,
            clock,
            tokens,
            accounts,
            prep,
            metrics,
            reference,
            bench,
            draft,
            dataset: datasets[0].clone(),
            requested_dataset: datasets[1].clone(),
            requested_association,
            fresh_dataset: datasets[2].clone(),
            model,
            fresh_model,
        })
    }
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

/// Counts of what a random workflow attempted.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct WorkflowStats {
    pub committed: u64,
    pub rejected: u64,
    /// Rejections by error code.
    pub codes: BTreeMap<&'static str, u64>,
}

/// Issues `steps` random operations from random callers against `svc`,
/// most of them plausible and some deliberately wrong. `svc` must have an
/// operator account reachable with [`OPERATOR_TOKEN`].
pub fn random_workflow(
    svc: &Service,
    clock: &ManualClock,
    rng: &mut impl Rng,
    steps: usize,
) -> WorkflowStats {
    let mut stats = WorkflowStats::default();
    let op = svc.authenticate(Some(OPERATOR_TOKEN)).unwrap().unwrap();
    let mut callers: Vec<Account> = vec![op.clone()];
    for role in [
        Role::Committee,
        Role::DataOwner,
        Role::DataOwner,
        Role::ModelOwner,
    ] {
        let token = format!("seed-token-{:016x}", rng.gen::<u64>());
        let req = CreateAccount {
            display_name: format!("{role:?}"),
            roles: roles(&[role]),
            token: Some(token.clone()),
        };
        if svc.create_account(Some(&op), req).is_ok() {
            callers.push(svc.authenticate(Some(&token)).unwrap().unwrap());
            stats.committed += 1;
        }
    }
    if let Some(c) = callers.iter().find(|c| c.has(Role::Committee)).cloned() {
        let cube = |name: &str, kind| {
            svc.register_cube(Some(&c), cube_request(name, kind))
                .map(|r| CubeId::new(r.id))
        };
        let seeded = (|| -> Result<u64, ApiError> {
            let req = benchmark_request(
                &cube("seed-prep", CubeKind::Preparation)?,
                &cube("seed-metrics", CubeKind::Metrics)?,
                &cube("seed-reference", CubeKind::Model)?,
            );
            let id = BenchmarkId::new(svc.register_benchmark(Some(&c), req)?.id);
            svc.activate_benchmark(Some(&op), &id)?;
            Ok(5)
        })();
        stats.committed += seeded.expect("seed benchmark registers");
    }
    for step in 0..steps {
        clock.advance(rng.gen_range(1..120));
        let s = svc.snapshot();
        let reg = &s.registry;
        let who = callers.choose(rng).cloned();
        let caller = if rng.gen_bool(0.05) {
            None
        } else {
            who.as_ref()
        };
        let pick_cube = |rng: &mut _, kind: Option<CubeKind>| {
            let ids: Vec<&CubeId> = reg
                .cubes
                .values()
                .filter(|c| kind.is_none_or(|k| c.kind == k))
                .map(|c| &c.id)
                .collect();
            ids.choose(rng)
                .map(|c| (*c).clone())
                .unwrap_or_else(|| CubeId::new("cube-999999"))
        };
        // Mostly an account holding `role`, sometimes anyone.
        let likely = |rng: &mut _, role: Role| -> Option<&Account> {
            let fitting: Vec<&Account> = callers.iter().filter(|c| c.has(role)).collect();
            if rand::Rng::gen_bool(rng, 0.8) {
                fitting.choose(rng).copied().or(caller)
            } else {
                caller
            }
        };
        let owner_or_any = |rng: &mut _, owner: &fedeval_core::AccountId| -> Option<&Account> {
            if rand::Rng::gen_bool(rng, 0.8) {
                callers.iter().find(|c| c.id == *owner)
            } else {
                caller
            }
        };
        let benches: Vec<BenchmarkId> = reg.benchmarks.keys().cloned().collect();
        let operational: Vec<BenchmarkId> = reg
            .benchmarks
            .values()
            .filter(|b| b.state == fedeval_core::BenchmarkState::Operational)
            .map(|b| b.id.clone())
            .collect();
        let pool = if rng.gen_bool(0.8) && !operational.is_empty() {
            &operational
        } else {
            &benches
        };
        let bench = pool
            .choose(rng)
            .cloned()
            .unwrap_or_else(|| BenchmarkId::new("bmk-999999"));
        let datasets: Vec<ContentUid> = reg.datasets.keys().cloned().collect();

        let outcome: Result<(), ApiError> = match rng.gen_range(0..14) {
            0 => {
                let all = [
                    Role::Committee,
                    Role::DataOwner,
                    Role::ModelOwner,
                    Role::PlatformOperator,
                ];
                let mut rs = RoleSet::new();
                while rs.is_empty() {
                    for r in all {
                        if rng.gen_bool(0.3) {
                            rs.insert(r);
                        }
                    }
                }
                let token = format!("random-token-{step:08}-{:x}", rng.gen::<u32>());
                let op = callers[0].clone();
                let caller = if rng.gen_bool(0.8) { Some(&op) } else { caller };
                svc.create_account(
                    caller,
                    CreateAccount {
                        display_name: format!("user {step}"),
                        roles: rs,
                        token: Some(token.clone()),
                    },
                )
                .map(|_| callers.push(svc.authenticate(Some(&token)).unwrap().unwrap()))
            }
            1 => {
                let kind = *[CubeKind::Preparation, CubeKind::Model, CubeKind::Metrics]
                    .choose(rng)
                    .unwrap();
                let mut req = cube_request(&format!("cube-{step}"), kind);
                if rng.gen_bool(0.1) {
                    req.image_uid = None;
                }
                let role = if kind == CubeKind::Model && rng.gen_bool(0.5) {
                    Role::ModelOwner
                } else {
                    Role::Committee
                };
                svc.register_cube(likely(rng, role), req).map(drop)
            }
            2 => {
                let mut req = benchmark_request(
                    &pick_cube(rng, Some(CubeKind::Preparation)),
                    &pick_cube(rng, Some(CubeKind::Metrics)),
                    &pick_cube(rng, Some(CubeKind::Model)),
                );
                if rng.gen_bool(0.3) {
                    req.visibility = Visibility::Closed;
                    req.allowlist = callers
                        .choose_multiple(rng, 2)
                        .map(|a| a.id.clone())
                        .collect();
                }
                svc.register_benchmark(likely(rng, Role::Committee), req)
                    .map(drop)
            }
            3 => svc.activate_benchmark(likely(rng, Role::PlatformOperator), &bench),
            4 if rng.gen_bool(0.3) => {
                svc.retire_benchmark(likely(rng, Role::PlatformOperator), &bench)
            }
            5 => {
                let kind = rng.gen_bool(0.9).then_some(CubeKind::Preparation);
                let prep = pick_cube(rng, kind);
                let mut req = dataset_request(&format!("ds-{step}-{}", rng.gen::<u16>()), &prep);
                req.sample_count = rng.gen_range(0..500);
                svc.register_dataset(likely(rng, Role::DataOwner), req)
                    .map(drop)
            }
            6 | 7 => {
                let (kind, subject, owner) = if rng.gen_bool(0.5) {
                    let Some(ds) = datasets.choose(rng) else {
                        continue;
                    };
                    (
                        SubjectKind::Dataset,
                        ds.to_string(),
                        reg.datasets[ds].owner_id.clone(),
                    )
                } else {
                    let model = pick_cube(rng, Some(CubeKind::Model));
                    let owner = reg
                        .cubes
                        .get(&model)
                        .map(|c| c.owner_id.clone())
                        .unwrap_or_else(|| op.id.clone());
                    (SubjectKind::Model, model.to_string(), owner)
                };
                svc.request_association(
                    owner_or_any(rng, &owner),
                    RequestAssociation {
                        benchmark_id: bench.clone(),
                        subject_kind: kind,
                        subject,
                    },
                )
                .map(drop)
            }
            8 | 9 => {
                let requested: Vec<&AssociationId> = reg
                    .associations
                    .values()
                    .filter(|a| a.state == fedeval_core::AssociationState::Requested)
                    .map(|a| &a.id)
                    .collect();
                let ids: Vec<&AssociationId> = if rng.gen_bool(0.85) && !requested.is_empty() {
                    requested
                } else {
                    reg.associations.keys().collect()
                };
                match ids.choose(rng) {
                    Some(id) => {
                        let a = &reg.associations[*id];
                        let committee = reg
                            .benchmarks
                            .get(&a.benchmark_id)
                            .map(|b| b.committee_id.clone());
                        let decider = if rng.gen_bool(0.7) {
                            callers.iter().find(|c| Some(&c.id) == committee.as_ref())
                        } else {
                            caller
                        };
                        let action = if rng.gen_bool(0.8) {
                            AssociationAction::Approve
                        } else {
                            AssociationAction::Reject
                        };
                        svc.decide_association(decider, id, action).map(drop)
                    }
                    None => Err(ApiError::new("UNKNOWN_ASSOCIATION", "none yet")),
                }
            }
            10..=12 => {
                // Mostly subjects already approved into this benchmark.
                let approved = |kind| -> Vec<String> {
                    reg.associations
                        .values()
                        .filter(|a| a.benchmark_id == bench && a.subject_kind == kind)
                        .filter(|a| a.state == fedeval_core::AssociationState::Approved)
                        .map(|a| a.subject.clone())
                        .collect()
                };
                let approved_ds: Vec<ContentUid> = approved(SubjectKind::Dataset)
                    .iter()
                    .filter_map(|s| s.parse().ok())
                    .collect();
                let pool = if rng.gen_bool(0.85) && !approved_ds.is_empty() {
                    &approved_ds
                } else {
                    &datasets
                };
                let Some(ds) = pool.choose(rng) else {
                    continue;
                };
                let submitter = owner_or_any(rng, &reg.datasets[ds].owner_id);
                let model = match approved(SubjectKind::Model).choose(rng) {
                    Some(m) if rng.gen_bool(0.85) => CubeId::new(m.clone()),
                    _ => pick_cube(rng, Some(CubeKind::Model)),
                };
                let executed = reg.benchmarks.get(&bench).map(|b| ExecutedHashes {
                    prep: reg
                        .cubes
                        .get(&b.preparation_cube)
                        .map(|c| c.manifest_uid.clone())
                        .unwrap_or_else(ContentUid::zero),
                    model: reg
                        .cubes
                        .get(&model)
                        .map(|c| c.manifest_uid.clone())
                        .unwrap_or_else(ContentUid::zero),
                    metrics_cube: reg
                        .cubes
                        .get(&b.metrics_cube)
                        .map(|c| c.manifest_uid.clone())
                        .unwrap_or_else(ContentUid::zero),
                });
                let Some(executed_hashes) = executed else {
                    continue;
                };
                let now = clock.now();
                let mut req = SubmitResult {
                    benchmark_id: bench.clone(),
                    dataset_uid: ds.clone(),
                    model_cube_id: model,
                    metrics: [("accuracy".to_string(), rng.gen_range(0.0..=1.0))]
                        .into_iter()
                        .collect(),
                    sample_count: rng.gen_range(1..300),
                    executed_hashes,
                    model_approved_at: Some(now),
                    result_approved_at: Some(now),
                };
                if rng.gen_bool(0.2) {
                    match rng.gen_range(0..4) {
                        0 => req
                            .metrics
                            .insert("accuracy".into(), 1.0 + rng.gen_range(0.01..1.0))
                            .map(drop)
                            .unwrap_or(()),
                        1 => req.sample_count = 0,
                        2 => req.model_approved_at = None,
                        _ => req.result_approved_at = None,
                    }
                }
                svc.submit_result(submitter, req).map(drop)
            }
            _ => {
                let mode = *[
                    ReleaseMode::Private,
                    ReleaseMode::OwnerScoped,
                    ReleaseMode::Public,
                ]
                .choose(rng)
                .unwrap();
                let committee = reg.benchmarks.get(&bench).map(|b| b.committee_id.clone());
                let setter = if rng.gen_bool(0.7) {
                    callers.iter().find(|c| Some(&c.id) == committee.as_ref())
                } else {
                    caller
                };
                svc.set_release_policy(
                    setter,
                    &bench,
                    ReleasePolicy {
                        mode,
                        show_per_site: rng.gen_bool(0.5),
                    },
                )
            }
        };
        match outcome {
            Ok(()) => stats.committed += 1,
            Err(e) => {
                stats.rejected += 1;
                *stats.codes.entry(e.code).or_default() += 1;
            }
        }
    }
    stats
}
