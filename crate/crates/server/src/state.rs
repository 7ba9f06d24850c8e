//! Event-sourced server state.
//!
//! Every committed mutation is one audit event whose payload is the
//! mutation's canonical JSON. [`StoredState::replay`] rebuilds the state from
//! the chain alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fedeval_core::audit::{next_event, AuditEventDraft};
use fedeval_core::{
    verify_audit_chain, Account, AccountId, Association, AuditAction, AuditEvent, Benchmark,
    BenchmarkId, BenchmarkState, ContentUid, CubeRecord, DatasetRecord, EvaluationResult, Registry,
    ReleasePolicy, Timestamp,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mutation {
    ProvisionAccount {
        account: Account,
    },
    RegisterBenchmark {
        benchmark: Benchmark,
    },
    SetBenchmarkState {
        id: BenchmarkId,
        state: BenchmarkState,
    },
    RegisterCube {
        cube: CubeRecord,
    },
    RegisterDataset {
        dataset: DatasetRecord,
    },
    /// A new association or a decided one, stored whole.
    PutAssociation {
        association: Association,
    },
    SubmitResult {
        result: EvaluationResult,
    },
    ReleaseResults {
        id: BenchmarkId,
        release_policy: ReleasePolicy,
    },
}

impl Mutation {
    pub fn action(&self) -> AuditAction {
        match self {
            Mutation::ProvisionAccount { .. } => AuditAction::AccountProvisioned,
            Mutation::RegisterBenchmark { .. } => AuditAction::BenchmarkRegistered,
            Mutation::SetBenchmarkState {
                state: BenchmarkState::Retired,
                ..
            } => AuditAction::BenchmarkRetired,
            Mutation::SetBenchmarkState { .. } => AuditAction::BenchmarkActivated,
            Mutation::RegisterCube { .. } => AuditAction::CubeRegistered,
            Mutation::RegisterDataset { .. } => AuditAction::DatasetRegistered,
            Mutation::PutAssociation { association } if association.decided_at.is_some() => {
                AuditAction::AssociationDecided
            }
            Mutation::PutAssociation { .. } => AuditAction::AssociationRequested,
            Mutation::SubmitResult { .. } => AuditAction::ResultUploaded,
            Mutation::ReleaseResults { .. } => AuditAction::ResultsReleased,
        }
    }

    pub fn subject_ids(&self) -> Vec<String> {
        match self {
            Mutation::ProvisionAccount { account } => vec![account.id.to_string()],
            Mutation::RegisterBenchmark { benchmark } => vec![benchmark.id.to_string()],
            Mutation::SetBenchmarkState { id, .. } | Mutation::ReleaseResults { id, .. } => {
                vec![id.to_string()]
            }
            Mutation::RegisterCube { cube } => vec![cube.id.to_string()],
            Mutation::RegisterDataset { dataset } => vec![dataset.generated_uid.to_string()],
            Mutation::PutAssociation { association: a } => {
                vec![
                    a.id.to_string(),
                    a.benchmark_id.to_string(),
                    a.subject.clone(),
                ]
            }
            Mutation::SubmitResult { result: r } => vec![
                r.id.to_string(),
                r.benchmark_id.to_string(),
                r.dataset_uid.to_string(),
                r.model_cube_id.to_string(),
            ],
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("audit chain broken at seq {0}")]
    ChainBroken(u64),
    #[error("event {seq}: {message}")]
    BadPayload { seq: u64, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoredState {
    pub accounts: BTreeMap<AccountId, Account>,
    pub registry: Registry,
    pub audit: Vec<AuditEvent>,
    /// Committed mutations so far; always `audit.len()`.
    pub version: u64,
}

impl StoredState {
    pub fn account_by_token_hash(&self, hash: &ContentUid) -> Option<&Account> {
        self.accounts.values().find(|a| a.token_hash == *hash)
    }

    /// The event that would commit `mutation` on top of this state.
    pub fn event_for(&self, mutation: &Mutation, actor: &str, at: Timestamp) -> AuditEvent {
        let payload = serde_json::to_string(mutation).expect("mutations serialize");
        next_event(
            &self.audit,
            AuditEventDraft {
                timestamp: at,
                actor: actor.to_owned(),
                action: mutation.action(),
                subject_ids: mutation.subject_ids(),
                payload,
            },
        )
    }

    fn apply_mutation(&mut self, mutation: Mutation) {
        let reg = &mut self.registry;
        match mutation {
            Mutation::ProvisionAccount { account } => {
                self.accounts.insert(account.id.clone(), account);
            }
            Mutation::RegisterBenchmark { benchmark } => {
                reg.benchmarks.insert(benchmark.id.clone(), benchmark);
            }
            Mutation::SetBenchmarkState { id, state } => {
                if let Some(b) = reg.benchmarks.get_mut(&id) {
                    b.state = state;
                }
            }
            Mutation::RegisterCube { cube } => {
                reg.cubes.insert(cube.id.clone(), cube);
            }
            Mutation::RegisterDataset { dataset } => {
                reg.datasets.insert(dataset.generated_uid.clone(), dataset);
            }
            Mutation::PutAssociation { association } => {
                reg.associations.insert(association.id.clone(), association);
            }
            Mutation::SubmitResult { result } => {
                reg.results.insert(result.id.clone(), result);
            }
            Mutation::ReleaseResults { id, release_policy } => {
                if let Some(b) = reg.benchmarks.get_mut(&id) {
                    b.release_policy = release_policy;
                }
            }
        }
    }

    /// Appends an already-built event and applies its mutation.
    pub fn apply(&mut self, event: AuditEvent) -> Result<(), ReplayError> {
        let mutation: Mutation =
            serde_json::from_str(&event.payload).map_err(|e| ReplayError::BadPayload {
                seq: event.seq,
                message: e.to_string(),
            })?;
        self.apply_mutation(mutation);
        self.audit.push(event);
        self.version += 1;
        Ok(())
    }

    /// Rebuilds the state from an audit chain, verifying it first.
    pub fn replay(events: &[AuditEvent]) -> Result<StoredState, ReplayError> {
        verify_audit_chain(events).map_err(ReplayError::ChainBroken)?;
        let mut state = StoredState::default();
        for e in events {
            state.apply(e.clone())?;
        }
        Ok(state)
    }
}

pub(crate) fn next_id(prefix: &str, existing: usize) -> String {
    format!("{prefix}-{:06}", existing + 1)
}
