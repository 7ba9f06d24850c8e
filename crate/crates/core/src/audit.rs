//! Hash-chained, append-only audit log.
//!
//! Each entry's hash is the SHA-256 of a canonical byte encoding (format
//! version 0x01, all integers big-endian):
//!
//! ```text
//! u8      0x01
//! u64     seq
//! i64     timestamp, Unix seconds
//! u32+b   actor, UTF-8
//! u32+b   action name, e.g. "RESULT_UPLOADED"
//! u32     number of subject ids, then each as u32+b
//! [32]    prev_hash, raw digest bytes
//! u32+b   payload, UTF-8 (empty when the event carries none)
//! ```
//!
//! `u32+b` is a u32 byte length followed by that many bytes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::time::Timestamp;
use crate::uid::ContentUid;

pub const ENCODING_VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditAction {
    AccountProvisioned,
    BenchmarkRegistered,
    BenchmarkActivated,
    BenchmarkRetired,
    CubeRegistered,
    DatasetRegistered,
    AssociationRequested,
    AssociationDecided,
    ModelExecApproved,
    ModelExecRejected,
    TaskExecuted,
    StatsUploadApproved,
    StatsUploadRejected,
    ResultUploadApproved,
    ResultUploadRejected,
    ResultUploaded,
    ResultsReleased,
}

impl AuditAction {
    pub fn name(self) -> &'static str {
        match self {
            AuditAction::AccountProvisioned => "ACCOUNT_PROVISIONED",
            AuditAction::BenchmarkRegistered => "BENCHMARK_REGISTERED",
            AuditAction::BenchmarkActivated => "BENCHMARK_ACTIVATED",
            AuditAction::BenchmarkRetired => "BENCHMARK_RETIRED",
            AuditAction::CubeRegistered => "CUBE_REGISTERED",
            AuditAction::DatasetRegistered => "DATASET_REGISTERED",
            AuditAction::AssociationRequested => "ASSOCIATION_REQUESTED",
            AuditAction::AssociationDecided => "ASSOCIATION_DECIDED",
            AuditAction::ModelExecApproved => "MODEL_EXEC_APPROVED",
            AuditAction::ModelExecRejected => "MODEL_EXEC_REJECTED",
            AuditAction::TaskExecuted => "TASK_EXECUTED",
            AuditAction::StatsUploadApproved => "STATS_UPLOAD_APPROVED",
            AuditAction::StatsUploadRejected => "STATS_UPLOAD_REJECTED",
            AuditAction::ResultUploadApproved => "RESULT_UPLOAD_APPROVED",
            AuditAction::ResultUploadRejected => "RESULT_UPLOAD_REJECTED",
            AuditAction::ResultUploaded => "RESULT_UPLOADED",
            AuditAction::ResultsReleased => "RESULTS_RELEASED",
        }
    }
}

/// Caller-supplied fields of a new entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEventDraft {
    pub timestamp: Timestamp,
    pub actor: String,
    pub action: AuditAction,
    pub subject_ids: Vec<String>,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub actor: String,
    pub action: AuditAction,
    pub subject_ids: Vec<String>,
    #[serde(default)]
    pub payload: String,
    pub prev_hash: ContentUid,
    pub entry_hash: ContentUid,
}

fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    buf.extend_from_slice(bytes);
}

/// Canonical encoding of the hashed fields.
pub fn canonical_bytes(
    seq: u64,
    timestamp: Timestamp,
    actor: &str,
    action: AuditAction,
    subject_ids: &[String],
    prev_hash: &ContentUid,
    payload: &str,
) -> Vec<u8> {
    let mut buf = Vec::with_capacity(128 + payload.len());
    buf.push(ENCODING_VERSION);
    buf.extend_from_slice(&seq.to_be_bytes());
    buf.extend_from_slice(&timestamp.unix().to_be_bytes());
    put_bytes(&mut buf, actor.as_bytes());
    put_bytes(&mut buf, action.name().as_bytes());
    buf.extend_from_slice(&(subject_ids.len() as u32).to_be_bytes());
    for id in subject_ids {
        put_bytes(&mut buf, id.as_bytes());
    }
    buf.extend_from_slice(&prev_hash.to_bytes());
    put_bytes(&mut buf, payload.as_bytes());
    buf
}

impl AuditEvent {
    pub fn encode(&self) -> Vec<u8> {
        canonical_bytes(
            self.seq,
            self.timestamp,
            &self.actor,
            self.action,
            &self.subject_ids,
            &self.prev_hash,
            &self.payload,
        )
    }

    pub fn compute_hash(&self) -> ContentUid {
        ContentUid::from_digest(&Sha256::digest(self.encode()))
    }
}

/// Builds the entry that would follow `log`.
pub fn next_event(log: &[AuditEvent], draft: AuditEventDraft) -> AuditEvent {
    let prev_hash = log
        .last()
        .map(|e| e.entry_hash.clone())
        .unwrap_or_else(ContentUid::zero);
    let mut event = AuditEvent {
        seq: log.len() as u64,
        timestamp: draft.timestamp,
        actor: draft.actor,
        action: draft.action,
        subject_ids: draft.subject_ids,
        payload: draft.payload,
        prev_hash,
        entry_hash: ContentUid::zero(),
    };
    event.entry_hash = event.compute_hash();
    event
}

/// Returns a new chain with one more entry; `log` is left untouched.
pub fn append_audit(log: &[AuditEvent], draft: AuditEventDraft) -> Vec<AuditEvent> {
    let mut out = Vec::with_capacity(log.len() + 1);
    out.extend_from_slice(log);
    out.push(next_event(log, draft));
    out
}

/// `Ok(())` when every entry links and rehashes; otherwise the smallest
/// violating sequence number.
pub fn verify_audit_chain(log: &[AuditEvent]) -> Result<(), u64> {
    let mut expected_prev = ContentUid::zero();
    for (idx, event) in log.iter().enumerate() {
        let idx = idx as u64;
        if event.seq != idx
            || event.prev_hash != expected_prev
            || event.compute_hash() != event.entry_hash
        {
            return Err(idx);
        }
        expected_prev = event.entry_hash.clone();
    }
    Ok(())
}
