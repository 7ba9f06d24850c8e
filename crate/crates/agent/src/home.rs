//! On-disk agent state under `FEDEVAL_AGENT_HOME`.
//!
//! ```text
//! assets/<pin>/        verified cubes, keyed by the digest of their pins
//! quarantine/<pin>/    downloaded models awaiting an execution approval
//! staging/, work/      scratch space for downloads and task workspaces
//! datasets/<uid>.json  LocalDataset records
//! pending/<uid>.json   last fetched pending list per dataset
//! approved/<key>.json  the pending item an execution approval was given for
//! drafts/<key>.json    evaluated, not yet uploaded results
//! audit.jsonl          hash-chained log, one AuditEvent per line
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fedeval_core::api::{PendingItem, PendingList, SubmitResult};
use fedeval_core::audit::next_event;
use fedeval_core::{
    file_uid, verify_audit_chain, AssociationId, AuditEvent, AuditEventDraft, BenchmarkId,
    ContentUid, CubeId, EvaluationTask,
};

use crate::approve::{ApprovalKind, ApprovalRecord};
use crate::error::{AgentError, Result};
use crate::sheets::{subject_ids, task_key};

pub const AUDIT_LOG: &str = "audit.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegistrationState {
    Prepared,
    StatsApproved,
    Registered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDataset {
    pub name: String,
    pub raw_path: PathBuf,
    pub prepared_path: PathBuf,
    pub generated_uid: ContentUid,
    pub statistics_report: BTreeMap<String, f64>,
    pub registration_state: RegistrationState,
    pub benchmark_id: BenchmarkId,
    pub prep_cube_id: CubeId,
    #[serde(default)]
    pub association_id: Option<AssociationId>,
}

#[derive(Debug, Clone)]
pub struct AgentHome {
    root: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    match fs::read(path) {
        Ok(b) => serde_json::from_slice(&b)
            .map(Some)
            .map_err(|e| AgentError::Parse(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(
        &tmp,
        serde_json::to_vec_pretty(value).expect("serializable"),
    )?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn key_file(task: &EvaluationTask) -> String {
    format!("{}.json", file_uid(task_key(task).as_bytes()))
}

impl AgentHome {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in [
            "assets",
            "quarantine",
            "staging",
            "work",
            "datasets",
            "pending",
            "approved",
            "drafts",
        ] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(AgentHome { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.root.join(sub)
    }

    pub fn audit_path(&self) -> PathBuf {
        self.root.join(AUDIT_LOG)
    }

    /// The raw log. A line that does not parse counts as corruption at
    /// that position.
    pub fn audit_log(&self) -> Result<Vec<AuditEvent>> {
        let text = match fs::read_to_string(self.audit_path()) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str(line).map_err(|_| AgentError::ChainCorrupt(i as u64))
            })
            .collect()
    }

    /// The log after checking every link.
    pub fn verified_log(&self) -> Result<Vec<AuditEvent>> {
        let log = self.audit_log()?;
        verify_audit_chain(&log).map_err(AgentError::ChainCorrupt)?;
        Ok(log)
    }

    pub fn append(&self, draft: AuditEventDraft) -> Result<AuditEvent> {
        let log = self.verified_log()?;
        let event = next_event(&log, draft);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.audit_path())?;
        let mut line = serde_json::to_vec(&event).expect("serializable");
        line.push(b'\n');
        f.write_all(&line)?;
        f.sync_data()?;
        Ok(event)
    }

    pub fn record_approval(&self, record: &ApprovalRecord) -> Result<AuditEvent> {
        self.append(AuditEventDraft {
            timestamp: record.timestamp,
            actor: record.operator.clone(),
            action: record.what.audit_action(record.decision),
            subject_ids: record.subject_ids.clone(),
            payload: serde_json::to_string(record).expect("serializable"),
        })
    }

    /// Approval records in log order, from a verified chain.
    pub fn approvals(&self) -> Result<Vec<ApprovalRecord>> {
        Ok(self
            .verified_log()?
            .iter()
            .filter_map(|e| serde_json::from_str::<ApprovalRecord>(&e.payload).ok())
            .collect())
    }

    /// The most recent decision of `kind` on exactly these subjects.
    pub fn latest_approval(
        &self,
        kind: ApprovalKind,
        subjects: &[String],
    ) -> Result<Option<ApprovalRecord>> {
        Ok(self
            .approvals()?
            .into_iter()
            .rev()
            .find(|r| r.what == kind && r.subject_ids == subjects))
    }

    pub fn is_suppressed(&self, task: &EvaluationTask) -> Result<bool> {
        use crate::approve::ApprovalDecision::Reject;
        Ok(self
            .latest_approval(ApprovalKind::ModelExecution, &subject_ids(task))?
            .is_some_and(|r| r.decision == Reject))
    }

    fn dataset_path(&self, uid: &ContentUid) -> PathBuf {
        self.root.join("datasets").join(format!("{uid}.json"))
    }

    pub fn dataset(&self, uid: &ContentUid) -> Result<Option<LocalDataset>> {
        read_json(&self.dataset_path(uid))
    }

    pub fn save_dataset(&self, d: &LocalDataset) -> Result<()> {
        write_json(&self.dataset_path(&d.generated_uid), d)
    }

    pub fn datasets(&self) -> Result<Vec<LocalDataset>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("datasets"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                out.extend(read_json::<LocalDataset>(&path)?);
            }
        }
        out.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(out)
    }

    pub fn cached_pending(&self, uid: &ContentUid) -> Result<Option<PendingList>> {
        read_json(&self.root.join("pending").join(format!("{uid}.json")))
    }

    pub fn cache_pending(&self, uid: &ContentUid, list: &PendingList) -> Result<()> {
        write_json(&self.root.join("pending").join(format!("{uid}.json")), list)
    }

    pub fn approved_item(&self, task: &EvaluationTask) -> Result<Option<PendingItem>> {
        read_json(&self.root.join("approved").join(key_file(task)))
    }

    pub fn save_approved_item(&self, item: &PendingItem) -> Result<()> {
        let task = crate::sheets::item_task(item);
        write_json(&self.root.join("approved").join(key_file(&task)), item)
    }

    pub fn draft(&self, task: &EvaluationTask) -> Result<Option<SubmitResult>> {
        read_json(&self.root.join("drafts").join(key_file(task)))
    }

    pub fn save_draft(&self, task: &EvaluationTask, draft: &SubmitResult) -> Result<()> {
        write_json(&self.root.join("drafts").join(key_file(task)), draft)
    }

    pub fn remove_draft(&self, task: &EvaluationTask) -> Result<()> {
        match fs::remove_file(self.root.join("drafts").join(key_file(task))) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }
}
