//! JSON bodies of the HTTP API, shared by the server and the agent.
//!
//! Request bodies reject unknown fields, so nothing beyond the listed
//! metadata can ride along in an upload.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::association::AssociationAction;
use crate::audit::AuditEvent;
use crate::ids::{AccountId, BenchmarkId, CubeId};
use crate::model::{
    CubeKind, CubeRecord, ExecutedHashes, MetricSpec, ReleasePolicy, RoleSet, SubjectKind,
    Visibility,
};
use crate::time::Timestamp;
use crate::uid::ContentUid;

pub const API_PREFIX: &str = "/api/v1";

/// Upper bound on dataset statistics entries.
pub const MAX_STATISTICS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateAccount {
    pub display_name: String,
    pub roles: RoleSet,
    /// Generated by the server when absent.
    #[serde(default)]
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedAccount {
    pub id: AccountId,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterBenchmark {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub docs_url: String,
    pub preparation_cube: CubeId,
    pub metrics_cube: CubeId,
    pub reference_model_cube: CubeId,
    pub metric_specs: Vec<MetricSpec>,
    pub visibility: Visibility,
    #[serde(default)]
    pub allowlist: BTreeSet<AccountId>,
    #[serde(default)]
    pub release_policy: ReleasePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterCube {
    pub name: String,
    pub kind: CubeKind,
    #[serde(default)]
    pub manifest_uid: Option<ContentUid>,
    pub image_ref: String,
    #[serde(default)]
    pub image_uid: Option<ContentUid>,
    #[serde(default)]
    pub parameters_uid: Option<ContentUid>,
    #[serde(default)]
    pub extra_files: Vec<(String, ContentUid)>,
    #[serde(default)]
    pub download_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterDataset {
    pub generated_uid: ContentUid,
    pub name: String,
    pub benchmark_prep_cube: CubeId,
    pub sample_count: u64,
    #[serde(default)]
    pub statistics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestAssociation {
    pub benchmark_id: BenchmarkId,
    pub subject_kind: SubjectKind,
    pub subject: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decision {
    pub decision: AssociationAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitResult {
    pub benchmark_id: BenchmarkId,
    pub dataset_uid: ContentUid,
    pub model_cube_id: CubeId,
    pub metrics: BTreeMap<String, f64>,
    pub sample_count: u64,
    pub executed_hashes: ExecutedHashes,
    #[serde(default)]
    pub model_approved_at: Option<Timestamp>,
    #[serde(default)]
    pub result_approved_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetReleasePolicy {
    pub release_policy: ReleasePolicy,
}

/// One evaluation request with everything needed to fetch and verify its
/// cubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingItem {
    pub benchmark_id: BenchmarkId,
    pub dataset_uid: ContentUid,
    pub model_cube_id: CubeId,
    pub prep_cube: CubeRecord,
    pub model_cube: CubeRecord,
    pub metrics_cube: CubeRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingList {
    pub tasks: Vec<PendingItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPage {
    pub events: Vec<AuditEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}
