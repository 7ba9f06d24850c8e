//! Registry entity types.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ids::{AccountId, AssociationId, BenchmarkId, CubeId, ResultId};
use crate::time::Timestamp;
use crate::uid::ContentUid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Committee,
    DataOwner,
    ModelOwner,
    PlatformOperator,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Committee,
        Role::DataOwner,
        Role::ModelOwner,
        Role::PlatformOperator,
    ];
}

pub type RoleSet = BTreeSet<Role>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CubeKind {
    Preparation,
    Model,
    Metrics,
}

/// A container-packaged pipeline step with pinned content hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub id: CubeId,
    pub name: String,
    pub kind: CubeKind,
    pub manifest_uid: ContentUid,
    pub image_ref: String,
    pub image_uid: ContentUid,
    #[serde(default)]
    pub parameters_uid: Option<ContentUid>,
    #[serde(default)]
    pub extra_files: Vec<(String, ContentUid)>,
    /// Where the agent fetches `cube.yaml`, the image archive and the rest.
    /// `file://` and `http(s)://` are understood.
    #[serde(default)]
    pub download_url: String,
    pub owner_id: AccountId,
    pub registered_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AggregationMethod {
    #[default]
    WeightedMean,
    UnweightedMean,
    Min,
    Max,
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRange {
    pub min: f64,
    pub max: f64,
}

impl MetricRange {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub range: MetricRange,
    pub higher_is_better: bool,
    /// The pooled metric equals the sample-count-weighted mean of per-site
    /// values.
    pub decomposable: bool,
    #[serde(default)]
    pub aggregation: AggregationMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Visibility {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BenchmarkState {
    Draft,
    Operational,
    Retired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReleaseMode {
    Private,
    OwnerScoped,
    Public,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReleasePolicy {
    pub mode: ReleaseMode,
    pub show_per_site: bool,
}

impl Default for ReleasePolicy {
    fn default() -> Self {
        ReleasePolicy {
            mode: ReleaseMode::Private,
            show_per_site: false,
        }
    }
}

/// The asset bundle a committee registers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub id: BenchmarkId,
    pub name: String,
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
    pub state: BenchmarkState,
    pub committee_id: AccountId,
}

impl Benchmark {
    pub fn metric_spec(&self, name: &str) -> Option<&MetricSpec> {
        self.metric_specs.iter().find(|m| m.name == name)
    }

    /// Whether `account` may take part: open benchmarks admit everyone,
    /// closed ones only allowlisted accounts and the committee.
    pub fn admits(&self, account: &AccountId) -> bool {
        match self.visibility {
            Visibility::Open => true,
            Visibility::Closed => self.allowlist.contains(account) || *account == self.committee_id,
        }
    }
}

/// Metadata of a prepared dataset. Raw content never appears here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub generated_uid: ContentUid,
    pub name: String,
    pub owner_id: AccountId,
    pub benchmark_prep_cube: CubeId,
    pub sample_count: u64,
    #[serde(default)]
    pub statistics: BTreeMap<String, f64>,
    pub registered_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubjectKind {
    Dataset,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssociationState {
    Requested,
    Approved,
    Rejected,
}

impl AssociationState {
    pub fn is_terminal(self) -> bool {
        !matches!(self, AssociationState::Requested)
    }
}

/// Approval relationship admitting a dataset or model into a benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub id: AssociationId,
    pub benchmark_id: BenchmarkId,
    /// Dataset generated UID or model cube id, depending on `subject_kind`.
    pub subject: String,
    pub subject_kind: SubjectKind,
    pub state: AssociationState,
    pub requested_by: AccountId,
    pub requested_at: Timestamp,
    #[serde(default)]
    pub decided_by: Option<AccountId>,
    #[serde(default)]
    pub decided_at: Option<Timestamp>,
}

/// Manifest UIDs verified by the agent immediately before execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutedHashes {
    pub prep: ContentUid,
    pub model: ContentUid,
    pub metrics_cube: ContentUid,
}

/// Metrics-only outcome of one (benchmark, dataset, model) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub id: ResultId,
    pub benchmark_id: BenchmarkId,
    pub dataset_uid: ContentUid,
    pub model_cube_id: CubeId,
    pub metrics: BTreeMap<String, f64>,
    pub sample_count: u64,
    pub executed_hashes: ExecutedHashes,
    pub operator_id: AccountId,
    pub model_approved_at: Timestamp,
    pub result_approved_at: Timestamp,
    pub uploaded_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvaluationTask {
    pub benchmark_id: BenchmarkId,
    pub dataset_uid: ContentUid,
    pub model_cube_id: CubeId,
}

/// A platform user. Bearer tokens are kept only as digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    pub display_name: String,
    pub roles: RoleSet,
    pub token_hash: ContentUid,
}

impl Account {
    pub fn has(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}
