//! Results reports and the release policy filter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregateValue;
use crate::ids::{AccountId, BenchmarkId, CubeId, ResultId};
use crate::model::{ReleaseMode, ReleasePolicy, Role, RoleSet};
use crate::uid::ContentUid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model_cube_id: CubeId,
    pub model_owner_id: AccountId,
    pub metrics: BTreeMap<String, AggregateValue>,
}

/// One site's result for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRow {
    pub result_id: ResultId,
    pub dataset_uid: ContentUid,
    pub dataset_owner_id: AccountId,
    pub model_cube_id: CubeId,
    pub model_owner_id: AccountId,
    pub metrics: BTreeMap<String, f64>,
    pub sample_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub benchmark_id: BenchmarkId,
    pub committee_id: AccountId,
    pub release_policy: ReleasePolicy,
    pub aggregates: Vec<ModelAggregate>,
    pub per_site: Vec<SiteRow>,
}

/// Who is looking. `account` is `None` for anonymous callers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Viewer {
    pub account: Option<AccountId>,
    pub roles: RoleSet,
}

impl Viewer {
    pub fn anonymous() -> Self {
        Viewer::default()
    }

    pub fn new(account: AccountId, roles: RoleSet) -> Self {
        Viewer {
            account: Some(account),
            roles,
        }
    }

    fn is(&self, id: &AccountId) -> bool {
        self.account.as_ref() == Some(id)
    }
}

/// The subset of `report` that `viewer` may see under `policy`.
///
/// * The benchmark committee sees everything.
/// * PRIVATE: nobody else sees aggregates or rows.
/// * OWNER_SCOPED: owners of a model in the report see all aggregates, and
///   the rows of their own models when `show_per_site`.
/// * PUBLIC: everyone sees aggregates, and all rows when `show_per_site`.
/// * A data owner always sees the rows computed on their own datasets.
pub fn apply_release_policy(
    report: &ResultsReport,
    policy: ReleasePolicy,
    viewer: &Viewer,
) -> ResultsReport {
    let is_committee = viewer.roles.contains(&Role::Committee) && viewer.is(&report.committee_id);
    if is_committee {
        let mut full = report.clone();
        full.release_policy = policy;
        return full;
    }

    let owns_a_model = report
        .aggregates
        .iter()
        .any(|a| viewer.is(&a.model_owner_id))
        || report.per_site.iter().any(|r| viewer.is(&r.model_owner_id));

    let show_aggregates = match policy.mode {
        ReleaseMode::Private => false,
        ReleaseMode::OwnerScoped => owns_a_model,
        ReleaseMode::Public => true,
    };
    let aggregates = if show_aggregates {
        report.aggregates.clone()
    } else {
        Vec::new()
    };

    let per_site = report
        .per_site
        .iter()
        .filter(|row| {
            let own_dataset = viewer.is(&row.dataset_owner_id);
            let released = policy.show_per_site
                && match policy.mode {
                    ReleaseMode::Private => false,
                    ReleaseMode::OwnerScoped => viewer.is(&row.model_owner_id),
                    ReleaseMode::Public => true,
                };
            own_dataset || released
        })
        .cloned()
        .collect();

    ResultsReport {
        benchmark_id: report.benchmark_id.clone(),
        committee_id: report.committee_id.clone(),
        release_policy: policy,
        aggregates,
        per_site,
    }
}
