//! An immutable view of everything the platform has registered.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{AssociationId, BenchmarkId, CubeId, ResultId};
use crate::model::{
    Association, AssociationState, Benchmark, CubeRecord, DatasetRecord, EvaluationResult,
    SubjectKind,
};
use crate::uid::ContentUid;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub benchmarks: BTreeMap<BenchmarkId, Benchmark>,
    pub cubes: BTreeMap<CubeId, CubeRecord>,
    pub datasets: BTreeMap<ContentUid, DatasetRecord>,
    pub associations: BTreeMap<AssociationId, Association>,
    pub results: BTreeMap<ResultId, EvaluationResult>,
}

impl Registry {
    /// The live (non-rejected) association for a subject, if any.
    pub fn live_association(
        &self,
        benchmark: &BenchmarkId,
        kind: SubjectKind,
        subject: &str,
    ) -> Option<&Association> {
        self.associations.values().find(|a| {
            a.benchmark_id == *benchmark
                && a.subject_kind == kind
                && a.subject == subject
                && a.state != AssociationState::Rejected
        })
    }

    pub fn is_approved(&self, benchmark: &BenchmarkId, kind: SubjectKind, subject: &str) -> bool {
        self.live_association(benchmark, kind, subject)
            .is_some_and(|a| a.state == AssociationState::Approved)
    }

    pub fn result_for(
        &self,
        benchmark: &BenchmarkId,
        dataset: &ContentUid,
        model: &CubeId,
    ) -> Option<&EvaluationResult> {
        self.results.values().find(|r| {
            r.benchmark_id == *benchmark && r.dataset_uid == *dataset && r.model_cube_id == *model
        })
    }

    pub fn results_for_benchmark<'a>(
        &'a self,
        benchmark: &'a BenchmarkId,
    ) -> impl Iterator<Item = &'a EvaluationResult> + 'a {
        self.results
            .values()
            .filter(move |r| r.benchmark_id == *benchmark)
    }
}
