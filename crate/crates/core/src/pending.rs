use thiserror::Error;

use crate::ids::CubeId;
use crate::model::{AssociationState, BenchmarkState, EvaluationTask, SubjectKind};
use crate::registry::Registry;
use crate::uid::ContentUid;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PendingError {
    #[error("unknown dataset {0}")]
    UnknownDataset(ContentUid),
}

impl PendingError {
    pub fn code(&self) -> &'static str {
        "UNKNOWN_DATASET"
    }
}

/// Evaluations a data owner still owes for `dataset_uid`: every approved
/// model of every operational benchmark the dataset is approved into, minus
/// triples that already have a result. Sorted by benchmark id, then model id.
pub fn pending_tasks(
    registry: &Registry,
    dataset_uid: &ContentUid,
) -> Result<Vec<EvaluationTask>, PendingError> {
    if !registry.datasets.contains_key(dataset_uid) {
        return Err(PendingError::UnknownDataset(dataset_uid.clone()));
    }
    let mut tasks = Vec::new();
    for benchmark in registry.benchmarks.values() {
        if benchmark.state != BenchmarkState::Operational
            || !registry.is_approved(&benchmark.id, SubjectKind::Dataset, dataset_uid.as_str())
        {
            continue;
        }
        let mut models: Vec<_> = registry
            .associations
            .values()
            .filter(|a| {
                a.benchmark_id == benchmark.id
                    && a.subject_kind == SubjectKind::Model
                    && a.state == AssociationState::Approved
            })
            .map(|a| CubeId::new(a.subject.clone()))
            .filter(|m| registry.result_for(&benchmark.id, dataset_uid, m).is_none())
            .collect();
        models.sort();
        models.dedup();
        tasks.extend(models.into_iter().map(|model_cube_id| EvaluationTask {
            benchmark_id: benchmark.id.clone(),
            dataset_uid: dataset_uid.clone(),
            model_cube_id,
        }));
    }
    // BTreeMap iteration already yields benchmarks in id order.
    Ok(tasks)
}
