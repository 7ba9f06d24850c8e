//! Review sheets shown to the operator. An approval binds to the SHA-256 of
//! the exact sheet text, so these renderings are deterministic.

use std::fmt::Write;

use fedeval_core::api::{PendingItem, RegisterDataset, SubmitResult};
use fedeval_core::{file_uid, ContentUid, CubeRecord, EvaluationResult, EvaluationTask};

pub fn digest(sheet: &str) -> ContentUid {
    file_uid(sheet.as_bytes())
}

/// `benchmark:dataset:model`, the handle used on the command line.
pub fn task_key(task: &EvaluationTask) -> String {
    format!(
        "{}:{}:{}",
        task.benchmark_id, task.dataset_uid, task.model_cube_id
    )
}

pub fn parse_task_key(key: &str) -> Option<EvaluationTask> {
    let mut parts = key.splitn(3, ':');
    let (b, d, m) = (parts.next()?, parts.next()?, parts.next()?);
    if b.is_empty() || m.is_empty() {
        return None;
    }
    Some(EvaluationTask {
        benchmark_id: b.into(),
        dataset_uid: d.parse().ok()?,
        model_cube_id: m.into(),
    })
}

pub fn item_task(item: &PendingItem) -> EvaluationTask {
    EvaluationTask {
        benchmark_id: item.benchmark_id.clone(),
        dataset_uid: item.dataset_uid.clone(),
        model_cube_id: item.model_cube_id.clone(),
    }
}

pub fn subject_ids(task: &EvaluationTask) -> Vec<String> {
    vec![
        task.benchmark_id.to_string(),
        task.dataset_uid.to_string(),
        task.model_cube_id.to_string(),
    ]
}

fn cube_block(out: &mut String, title: &str, c: &CubeRecord) {
    let _ = writeln!(
        out,
        "{title}: {} {:?} ({:?}, owner {})",
        c.id, c.name, c.kind, c.owner_id
    );
    let _ = writeln!(out, "  image_ref:      {}", c.image_ref);
    let _ = writeln!(out, "  manifest_uid:   {}", c.manifest_uid);
    let _ = writeln!(out, "  image_uid:      {}", c.image_uid);
    match &c.parameters_uid {
        Some(p) => {
            let _ = writeln!(out, "  parameters_uid: {p}");
        }
        None => out.push_str("  parameters_uid: none\n"),
    }
    for (path, uid) in &c.extra_files {
        let _ = writeln!(out, "  extra {path}: {uid}");
    }
    let _ = writeln!(out, "  download_url:   {}", c.download_url);
}

/// Everything pinned for one evaluation: who wrote the model and the digest
/// of every asset that will run.
pub fn model_sheet(item: &PendingItem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "task:      {}", task_key(&item_task(item)));
    let _ = writeln!(out, "benchmark: {}", item.benchmark_id);
    let _ = writeln!(out, "dataset:   {}", item.dataset_uid);
    cube_block(&mut out, "model", &item.model_cube);
    cube_block(&mut out, "preparation", &item.prep_cube);
    cube_block(&mut out, "metrics", &item.metrics_cube);
    out
}

/// The registration body, verbatim.
pub fn stats_sheet(req: &RegisterDataset) -> String {
    serde_json::to_string_pretty(req).expect("serializable") + "\n"
}

/// The result body as it will be sent, minus the approval time the
/// decision itself supplies.
pub fn result_sheet(draft: &SubmitResult) -> String {
    let mut shown = draft.clone();
    shown.result_approved_at = None;
    serde_json::to_string_pretty(&shown).expect("serializable") + "\n"
}

/// The sheet an uploaded result must have been approved from.
pub fn result_sheet_of(r: &EvaluationResult) -> String {
    result_sheet(&SubmitResult {
        benchmark_id: r.benchmark_id.clone(),
        dataset_uid: r.dataset_uid.clone(),
        model_cube_id: r.model_cube_id.clone(),
        metrics: r.metrics.clone(),
        sample_count: r.sample_count,
        executed_hashes: r.executed_hashes.clone(),
        model_approved_at: Some(r.model_approved_at),
        result_approved_at: None,
    })
}
