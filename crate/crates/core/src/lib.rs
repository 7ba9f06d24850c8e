//! Core data model and container task contract for a federated evaluation
//! platform.
//!
//! The [`registry`] side is pure: entities, the association state machine,
//! content hashing, audit chaining, pending-work computation, metric
//! aggregation and release filtering. Nothing in it reads a clock or touches
//! disk. The [`cube`] side parses cube manifests, verifies pinned hashes and
//! runs tasks through a sandbox backend.

pub mod aggregate;
pub mod api;
pub mod association;
pub mod audit;
pub mod bundle;
pub mod cube;
pub mod ids;
pub mod model;
pub mod pending;
pub mod registry;
pub mod release;
pub mod time;
pub mod uid;
pub mod validate;
pub mod yaml;

pub use aggregate::{aggregate_results, AggregateError, AggregateValue};
pub use association::{
    transition_association, transition_benchmark, AssociationAction, BenchmarkAction,
    TransitionError,
};
pub use audit::{append_audit, verify_audit_chain, AuditAction, AuditEvent, AuditEventDraft};
pub use bundle::{validate_benchmark_bundle, BundleDefect};
pub use ids::{AccountId, AssociationId, BenchmarkId, CubeId, ResultId};
pub use model::*;
pub use pending::{pending_tasks, PendingError};
pub use registry::Registry;
pub use release::{apply_release_policy, ModelAggregate, ResultsReport, SiteRow, Viewer};
pub use time::Timestamp;
pub use uid::{compute_content_uid, file_uid, ContentUid, UidError};
pub use validate::{validate_result, ResultDefect};
