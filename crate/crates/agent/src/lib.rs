//! Data-owner agent: prepares data locally, gates every execution and upload
//! behind an operator decision, and keeps a hash-chained local log.

pub mod agent;
pub mod approve;
pub mod client;
pub mod error;
pub mod fetch;
pub mod home;
pub mod sheets;
pub mod transport;

pub use agent::{cube_registration, parse_benchmark_yaml, pin_key, Agent, Verification};
pub use approve::{
    ApprovalDecision, ApprovalKind, ApprovalRecord, Approver, DecisionFileApprover, Prompt,
    ScriptedApprover, TerminalApprover,
};
pub use client::ApiClient;
pub use error::{exit, AgentError};
pub use home::{AgentHome, LocalDataset, RegistrationState};
pub use transport::{
    Exchange, HttpTransport, Method, RecordingTransport, Request, Response, Transport,
};

use fedeval_core::AuditEvent;

/// One line per entry, oldest first.
pub fn audit_listing(events: &[AuditEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&format!(
            "{:>4}  {}  {:<24} {:<10} {}\n",
            e.seq,
            e.timestamp,
            e.action.name(),
            e.actor,
            e.subject_ids.join(" ")
        ));
    }
    out
}
