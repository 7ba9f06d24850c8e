//! Human approval gates.

use std::collections::VecDeque;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use fedeval_core::{AuditAction, ContentUid, Timestamp};

use crate::error::{AgentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ApprovalKind {
    ModelExecution,
    StatsUpload,
    ResultUpload,
}

impl ApprovalKind {
    pub fn name(self) -> &'static str {
        match self {
            ApprovalKind::ModelExecution => "MODEL_EXECUTION",
            ApprovalKind::StatsUpload => "STATS_UPLOAD",
            ApprovalKind::ResultUpload => "RESULT_UPLOAD",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ApprovalKind::ModelExecution,
            ApprovalKind::StatsUpload,
            ApprovalKind::ResultUpload,
        ]
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(s))
    }

    pub fn audit_action(self, decision: ApprovalDecision) -> AuditAction {
        use ApprovalDecision::*;
        match (self, decision) {
            (ApprovalKind::ModelExecution, Approve) => AuditAction::ModelExecApproved,
            (ApprovalKind::ModelExecution, Reject) => AuditAction::ModelExecRejected,
            (ApprovalKind::StatsUpload, Approve) => AuditAction::StatsUploadApproved,
            (ApprovalKind::StatsUpload, Reject) => AuditAction::StatsUploadRejected,
            (ApprovalKind::ResultUpload, Approve) => AuditAction::ResultUploadApproved,
            (ApprovalKind::ResultUpload, Reject) => AuditAction::ResultUploadRejected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ApprovalDecision {
    Approve,
    Reject,
}

impl ApprovalDecision {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "approve" => Some(ApprovalDecision::Approve),
            "reject" => Some(ApprovalDecision::Reject),
            _ => None,
        }
    }
}

/// One operator decision, bound to the exact review sheet by its digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalRecord {
    pub what: ApprovalKind,
    pub subject_ids: Vec<String>,
    pub decision: ApprovalDecision,
    pub operator: String,
    pub shown_digest: ContentUid,
    pub timestamp: Timestamp,
}

/// What the operator is asked about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt<'a> {
    pub kind: ApprovalKind,
    pub subject_ids: &'a [String],
    pub sheet: &'a str,
    pub digest: &'a ContentUid,
}

pub trait Approver {
    fn operator(&self) -> String;
    fn decide(&mut self, prompt: &Prompt<'_>) -> Result<ApprovalDecision>;
}

/// Interactive prompt on the controlling terminal. Anything but the full
/// word `approve` counts as a rejection.
pub struct TerminalApprover {
    operator: String,
}

impl TerminalApprover {
    pub fn new(operator: impl Into<String>) -> Self {
        TerminalApprover {
            operator: operator.into(),
        }
    }
}

impl Approver for TerminalApprover {
    fn operator(&self) -> String {
        self.operator.clone()
    }

    fn decide(&mut self, prompt: &Prompt<'_>) -> Result<ApprovalDecision> {
        let mut err = io::stderr().lock();
        writeln!(err, "==== {} review ====", prompt.kind.name())?;
        writeln!(err, "{}", prompt.sheet.trim_end())?;
        writeln!(err, "---- sheet digest {}", prompt.digest)?;
        write!(err, "Type 'approve' to approve, anything else rejects: ")?;
        err.flush()?;
        let mut line = String::new();
        io::stdin().lock().read_line(&mut line)?;
        Ok(match ApprovalDecision::parse(&line) {
            Some(ApprovalDecision::Approve) => ApprovalDecision::Approve,
            _ => ApprovalDecision::Reject,
        })
    }
}

/// Non-interactive decisions for automated runs.
///
/// Each non-empty line is `KIND DECISION` or `KIND DIGEST DECISION`, e.g.
/// `MODEL_EXECUTION approve`. A line naming the shown digest wins over a
/// kind-wide line; kinds without any line are rejected.
pub struct DecisionFileApprover {
    operator: String,
    rules: Vec<(ApprovalKind, Option<ContentUid>, ApprovalDecision)>,
}

impl DecisionFileApprover {
    pub fn load(path: &Path, operator: impl Into<String>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, operator)
    }

    pub fn parse(text: &str, operator: impl Into<String>) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || AgentError::Parse(format!("decision file line {}", i + 1));
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (kind, digest, decision) = match parts.as_slice() {
                [k, d] => (k, None, d),
                [k, digest, d] => (k, Some(digest.parse::<ContentUid>().map_err(|_| bad())?), d),
                _ => return Err(bad()),
            };
            rules.push((
                ApprovalKind::parse(kind).ok_or_else(bad)?,
                digest,
                ApprovalDecision::parse(decision).ok_or_else(bad)?,
            ));
        }
        Ok(DecisionFileApprover {
            operator: operator.into(),
            rules,
        })
    }
}

impl Approver for DecisionFileApprover {
    fn operator(&self) -> String {
        self.operator.clone()
    }

    fn decide(&mut self, prompt: &Prompt<'_>) -> Result<ApprovalDecision> {
        let matching = |want_digest: bool| {
            self.rules.iter().find(|(k, d, _)| {
                *k == prompt.kind
                    && if want_digest {
                        d.as_ref() == Some(prompt.digest)
                    } else {
                        d.is_none()
                    }
            })
        };
        Ok(matching(true)
            .or_else(|| matching(false))
            .map(|r| r.2)
            .unwrap_or(ApprovalDecision::Reject))
    }
}

/// Queued decisions for tests; an empty queue rejects. Every prompt is kept.
#[derive(Default)]
pub struct ScriptedApprover {
    pub queue: VecDeque<ApprovalDecision>,
    pub seen: Vec<(ApprovalKind, String, ContentUid)>,
}

impl ScriptedApprover {
    pub fn new(decisions: impl IntoIterator<Item = ApprovalDecision>) -> Self {
        ScriptedApprover {
            queue: decisions.into_iter().collect(),
            seen: Vec::new(),
        }
    }

    pub fn push(&mut self, d: ApprovalDecision) {
        self.queue.push_back(d);
    }
}

impl Approver for ScriptedApprover {
    fn operator(&self) -> String {
        "scripted".into()
    }

    fn decide(&mut self, prompt: &Prompt<'_>) -> Result<ApprovalDecision> {
        self.seen
            .push((prompt.kind, prompt.sheet.to_owned(), prompt.digest.clone()));
        Ok(self.queue.pop_front().unwrap_or(ApprovalDecision::Reject))
    }
}
