use std::io;

use thiserror::Error;

use fedeval_core::api::ErrorDetail;

/// Process exit codes of the `fedeval-agent` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const APPROVAL_DENIED: i32 = 3;
    pub const SERVER_REJECTED: i32 = 4;
    pub const INTEGRITY: i32 = 5;
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{0}")]
    Invalid(String),
    #[error("prep task {task} exited with {exit_code}")]
    PrepFailed { task: String, exit_code: i32 },
    #[error("sanity check rejected the prepared data (exit {exit_code})")]
    SanityCheckFailed { exit_code: i32 },
    #[error("hash mismatch: {0}")]
    HashMismatch(String),
    #[error("server rejected the request: {}: {}", .0.code, .0.message)]
    ServerRejected(ErrorDetail),
    #[error("the operator did not approve")]
    NotApproved,
    #[error("no matching execution approval for {0}")]
    NoApproval(String),
    #[error("authentication failed")]
    AuthFailed,
    #[error("network error: {0}")]
    Network(String),
    #[error("{stage} exited with {exit_code}")]
    TaskFailed { stage: String, exit_code: i32 },
    #[error("{0}")]
    SandboxUnavailable(String),
    #[error("local audit chain is corrupt at seq {0}")]
    ChainCorrupt(u64),
    #[error("cannot parse {0}")]
    Parse(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl AgentError {
    pub fn code(&self) -> String {
        match self {
            AgentError::Invalid(_) => "INVALID_ARGUMENT".into(),
            AgentError::PrepFailed { task, exit_code } => {
                format!("PREP_FAILED({task}, {exit_code})")
            }
            AgentError::SanityCheckFailed { .. } => "SANITY_CHECK_FAILED".into(),
            AgentError::HashMismatch(_) => "HASH_MISMATCH".into(),
            AgentError::ServerRejected(d) => format!("SERVER_REJECTED({})", d.code),
            AgentError::NotApproved => "NOT_APPROVED".into(),
            AgentError::NoApproval(_) => "NO_APPROVAL".into(),
            AgentError::AuthFailed => "AUTH_FAILED".into(),
            AgentError::Network(_) => "NETWORK_ERROR".into(),
            AgentError::TaskFailed { stage, exit_code } => {
                format!("TASK_FAILED({stage}, {exit_code})")
            }
            AgentError::SandboxUnavailable(_) => "SANDBOX_UNAVAILABLE".into(),
            AgentError::ChainCorrupt(seq) => format!("CHAIN_CORRUPT({seq})"),
            AgentError::Parse(_) => "PARSE_ERROR".into(),
            AgentError::InvalidBundle(_) => "INVALID_BUNDLE".into(),
            AgentError::Io(_) => "IO_ERROR".into(),
        }
    }

    /// Server error code for `SERVER_REJECTED`.
    pub fn server_code(&self) -> Option<&str> {
        match self {
            AgentError::ServerRejected(d) => Some(&d.code),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AgentError::Invalid(_)
            | AgentError::PrepFailed { .. }
            | AgentError::SanityCheckFailed { .. }
            | AgentError::Parse(_)
            | AgentError::InvalidBundle(_) => exit::VALIDATION,
            AgentError::NotApproved | AgentError::NoApproval(_) => exit::APPROVAL_DENIED,
            AgentError::ServerRejected(_) | AgentError::AuthFailed => exit::SERVER_REJECTED,
            AgentError::HashMismatch(_) | AgentError::ChainCorrupt(_) => exit::INTEGRITY,
            AgentError::Network(_)
            | AgentError::TaskFailed { .. }
            | AgentError::SandboxUnavailable(_)
            | AgentError::Io(_) => exit::FAILURE,
        }
    }
}

pub type Result<T, E = AgentError> = std::result::Result<T, E>;
