//! State machines for associations and the benchmark lifecycle.
//!
//! Association transitions (authorization is checked before state):
//!
//! | from      | action  | actor                     | to / error           |
//! |-----------|---------|---------------------------|----------------------|
//! | REQUESTED | APPROVE | committee of the benchmark | APPROVED            |
//! | REQUESTED | REJECT  | committee of the benchmark | REJECTED            |
//! | APPROVED  | any     | committee of the benchmark | ILLEGAL_TRANSITION  |
//! | REJECTED  | any     | committee of the benchmark | ILLEGAL_TRANSITION  |
//! | any       | any     | anyone else                | FORBIDDEN           |
//!
//! Benchmark lifecycle:
//!
//! | from        | action   | actor                                  | to / error          |
//! |-------------|----------|----------------------------------------|---------------------|
//! | DRAFT       | ACTIVATE | platform operator                      | OPERATIONAL         |
//! | OPERATIONAL | RETIRE   | platform operator or benchmark committee | RETIRED           |
//! | other       | same     | allowed actor                          | ILLEGAL_TRANSITION  |
//! | any         | any      | anyone else                            | FORBIDDEN           |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::AccountId;
use crate::model::{Association, AssociationState, Benchmark, BenchmarkState, Role, RoleSet};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssociationAction {
    Approve,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkAction {
    Activate,
    Retire,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("illegal transition from {from} on {action}")]
    IllegalTransition { from: String, action: String },
    #[error("{0} may not perform this transition")]
    Forbidden(AccountId),
}

impl TransitionError {
    pub fn code(&self) -> &'static str {
        match self {
            TransitionError::IllegalTransition { .. } => "ILLEGAL_TRANSITION",
            TransitionError::Forbidden(_) => "FORBIDDEN",
        }
    }
}

fn is_committee_of(benchmark: &Benchmark, actor: &AccountId, roles: &RoleSet) -> bool {
    roles.contains(&Role::Committee) && benchmark.committee_id == *actor
}

/// Applies a committee decision to an association, returning the new value.
pub fn transition_association(
    association: &Association,
    action: AssociationAction,
    actor: &AccountId,
    roles: &RoleSet,
    benchmark: &Benchmark,
    at: Timestamp,
) -> Result<Association, TransitionError> {
    if benchmark.id != association.benchmark_id || !is_committee_of(benchmark, actor, roles) {
        return Err(TransitionError::Forbidden(actor.clone()));
    }
    if association.state.is_terminal() {
        return Err(TransitionError::IllegalTransition {
            from: format!("{:?}", association.state).to_uppercase(),
            action: format!("{action:?}").to_uppercase(),
        });
    }
    let mut next = association.clone();
    next.state = match action {
        AssociationAction::Approve => AssociationState::Approved,
        AssociationAction::Reject => AssociationState::Rejected,
    };
    next.decided_by = Some(actor.clone());
    next.decided_at = Some(at);
    Ok(next)
}

/// Moves a benchmark along DRAFT → OPERATIONAL → RETIRED.
pub fn transition_benchmark(
    benchmark: &Benchmark,
    action: BenchmarkAction,
    actor: &AccountId,
    roles: &RoleSet,
) -> Result<Benchmark, TransitionError> {
    let allowed = match action {
        BenchmarkAction::Activate => roles.contains(&Role::PlatformOperator),
        BenchmarkAction::Retire => {
            roles.contains(&Role::PlatformOperator) || is_committee_of(benchmark, actor, roles)
        }
    };
    if !allowed {
        return Err(TransitionError::Forbidden(actor.clone()));
    }
    let to = match (benchmark.state, action) {
        (BenchmarkState::Draft, BenchmarkAction::Activate) => BenchmarkState::Operational,
        (BenchmarkState::Operational, BenchmarkAction::Retire) => BenchmarkState::Retired,
        (from, action) => {
            return Err(TransitionError::IllegalTransition {
                from: format!("{from:?}").to_uppercase(),
                action: format!("{action:?}").to_uppercase(),
            })
        }
    };
    let mut next = benchmark.clone();
    next.state = to;
    Ok(next)
}
