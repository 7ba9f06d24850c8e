//! Registry server: accounts, benchmarks, cubes, datasets, associations,
//! results and the audit chain behind a JSON HTTP API.

pub mod error;
pub mod http;
pub mod service;
pub mod state;
pub mod storage;
pub mod testkit;

pub use error::{status_for, ApiError};
pub use http::router;
pub use service::{build_report, token_hash, Clock, ManualClock, Service, SystemClock};
pub use state::{Mutation, ReplayError, StoredState};
pub use storage::{MemoryStorage, RedbStorage, Storage, StorageError};
