//! Durable storage of the audit chain, the server's only persisted data.

use std::path::Path;
use std::sync::Mutex;

use redb::{Database, ReadableTable, ReadableTableMetadata, TableDefinition};
use thiserror::Error;

use fedeval_core::AuditEvent;

const EVENTS: TableDefinition<u64, &[u8]> = TableDefinition::new("audit_events");

#[derive(Debug, Error)]
pub enum StorageError {
    /// Someone else appended first.
    #[error("version conflict: store holds {actual} events, expected {expected}")]
    Conflict { expected: u64, actual: u64 },
    #[error("storage: {0}")]
    Backend(String),
}

pub trait Storage: Send + Sync {
    fn load(&self) -> Result<Vec<AuditEvent>, StorageError>;
    /// Appends `event` only if the store holds exactly `event.seq` events.
    fn append(&self, event: &AuditEvent) -> Result<(), StorageError>;
}

#[derive(Debug, Default)]
pub struct MemoryStorage {
    events: Mutex<Vec<AuditEvent>>,
}

impl MemoryStorage {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Storage for MemoryStorage {
    fn load(&self) -> Result<Vec<AuditEvent>, StorageError> {
        Ok(self.events.lock().unwrap().clone())
    }

    fn append(&self, event: &AuditEvent) -> Result<(), StorageError> {
        let mut events = self.events.lock().unwrap();
        if events.len() as u64 != event.seq {
            return Err(StorageError::Conflict {
                expected: event.seq,
                actual: events.len() as u64,
            });
        }
        events.push(event.clone());
        Ok(())
    }
}

pub struct RedbStorage {
    db: Database,
}

fn backend(e: impl std::fmt::Display) -> StorageError {
    StorageError::Backend(e.to_string())
}

impl RedbStorage {
    pub fn open(path: &Path) -> Result<Self, StorageError> {
        let db = Database::create(path).map_err(backend)?;
        let txn = db.begin_write().map_err(backend)?;
        txn.open_table(EVENTS).map_err(backend)?;
        txn.commit().map_err(backend)?;
        Ok(RedbStorage { db })
    }
}

impl Storage for RedbStorage {
    fn load(&self) -> Result<Vec<AuditEvent>, StorageError> {
        let txn = self.db.begin_read().map_err(backend)?;
        let table = txn.open_table(EVENTS).map_err(backend)?;
        let mut out = Vec::new();
        for row in table.iter().map_err(backend)? {
            let (_, value) = row.map_err(backend)?;
            out.push(serde_json::from_slice(value.value()).map_err(backend)?);
        }
        Ok(out)
    }

    fn append(&self, event: &AuditEvent) -> Result<(), StorageError> {
        let bytes = serde_json::to_vec(event).map_err(backend)?;
        let txn = self.db.begin_write().map_err(backend)?;
        {
            let mut table = txn.open_table(EVENTS).map_err(backend)?;
            let len = table.len().map_err(backend)?;
            if len != event.seq {
                return Err(StorageError::Conflict {
                    expected: event.seq,
                    actual: len,
                });
            }
            table.insert(event.seq, bytes.as_slice()).map_err(backend)?;
        }
        txn.commit().map_err(backend)
    }
}
