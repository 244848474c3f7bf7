//! Live sessions and their single-writer discipline.
//!
//! Each slot publishes an immutable `Arc<Session>` view. Writers hold the
//! slot's writer lock, mutate a private copy on the blocking pool and then
//! publish it, so readers never wait for training and never see a half-applied
//! submission.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use binlabel_api::{ErrorBody, LabelsOutcome};
use binlabel_core::{Result as CoreResult, Session};
use tokio::sync::{Mutex, OwnedMutexGuard};

use crate::error::ApiError;

#[derive(Debug, Clone)]
pub struct View {
    pub session: Arc<Session>,
    pub training: bool,
    pub submitted: u64,
    pub completed: u64,
    pub last_outcome: Option<LabelsOutcome>,
    pub last_error: Option<ErrorBody>,
}

#[derive(Debug)]
pub struct Slot {
    pub id: String,
    pub async_training: bool,
    writer: Arc<Mutex<()>>,
    view: RwLock<View>,
}

pub type WriteGuard = OwnedMutexGuard<()>;

impl Slot {
    pub fn new(id: String, session: Session, async_training: bool) -> Self {
        Self {
            id,
            async_training,
            writer: Arc::new(Mutex::new(())),
            view: RwLock::new(View {
                session: Arc::new(session),
                training: false,
                submitted: 0,
                completed: 0,
                last_outcome: None,
                last_error: None,
            }),
        }
    }

    pub fn view(&self) -> View {
        self.view.read().expect("view lock").clone()
    }

    pub fn session(&self) -> Arc<Session> {
        self.view.read().expect("view lock").session.clone()
    }

    pub fn update(&self, f: impl FnOnce(&mut View)) {
        f(&mut self.view.write().expect("view lock"));
    }

    /// Synchronous sessions queue writers; asynchronous ones refuse while a
    /// background submission runs so the client knows to poll.
    pub async fn lock_writer(&self) -> Result<WriteGuard, ApiError> {
        if self.async_training {
            self.writer.clone().try_lock_owned().map_err(|_| ApiError::busy(&self.id))
        } else {
            Ok(self.writer.clone().lock_owned().await)
        }
    }

    /// Applies `op` to a copy of the session and publishes it on success.
    /// The caller must hold the writer guard.
    pub async fn apply<T, F>(&self, _guard: &WriteGuard, op: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Session) -> CoreResult<T> + Send + 'static,
    {
        let mut session = Session::clone(&self.session());
        let (session, result) = tokio::task::spawn_blocking(move || {
            let result = op(&mut session);
            (session, result)
        })
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?;
        let value = result?;
        self.update(|v| v.session = Arc::new(session));
        Ok(value)
    }
}

#[derive(Debug, Default)]
pub struct Registry {
    slots: RwLock<HashMap<String, Arc<Slot>>>,
}

impl Registry {
    pub fn insert(&self, slot: Slot) -> Arc<Slot> {
        let slot = Arc::new(slot);
        self.slots
            .write()
            .expect("registry lock")
            .insert(slot.id.clone(), slot.clone());
        slot
    }

    pub fn get(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.slots
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    pub fn remove(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.slots
            .write()
            .expect("registry lock")
            .remove(id)
            .ok_or_else(|| ApiError::not_found(id))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.slots.read().expect("registry lock").keys().cloned().collect();
        ids.sort();
        ids
    }
}
