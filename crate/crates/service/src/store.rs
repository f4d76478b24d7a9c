use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use tokio::sync::{OwnedRwLockWriteGuard, RwLock};

use driftlab_core::StreamSession;

use crate::error::ApiError;

pub struct Slot {
    pub session: StreamSession,
    pub revision: u64,
}

/// One session: its state behind a fair lock (writers queue in arrival
/// order) and a flag for the single background projection job.
pub struct Entry {
    pub id: String,
    pub slot: Arc<RwLock<Slot>>,
    pub projecting: AtomicBool,
}

impl Entry {
    pub fn projection_running(&self) -> bool {
        self.projecting.load(Ordering::SeqCst)
    }
}

pub struct Store {
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
    data_dir: Option<PathBuf>,
}

impl Store {
    /// Opens a store, loading every session document found in `data_dir`.
    pub fn open(data_dir: Option<PathBuf>) -> std::io::Result<Store> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &data_dir {
            let dir = dir.join("sessions");
            std::fs::create_dir_all(&dir)?;
            for entry in std::fs::read_dir(&dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                    continue;
                };
                let text = std::fs::read_to_string(&path)?;
                match StreamSession::from_document(&text) {
                    Ok((revision, session)) => {
                        sessions.insert(id.clone(), Arc::new(new_entry(id, session, revision)));
                    }
                    Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable session"),
                }
            }
        }
        Ok(Store {
            sessions: RwLock::new(sessions),
            data_dir,
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    pub async fn get(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session {id:?}")))
    }

    pub async fn list(&self) -> Vec<Arc<Entry>> {
        let mut all: Vec<Arc<Entry>> = self.sessions.read().await.values().cloned().collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all
    }

    pub async fn insert(&self, id: String, session: StreamSession, revision: u64) -> Result<Arc<Entry>, ApiError> {
        let mut map = self.sessions.write().await;
        if map.contains_key(&id) {
            return Err(ApiError::new(
                axum::http::StatusCode::CONFLICT,
                "session_exists",
                format!("session {id:?} already exists"),
            ));
        }
        persist(self.data_dir.as_deref(), &id, &session, revision)?;
        let entry = Arc::new(new_entry(id.clone(), session, revision));
        map.insert(id, entry.clone());
        Ok(entry)
    }

    pub async fn remove(&self, id: &str) -> Result<(), ApiError> {
        let entry = self
            .sessions
            .write()
            .await
            .remove(id)
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session {id:?}")))?;
        // wait out any writer still holding the session
        drop(entry.slot.write().await);
        if let Some(dir) = &self.data_dir {
            let path = session_path(dir, id);
            if path.exists() {
                std::fs::remove_file(path).map_err(|e| ApiError::internal(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub async fn contains(&self, id: &str) -> bool {
        self.sessions.read().await.contains_key(id)
    }
}

fn new_entry(id: String, session: StreamSession, revision: u64) -> Entry {
    Entry {
        id,
        slot: Arc::new(RwLock::new(Slot { session, revision })),
        projecting: AtomicBool::new(false),
    }
}

fn session_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("sessions").join(format!("{id}.json"))
}

/// Writes the session document atomically (temp file, then rename).
pub fn persist(dir: Option<&Path>, id: &str, session: &StreamSession, revision: u64) -> Result<(), ApiError> {
    let Some(dir) = dir else { return Ok(()) };
    let text = session.to_document(revision)?;
    let path = session_path(dir, id);
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text)
        .and_then(|_| std::fs::rename(&tmp, &path))
        .map_err(|e| ApiError::internal(format!("persisting session {id}: {e}")))
}

/// Checks an `If-Match` revision against the current one.
pub fn check_revision(expected: Option<u64>, current: u64) -> Result<(), ApiError> {
    match expected {
        Some(e) if e != current => Err(ApiError::stale_revision(e, current)),
        _ => Ok(()),
    }
}

/// Runs a mutation on the blocking pool while holding the session's write
/// lock, then bumps the revision and persists.
///
/// The closure must leave the session unchanged when it fails.
pub async fn mutate<T, F>(
    store: &Store,
    entry: &Entry,
    expected: Option<u64>,
    f: F,
) -> Result<(u64, T), ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut StreamSession) -> Result<T, ApiError> + Send + 'static,
{
    let mut guard: OwnedRwLockWriteGuard<Slot> = entry.slot.clone().write_owned().await;
    check_revision(expected, guard.revision)?;
    let dir = store.data_dir.clone();
    let id = entry.id.clone();
    tokio::task::spawn_blocking(move || {
        let out = f(&mut guard.session)?;
        guard.revision += 1;
        persist(dir.as_deref(), &id, &guard.session, guard.revision)?;
        Ok((guard.revision, out))
    })
    .await
    .map_err(|e| ApiError::internal(format!("mutation task failed: {e}")))?
}
