//! One JSON document per session in a directory. Writes go through a
//! temporary file and a rename, so readers always see a whole document.

use std::collections::HashMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{ApiError, ApiResult};
use crate::session::Session;

pub struct Store {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, locks: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().entry(id.to_string()).or_default().clone()
    }

    fn write(&self, session: &Session) -> ApiResult<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, session).map_err(std::io::Error::from)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path(&session.id)).map_err(|e| e.error)?;
        Ok(())
    }

    /// Reads and integrity-checks a session.
    pub fn load(&self, id: &str) -> ApiResult<Session> {
        if !valid_id(id) {
            return Err(ApiError::NotFound(id.to_string()));
        }
        let text = match fs::read_to_string(self.path(id)) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(ApiError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        let session: Session = serde_json::from_str(&text)
            .map_err(|e| ApiError::Corrupt { id: id.to_string(), reason: e.to_string() })?;
        if session.id != id {
            return Err(ApiError::Corrupt { id: id.to_string(), reason: "document id mismatch".into() });
        }
        session.verify().map_err(|reason| ApiError::Corrupt { id: id.to_string(), reason })?;
        Ok(session)
    }

    pub fn insert(&self, session: &Session) -> ApiResult<()> {
        let lock = self.lock_for(&session.id);
        let _guard = lock.lock();
        if self.path(&session.id).exists() {
            return Err(ApiError::Conflict(format!("session {} already exists", session.id)));
        }
        self.write(session)
    }

    /// Loads, modifies, and stores a session under its lock.
    pub fn update<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
        let lock = self.lock_for(id);
        let _guard = lock.lock();
        let mut session = self.load(id)?;
        let out = f(&mut session)?;
        self.write(&session)?;
        Ok(out)
    }

    pub fn delete(&self, id: &str) -> ApiResult<()> {
        if !valid_id(id) {
            return Err(ApiError::NotFound(id.to_string()));
        }
        let lock = self.lock_for(id);
        let _guard = lock.lock();
        match fs::remove_file(self.path(id)) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(ApiError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        }
        self.locks.lock().remove(id);
        Ok(())
    }
}
