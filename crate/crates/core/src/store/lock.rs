use std::fs::{self, File, OpenOptions, TryLockError};
use std::io;
use std::path::Path;

use super::LOCK_FILE;

#[derive(Debug, thiserror::Error)]
pub enum LockError {
    #[error("another process holds the workspace lock ({0})")]
    Held(String),
    #[error("cannot open lock file: {0}")]
    Io(#[from] io::Error),
}

/// Exclusive advisory lock on `.onx/lock`, released on drop (or process
/// exit).
#[derive(Debug)]
pub struct WorkspaceLock {
    _file: File,
}

impl WorkspaceLock {
    pub fn acquire(root: &Path) -> Result<Self, LockError> {
        let path = root.join(LOCK_FILE);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)?;
        match file.try_lock() {
            Ok(()) => Ok(Self { _file: file }),
            Err(TryLockError::WouldBlock) => Err(LockError::Held(path.display().to_string())),
            Err(TryLockError::Error(e)) => Err(LockError::Io(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_acquire_fails_until_drop() {
        let dir = tempfile::tempdir().unwrap();
        let first = WorkspaceLock::acquire(dir.path()).unwrap();
        assert!(matches!(WorkspaceLock::acquire(dir.path()), Err(LockError::Held(_))));
        drop(first);
        WorkspaceLock::acquire(dir.path()).unwrap();
    }
}
