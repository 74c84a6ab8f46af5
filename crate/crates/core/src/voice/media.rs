//! Short-lived reply audio, served once by id and then deleted.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use tempfile::NamedTempFile;

use crate::store::{cleanup_temp, CleanupReport};

/// Unfetched reply audio older than this is swept.
pub const DEFAULT_MEDIA_TTL: Duration = Duration::from_secs(600);

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("malformed media id")]
    InvalidId,
    #[error("media i/o failure: {0}")]
    Io(#[from] io::Error),
}

/// 32 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct MediaId(String);

impl MediaId {
    pub fn random() -> Self {
        Self(format!("{:032x}", rand::random::<u128>()))
    }

    pub fn parse(text: &str) -> Result<Self, MediaError> {
        let ok = text.len() == 32 && text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(Self(text.to_string()))
        } else {
            Err(MediaError::InvalidId)
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for MediaId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone)]
pub struct MediaStore {
    dir: PathBuf,
    ttl: Duration,
}

impl MediaStore {
    pub fn new(dir: impl Into<PathBuf>, ttl: Duration) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, ttl })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    fn path(&self, id: &MediaId) -> PathBuf {
        self.dir.join(format!("{id}.wav"))
    }

    /// Stores WAV bytes; the file appears atomically under its final name.
    pub fn put(&self, wav: &[u8]) -> io::Result<MediaId> {
        let id = MediaId::random();
        let mut tmp = NamedTempFile::with_prefix_in(".media-", &self.dir)?;
        tmp.write_all(wav)?;
        tmp.persist(self.path(&id)).map_err(|e| e.error)?;
        Ok(id)
    }

    /// Returns the audio and deletes it. A second fetch, or a fetch of an
    /// unknown id, yields `None`.
    pub fn take(&self, id: &str) -> Result<Option<Vec<u8>>, MediaError> {
        let id = MediaId::parse(id)?;
        let claimed = self.dir.join(format!(".claim-{id}-{:016x}", rand::random::<u64>()));
        // Renaming first makes concurrent fetches race for a single winner.
        match fs::rename(self.path(&id), &claimed) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let bytes = fs::read(&claimed);
        let removed = fs::remove_file(&claimed);
        let bytes = bytes?;
        removed?;
        Ok(Some(bytes))
    }

    /// Deletes reply audio older than the TTL.
    pub fn sweep(&self) -> CleanupReport {
        cleanup_temp(&self.dir, self.ttl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::count_files;

    #[test]
    fn fetch_once() {
        let dir = tempfile::tempdir().unwrap();
        let media = MediaStore::new(dir.path(), DEFAULT_MEDIA_TTL).unwrap();
        let id = media.put(b"RIFF....").unwrap();
        assert_eq!(count_files(dir.path()), 1);
        assert_eq!(media.take(id.as_str()).unwrap().unwrap(), b"RIFF....");
        assert_eq!(count_files(dir.path()), 0);
        assert!(media.take(id.as_str()).unwrap().is_none());
    }

    #[test]
    fn ids_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let media = MediaStore::new(dir.path(), DEFAULT_MEDIA_TTL).unwrap();
        for bad in ["", "../etc/passwd", "ABCDEF0123456789ABCDEF0123456789", "0123"] {
            assert!(matches!(media.take(bad), Err(MediaError::InvalidId)), "{bad}");
        }
        assert!(media.take(&"0".repeat(32)).unwrap().is_none());
    }

    #[test]
    fn sweep_respects_ttl() {
        let dir = tempfile::tempdir().unwrap();
        let keep = MediaStore::new(dir.path(), DEFAULT_MEDIA_TTL).unwrap();
        keep.put(b"a").unwrap();
        assert_eq!(keep.sweep().removed, 0);
        let eager = MediaStore::new(dir.path(), Duration::ZERO).unwrap();
        assert_eq!(eager.sweep().removed, 1);
        assert_eq!(count_files(dir.path()), 0);
    }
}
