//! Where study configs and session logs live.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Flat key/value storage of text files grouped by study.
///
/// `write` must be durable when it returns: an acknowledged submit is only
/// acknowledged after its log has been written.
pub trait LogStore: Send + Sync {
    fn write(&self, study: &str, file: &str, contents: &str) -> io::Result<()>;
    fn read(&self, study: &str, file: &str) -> io::Result<Option<String>>;
    fn list(&self, study: &str) -> io::Result<Vec<String>>;
}

/// One directory per study under `root`. Writes go to a temporary file that
/// is synced and then renamed over the target.
#[derive(Debug, Clone)]
pub struct FsLogStore {
    root: PathBuf,
}

impl FsLogStore {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, study: &str, file: &str) -> io::Result<PathBuf> {
        check_name(study)?;
        check_name(file)?;
        Ok(self.root.join(study).join(file))
    }
}

/// Rejects names that could escape the store directory.
fn check_name(name: &str) -> io::Result<()> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(io::Error::new(io::ErrorKind::InvalidInput, format!("bad name {name:?}")))
    }
}

impl LogStore for FsLogStore {
    fn write(&self, study: &str, file: &str, contents: &str) -> io::Result<()> {
        let path = self.path(study, file)?;
        let dir = path.parent().expect("joined path has a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{file}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        fs::File::open(dir)?.sync_all()
    }

    fn read(&self, study: &str, file: &str) -> io::Result<Option<String>> {
        match fs::read_to_string(self.path(study, file)?) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn list(&self, study: &str) -> io::Result<Vec<String>> {
        check_name(study)?;
        let dir = self.root.join(study);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut names = Vec::new();
        for entry in entries {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }
}

/// In-memory store. `fail_next_writes` makes the next n writes fail, for
/// exercising the pause/retry path.
#[derive(Debug, Default)]
pub struct MemLogStore {
    files: Mutex<BTreeMap<(String, String), String>>,
    failures: AtomicUsize,
}

impl MemLogStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fail_next_writes(&self, n: usize) {
        self.failures.store(n, Ordering::SeqCst);
    }
}

impl LogStore for MemLogStore {
    fn write(&self, study: &str, file: &str, contents: &str) -> io::Result<()> {
        let pending = self.failures.load(Ordering::SeqCst);
        if pending > 0 {
            self.failures.store(pending - 1, Ordering::SeqCst);
            return Err(io::Error::other("injected write failure"));
        }
        self.files
            .lock()
            .unwrap()
            .insert((study.to_string(), file.to_string()), contents.to_string());
        Ok(())
    }

    fn read(&self, study: &str, file: &str) -> io::Result<Option<String>> {
        Ok(self
            .files
            .lock()
            .unwrap()
            .get(&(study.to_string(), file.to_string()))
            .cloned())
    }

    fn list(&self, study: &str) -> io::Result<Vec<String>> {
        Ok(self
            .files
            .lock()
            .unwrap()
            .keys()
            .filter(|(s, _)| s == study)
            .map(|(_, f)| f.clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fs_round_trip_and_listing() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsLogStore::new(dir.path()).unwrap();
        store.write("s1", "b.jsonl", "x\n").unwrap();
        store.write("s1", "a.jsonl", "y\n").unwrap();
        store.write("s1", "a.jsonl", "z\n").unwrap();
        assert_eq!(store.read("s1", "a.jsonl").unwrap().as_deref(), Some("z\n"));
        assert_eq!(store.read("s1", "missing").unwrap(), None);
        assert_eq!(store.list("s1").unwrap(), vec!["a.jsonl", "b.jsonl"]);
        assert!(store.list("nope").unwrap().is_empty());
    }

    #[test]
    fn names_cannot_escape() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsLogStore::new(dir.path()).unwrap();
        assert!(store.write("..", "x", "").is_err());
        assert!(store.read("s", "../x").is_err());
    }

    #[test]
    fn injected_failures() {
        let store = MemLogStore::new();
        store.fail_next_writes(1);
        assert!(store.write("s", "f", "a").is_err());
        store.write("s", "f", "b").unwrap();
        assert_eq!(store.read("s", "f").unwrap().as_deref(), Some("b"));
    }
}
